//! Bundled example instances.
//!
//! Small networks with known or independently checkable behavior, used
//! by the test and acceptance suites and handy for kicking the tires.
//! Everything here is deterministic, including the synthetic demand
//! generator.

use crate::cost::CostFunction;
use crate::demand::Request;
use crate::network::{Edge, RoadNetwork};

fn bpr_net(vertex_count: usize, edges: &[(usize, usize, f64, f64)]) -> RoadNetwork {
    let edges = edges
        .iter()
        .map(|&(t, h, phi, kappa)| Edge::real(t, h, CostFunction::bpr(phi, kappa)))
        .collect();
    RoadNetwork::new(vertex_count, edges).unwrap()
}

/// One passenger stream over a two-vertex cycle. The empty vehicles have
/// exactly one way home, so the rebalanced solution is fully determined.
pub fn two_vertex_cycle() -> (RoadNetwork, Vec<Request>) {
    let net = bpr_net(2, &[(0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0)]);
    (net, vec![Request::new(1.0, 0, 1)])
}

/// The worked five-vertex construction example: a bidirected cycle with
/// one chord pair, and five requests leaving vertex 1 three vehicles in
/// excess while vertices 2 and 3 run short by one and two.
pub fn construction_instance() -> (RoadNetwork, Vec<Request>) {
    let net = bpr_net(
        5,
        &[
            (0, 1, 10.0, 2.0),
            (1, 2, 10.0, 2.0),
            (2, 3, 10.0, 2.0),
            (3, 4, 10.0, 2.0),
            (4, 0, 10.0, 2.0),
            (1, 0, 10.0, 2.0),
            (2, 1, 10.0, 2.0),
            (3, 2, 10.0, 2.0),
            (4, 3, 10.0, 2.0),
            (0, 4, 10.0, 2.0),
            (1, 3, 12.0, 2.0),
            (3, 1, 12.0, 2.0),
        ],
    );
    let requests = vec![
        Request::new(2.0, 0, 1),
        Request::new(1.0, 1, 3),
        Request::new(1.0, 2, 3),
        Request::new(2.0, 3, 0),
        Request::new(2.0, 3, 1),
    ];
    (net, requests)
}

/// Ten-vertex bidirected ring with excess at vertex 5 and shortages at
/// vertices 4 (one hop away) and 0 (five hops away). Cheap dummy times
/// overload the near shortage; the misallocation fades as the dummy time
/// grows, which makes this the bracketing instance for the tuning search.
pub fn ring_instance() -> (RoadNetwork, Vec<Request>) {
    let mut edges = Vec::new();
    for i in 0..10 {
        edges.push((i, (i + 1) % 10, 4.0, 4.0));
        edges.push(((i + 1) % 10, i, 4.0, 4.0));
    }
    let net = bpr_net(10, &edges);
    let requests = vec![Request::new(1.0, 4, 5), Request::new(2.0, 0, 5)];
    (net, requests)
}

/// Twenty-vertex bidirected ring, all excess at vertex 10, shortages at
/// hop distances 1, 8 and 10. The spread of distances makes the
/// unfulfilled fraction strongly sensitive to the dummy time.
pub fn ring20_instance() -> (RoadNetwork, Vec<Request>) {
    let mut edges = Vec::new();
    for i in 0..20 {
        edges.push((i, (i + 1) % 20, 2.0, 4.0));
        edges.push(((i + 1) % 20, i, 2.0, 4.0));
    }
    let net = bpr_net(20, &edges);
    let requests = vec![
        Request::new(1.0, 9, 10),
        Request::new(2.0, 18, 10),
        Request::new(1.0, 0, 10),
    ];
    (net, requests)
}

/// A congested route-choice instance: a nominally fast direct road with
/// almost no capacity against a roomy two-leg detour, plus a return road
/// that pins the rebalancing flow. Congestion-blind routing piles
/// everything onto the direct road; the two-piece affine surrogate
/// misplaces the split less dramatically.
pub fn congested_instance() -> (RoadNetwork, Vec<Request>) {
    let net = bpr_net(
        3,
        &[
            (0, 2, 10.0, 1.0), // direct, fast, tiny
            (0, 1, 6.0, 4.0),  // detour leg one
            (1, 2, 6.0, 4.0),  // detour leg two
            (2, 0, 8.0, 8.0),  // return road for empty vehicles
        ],
    );
    (net, vec![Request::new(4.0, 0, 2)])
}

/// One origin feeding two destinations over dedicated round trips.
/// Origins and destinations are disjoint and every leg is forced, so the
/// rebalancing pattern is identical however it is computed.
pub fn star_instance() -> (RoadNetwork, Vec<Request>) {
    let net = bpr_net(
        3,
        &[
            (0, 1, 2.0, 2.0),
            (1, 0, 2.5, 2.0),
            (0, 2, 3.0, 2.0),
            (2, 0, 3.5, 2.0),
        ],
    );
    let requests = vec![Request::new(1.0, 0, 1), Request::new(1.0, 0, 2)];
    (net, requests)
}

/// A named tiny assignment instance for the oracle-agreement suite.
pub struct TapInstance {
    pub name: &'static str,
    pub network: RoadNetwork,
    pub requests: Vec<Request>,
    /// Generous hop bound for exhaustive path enumeration.
    pub max_hops: usize,
}

/// Ten small instances (at most 8 vertices, 12 edges, 3 requests) with
/// enough route choice to make edge-space and path-space optimization
/// disagree if either were wrong.
#[allow(clippy::vec_init_then_push)]
pub fn tap_suite() -> Vec<TapInstance> {
    let mut suite = Vec::new();

    suite.push(TapInstance {
        name: "parallel-identical",
        network: bpr_net(2, &[(0, 1, 1.0, 1.0), (0, 1, 1.0, 1.0)]),
        requests: vec![Request::new(2.0, 0, 1)],
        max_hops: 1,
    });

    suite.push(TapInstance {
        name: "parallel-asymmetric",
        network: bpr_net(2, &[(0, 1, 1.0, 1.0), (0, 1, 2.0, 1.0)]),
        requests: vec![Request::new(2.0, 0, 1)],
        max_hops: 1,
    });

    suite.push(TapInstance {
        name: "triangle-detour",
        network: bpr_net(3, &[(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0), (0, 2, 2.5, 1.5)]),
        requests: vec![Request::new(3.0, 0, 2)],
        max_hops: 2,
    });

    suite.push(TapInstance {
        name: "three-route",
        network: bpr_net(
            3,
            &[
                (0, 2, 2.5, 1.0),
                (0, 1, 1.0, 1.0),
                (1, 2, 1.0, 1.0),
                (0, 2, 3.0, 2.0),
            ],
        ),
        requests: vec![Request::new(3.0, 0, 2)],
        max_hops: 2,
    });

    suite.push(TapInstance {
        name: "braess-diamond",
        network: bpr_net(
            4,
            &[
                (0, 1, 1.0, 1.0),
                (0, 2, 5.0, 10.0),
                (1, 3, 5.0, 10.0),
                (2, 3, 1.0, 1.0),
                (1, 2, 0.5, 10.0),
            ],
        ),
        requests: vec![Request::new(2.0, 0, 3)],
        max_hops: 3,
    });

    suite.push(TapInstance {
        name: "merge-diverge",
        network: bpr_net(
            6,
            &[
                (0, 2, 1.0, 2.0),
                (1, 2, 1.5, 2.0),
                (2, 3, 1.0, 1.0),
                (2, 3, 1.2, 1.0),
                (3, 4, 2.0, 2.0),
                (3, 5, 1.0, 2.0),
            ],
        ),
        requests: vec![Request::new(1.5, 0, 4), Request::new(1.0, 1, 5)],
        max_hops: 3,
    });

    suite.push(TapInstance {
        name: "grid-2x3",
        network: bpr_net(
            6,
            &[
                (0, 1, 1.0, 1.0),
                (1, 2, 1.0, 1.0),
                (3, 4, 1.0, 1.0),
                (4, 5, 1.0, 1.0),
                (0, 3, 1.2, 1.0),
                (1, 4, 1.2, 1.0),
                (2, 5, 1.2, 1.0),
            ],
        ),
        requests: vec![Request::new(2.0, 0, 5), Request::new(1.0, 3, 5)],
        max_hops: 4,
    });

    suite.push(TapInstance {
        name: "ring5-chord",
        network: bpr_net(
            5,
            &[
                (0, 1, 1.0, 1.0),
                (1, 2, 1.0, 1.0),
                (2, 3, 1.0, 1.0),
                (3, 4, 1.0, 1.0),
                (4, 0, 1.0, 1.0),
                (1, 3, 1.5, 1.0),
            ],
        ),
        requests: vec![Request::new(1.0, 0, 3), Request::new(1.0, 2, 0)],
        max_hops: 5,
    });

    suite.push(TapInstance {
        name: "two-origin-shared",
        network: bpr_net(
            4,
            &[
                (0, 2, 1.0, 1.0),
                (1, 2, 1.0, 1.0),
                (2, 3, 1.0, 2.0),
                (0, 3, 3.0, 2.0),
                (1, 3, 3.0, 2.0),
            ],
        ),
        requests: vec![Request::new(1.0, 0, 3), Request::new(2.0, 1, 3)],
        max_hops: 3,
    });

    suite.push(TapInstance {
        name: "congested-chain",
        network: bpr_net(4, &[(0, 1, 1.0, 0.5), (1, 2, 1.0, 0.5), (2, 3, 1.0, 0.5)]),
        requests: vec![Request::new(2.0, 0, 3)],
        max_hops: 3,
    });

    suite
}

/// Four-neighbor grid with both directions on every link. Free-flow
/// times vary mildly and deterministically across the grid.
pub fn grid_network(rows: usize, cols: usize, kappa: f64) -> RoadNetwork {
    let vertex = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    let mut push_pair = |a: usize, b: usize| {
        let phi = 1.0 + ((a + b) % 3) as f64 * 0.5;
        edges.push(Edge::real(a, b, CostFunction::bpr(phi, kappa)));
        edges.push(Edge::real(b, a, CostFunction::bpr(phi, kappa)));
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                push_pair(vertex(r, c), vertex(r, c + 1));
            }
            if r + 1 < rows {
                push_pair(vertex(r, c), vertex(r + 1, c));
            }
        }
    }
    RoadNetwork::new(rows * cols, edges).unwrap()
}

/// Deterministic pseudo-random demand over a vertex range.
pub fn synthetic_requests(vertex_count: usize, count: usize, seed: u64) -> Vec<Request> {
    let mut rng = SplitMix64(seed);
    let mut requests = Vec::with_capacity(count);
    while requests.len() < count {
        let origin = (rng.next() % vertex_count as u64) as usize;
        let destination = (rng.next() % vertex_count as u64) as usize;
        if origin == destination {
            continue;
        }
        let intensity = 0.25 + (rng.next() % 8) as f64 * 0.25;
        requests.push(Request::new(intensity, origin, destination));
    }
    requests
}

struct SplitMix64(u64);

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}
