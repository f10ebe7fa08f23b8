//! Nonnegative-weight shortest paths and the all-or-nothing assignment.
//!
//! The all-or-nothing step is where a Frank-Wolfe iteration spends its
//! time: every request is routed entirely onto its cheapest path under
//! the current gradient weights. Requests sharing an origin are answered
//! from a single shortest-path tree, and trees for different origins run
//! on independent workers. The final accumulation into the flow vector
//! happens in a fixed order so the result is bit-identical regardless of
//! the worker count.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::demand::Request;
use crate::error::Error;
use crate::network::RoadNetwork;
use crate::solver::FlowVector;

pub const INFINITE_DISTANCE: f64 = f64::INFINITY;

/// Per-edge nonnegative weights, indexed in network edge order.
#[derive(Clone, Debug)]
pub struct EdgeWeights(Vec<f64>);

impl EdgeWeights {
    pub fn new(weights: Vec<f64>) -> Self {
        debug_assert!(
            weights.iter().all(|w| *w >= 0.0),
            "edge weights must be nonnegative"
        );
        EdgeWeights(weights)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for EdgeWeights {
    type Output = f64;
    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

/// An origin-to-destination path as an ordered edge list plus its cost.
#[derive(Clone, Debug, PartialEq)]
pub struct PathResult {
    pub edges: Vec<usize>,
    pub cost: f64,
}

/// Distances and parent edges of a shortest-path tree.
#[derive(Clone, Debug)]
pub struct ShortestPathTree {
    pub origin: usize,
    pub distance: Vec<f64>,
    /// Parent edge on a shortest path to each vertex; `None` for the
    /// origin and for unreachable vertices.
    pub parent_edge: Vec<Option<u32>>,
}

impl ShortestPathTree {
    /// Walk parent edges back from `destination`. `None` if unreachable.
    pub fn path_to(&self, network: &RoadNetwork, destination: usize) -> Option<PathResult> {
        if self.distance[destination] == INFINITE_DISTANCE {
            return None;
        }
        let mut edges = Vec::new();
        let mut v = destination;
        while let Some(e) = self.parent_edge[v] {
            edges.push(e as usize);
            v = network.edge(e as usize).tail;
        }
        edges.reverse();
        Some(PathResult {
            edges,
            cost: self.distance[destination],
        })
    }
}

#[derive(Copy, Clone)]
struct HeapEntry {
    cost: f64,
    vertex: usize,
}

/// Four-ary min-heap on the entry cost. Shallower than a binary heap, so
/// the sifts that dominate the label-setting loop touch fewer cache
/// lines. Pop order among equal costs follows insertion mechanics and is
/// deterministic.
#[derive(Default)]
struct QuadHeap {
    data: Vec<HeapEntry>,
}

impl QuadHeap {
    fn clear(&mut self) {
        self.data.clear();
    }

    fn push(&mut self, entry: HeapEntry) {
        self.data.push(entry);
        let mut child = self.data.len() - 1;
        while child > 0 {
            let parent = (child - 1) / 4;
            if self.data[parent].cost <= self.data[child].cost {
                break;
            }
            self.data.swap(parent, child);
            child = parent;
        }
    }

    fn pop(&mut self) -> Option<HeapEntry> {
        let top = *self.data.first()?;
        let last = self.data.pop().expect("nonempty");
        if self.data.is_empty() {
            return Some(top);
        }
        self.data[0] = last;
        let mut parent = 0;
        loop {
            let first_child = 4 * parent + 1;
            if first_child >= self.data.len() {
                break;
            }
            let mut smallest = first_child;
            let end = (first_child + 4).min(self.data.len());
            for child in first_child + 1..end {
                if self.data[child].cost < self.data[smallest].cost {
                    smallest = child;
                }
            }
            if self.data[parent].cost <= self.data[smallest].cost {
                break;
            }
            self.data.swap(parent, smallest);
            parent = smallest;
        }
        Some(top)
    }
}

const NO_PARENT: u32 = u32::MAX;

/// Distance and parent edge of one vertex, packed so a relaxation
/// touches a single cache line.
#[derive(Copy, Clone)]
struct Label {
    distance: f64,
    parent: u32,
}

const UNREACHED: Label = Label {
    distance: INFINITE_DISTANCE,
    parent: NO_PARENT,
};

/// Reusable search state, so batched assignment does not reallocate per
/// origin.
struct SearchBuffers {
    labels: Vec<Label>,
    heap: QuadHeap,
}

impl SearchBuffers {
    fn new(vertex_count: usize) -> Self {
        SearchBuffers {
            labels: vec![UNREACHED; vertex_count],
            heap: QuadHeap::default(),
        }
    }

    fn reset(&mut self) {
        self.labels.fill(UNREACHED);
        self.heap.clear();
    }
}

/// Label-setting single-source shortest paths.
///
/// Among equal-cost relaxations the parent with the smallest edge index
/// wins, which pins down one canonical tree independent of heap order.
pub fn shortest_path_tree(
    network: &RoadNetwork,
    weights: &EdgeWeights,
    origin: usize,
) -> ShortestPathTree {
    assert_eq!(weights.len(), network.edge_count(), "weight vector length");
    let mut buffers = SearchBuffers::new(network.vertex_count());
    let csr_weights = permute_weights(network, weights);
    search_into(&mut buffers, network, &csr_weights, origin, &[]);
    ShortestPathTree {
        origin,
        distance: buffers.labels.iter().map(|l| l.distance).collect(),
        parent_edge: buffers
            .labels
            .iter()
            .map(|l| (l.parent != NO_PARENT).then_some(l.parent))
            .collect(),
    }
}

/// Edge weights permuted into adjacency order, so the relaxation loop
/// streams them instead of gathering.
fn permute_weights(network: &RoadNetwork, weights: &EdgeWeights) -> Vec<f64> {
    network
        .adjacency()
        .iter()
        .map(|out| weights[out.edge as usize])
        .collect()
}

/// Run the label-setting search into reusable buffers. When `targets`
/// (sorted, deduplicated) is nonempty, the search stops once all of them
/// are settled: their distances and parents are final, the rest of the
/// graph may be left unexplored. The stopping point depends only on the
/// inputs, so batched assignment stays deterministic.
fn search_into(
    buffers: &mut SearchBuffers,
    network: &RoadNetwork,
    csr_weights: &[f64],
    origin: usize,
    targets: &[usize],
) {
    buffers.reset();
    let labels = &mut buffers.labels;
    let heap = &mut buffers.heap;
    let offsets = network.offsets();
    let adjacency = network.adjacency();
    let mut remaining = targets.len();

    labels[origin].distance = 0.0;
    heap.push(HeapEntry {
        cost: 0.0,
        vertex: origin,
    });

    while let Some(HeapEntry { cost, vertex }) = heap.pop() {
        if cost > labels[vertex].distance {
            continue; // stale entry
        }
        let span = offsets[vertex] as usize..offsets[vertex + 1] as usize;
        for (out, w) in adjacency[span.clone()].iter().zip(&csr_weights[span]) {
            let head = out.head as usize;
            let next = cost + w;
            match next.partial_cmp(&labels[head].distance) {
                Some(Ordering::Less) => {
                    labels[head] = Label {
                        distance: next,
                        parent: out.edge,
                    };
                    heap.push(HeapEntry {
                        cost: next,
                        vertex: head,
                    });
                }
                // Deterministic tie-break on the parent edge index.
                Some(Ordering::Equal) if out.edge < labels[head].parent => {
                    labels[head].parent = out.edge;
                }
                _ => {}
            }
        }
        if remaining > 0 && targets.binary_search(&vertex).is_ok() {
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
    }
}

/// Cheapest path between two vertices, or `Unreachable`.
pub fn shortest_path(
    network: &RoadNetwork,
    weights: &EdgeWeights,
    origin: usize,
    destination: usize,
) -> Result<PathResult, Error> {
    let tree = shortest_path_tree(network, weights, origin);
    tree.path_to(network, destination)
        .ok_or(Error::Unreachable {
            origin,
            destination,
            request: None,
        })
}

/// Route every request entirely onto its cheapest path and return the
/// aggregated edge flows.
///
/// Requests sharing an origin are answered from one tree. Trees run on
/// independent workers; the per-group contributions are merged in origin
/// order, with requests inside a group kept in input order, so the sum
/// is bit-identical for any worker count.
pub fn all_or_nothing(
    network: &RoadNetwork,
    weights: &EdgeWeights,
    requests: &[Request],
) -> Result<FlowVector, Error> {
    assert_eq!(weights.len(), network.edge_count(), "weight vector length");
    let groups = group_by_origin(requests);
    let csr_weights = permute_weights(network, weights);
    let contributions: Vec<Result<SparseFlows, Error>> = groups
        .par_iter()
        .map_init(
            || GroupScratch::new(network),
            |scratch, group| assign_origin_group(scratch, network, &csr_weights, requests, group),
        )
        .collect();

    let mut flows = FlowVector::zeros(network.edge_count());
    for contribution in contributions {
        for (edge, amount) in contribution? {
            flows.values_mut()[edge as usize] += amount;
        }
    }
    Ok(flows)
}

type SparseFlows = Vec<(u32, f64)>;

struct GroupScratch {
    search: SearchBuffers,
    accumulated: Vec<f64>,
    touched: Vec<u32>,
    targets: Vec<usize>,
}

impl GroupScratch {
    fn new(network: &RoadNetwork) -> Self {
        GroupScratch {
            search: SearchBuffers::new(network.vertex_count()),
            accumulated: vec![0.0; network.edge_count()],
            touched: Vec::new(),
            targets: Vec::new(),
        }
    }
}

struct OriginGroup {
    origin: usize,
    /// Request indices in their original order.
    members: Vec<usize>,
}

fn group_by_origin(requests: &[Request]) -> Vec<OriginGroup> {
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by_key(|&m| (requests[m].origin, m));
    let mut groups: Vec<OriginGroup> = Vec::new();
    for m in order {
        match groups.last_mut() {
            Some(g) if g.origin == requests[m].origin => g.members.push(m),
            _ => groups.push(OriginGroup {
                origin: requests[m].origin,
                members: vec![m],
            }),
        }
    }
    groups
}

fn assign_origin_group(
    scratch: &mut GroupScratch,
    network: &RoadNetwork,
    csr_weights: &[f64],
    requests: &[Request],
    group: &OriginGroup,
) -> Result<SparseFlows, Error> {
    // The search may stop as soon as every destination of the group is
    // settled.
    scratch.targets.clear();
    scratch
        .targets
        .extend(group.members.iter().map(|&m| requests[m].destination));
    scratch.targets.sort_unstable();
    scratch.targets.dedup();
    search_into(
        &mut scratch.search,
        network,
        csr_weights,
        group.origin,
        &scratch.targets,
    );

    scratch.touched.clear();
    for &m in &group.members {
        let req = &requests[m];
        if scratch.search.labels[req.destination].distance == INFINITE_DISTANCE {
            // Leave the accumulator clean for the next group.
            for &e in &scratch.touched {
                scratch.accumulated[e as usize] = 0.0;
            }
            return Err(Error::Unreachable {
                origin: req.origin,
                destination: req.destination,
                request: Some(m),
            });
        }
        let mut v = req.destination;
        loop {
            let e = scratch.search.labels[v].parent;
            if e == NO_PARENT {
                break;
            }
            if scratch.accumulated[e as usize] == 0.0 {
                scratch.touched.push(e);
            }
            scratch.accumulated[e as usize] += req.intensity;
            v = network.edge(e as usize).tail;
        }
    }
    scratch.touched.sort_unstable();
    Ok(scratch
        .touched
        .iter()
        .map(|&e| {
            let amount = scratch.accumulated[e as usize];
            scratch.accumulated[e as usize] = 0.0;
            (e, amount)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostFunction;
    use crate::network::Edge;

    fn net(vertex_count: usize, pairs: &[(usize, usize)]) -> RoadNetwork {
        let edges = pairs
            .iter()
            .map(|&(t, h)| Edge::real(t, h, CostFunction::bpr(1.0, 1.0)))
            .collect();
        RoadNetwork::new(vertex_count, edges).unwrap()
    }

    #[test]
    fn quad_heap_pops_in_cost_order() {
        let mut heap = QuadHeap::default();
        let costs = [5.0, 1.0, 3.0, 3.0, 0.5, 9.0, 2.0, 7.0, 0.5, 4.0];
        for (i, &c) in costs.iter().enumerate() {
            heap.push(HeapEntry { cost: c, vertex: i });
        }
        let mut popped = Vec::new();
        while let Some(e) = heap.pop() {
            popped.push(e.cost);
        }
        let mut sorted = costs.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(popped, sorted);
        assert!(heap.pop().is_none());
    }

    #[test]
    fn single_edge_path() {
        let g = net(2, &[(0, 1)]);
        let w = EdgeWeights::new(vec![5.0]);
        let p = shortest_path(&g, &w, 0, 1).unwrap();
        assert_eq!(p.edges, vec![0]);
        assert_eq!(p.cost, 5.0);
    }

    #[test]
    fn triangle_prefers_the_two_hop_route() {
        // 0->1 (1), 1->2 (1), 0->2 (3): the detour wins.
        let g = net(3, &[(0, 1), (1, 2), (0, 2)]);
        let w = EdgeWeights::new(vec![1.0, 1.0, 3.0]);
        let p = shortest_path(&g, &w, 0, 2).unwrap();
        assert_eq!(p.edges, vec![0, 1]);
        assert_eq!(p.cost, 2.0);

        let tree = shortest_path_tree(&g, &w, 0);
        assert_eq!(tree.distance, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn unreachable_vertex_reports_error() {
        let g = net(3, &[(0, 1)]);
        let w = EdgeWeights::new(vec![1.0]);
        match shortest_path(&g, &w, 0, 2) {
            Err(Error::Unreachable {
                origin: 0,
                destination: 2,
                ..
            }) => {}
            other => panic!("expected Unreachable, got {other:?}"),
        }
    }

    #[test]
    fn star_graph_distances() {
        let g = net(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let w = EdgeWeights::new(vec![1.0; 4]);
        let tree = shortest_path_tree(&g, &w, 0);
        assert_eq!(tree.distance, vec![0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_weights_reach_everything_at_zero() {
        let g = net(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let w = EdgeWeights::new(vec![0.0; 4]);
        let tree = shortest_path_tree(&g, &w, 0);
        assert!(tree.distance.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn tree_satisfies_bellman_conditions() {
        let g = net(
            6,
            &[
                (0, 1),
                (0, 2),
                (1, 3),
                (2, 3),
                (3, 4),
                (1, 4),
                (4, 5),
                (2, 5),
            ],
        );
        let w = EdgeWeights::new(vec![2.0, 1.0, 2.0, 3.0, 1.0, 6.0, 1.0, 9.0]);
        let tree = shortest_path_tree(&g, &w, 0);
        for (idx, e) in g.edges().iter().enumerate() {
            if tree.distance[e.tail].is_finite() {
                assert!(
                    tree.distance[e.head] <= tree.distance[e.tail] + w[idx] + 1e-12,
                    "edge {idx} can still relax"
                );
            }
        }
        for v in 0..g.vertex_count() {
            if let Some(p) = tree.parent_edge[v] {
                let e = g.edge(p as usize);
                assert_eq!(tree.distance[v], tree.distance[e.tail] + w[p as usize]);
            }
        }
    }

    #[test]
    fn all_or_nothing_single_request() {
        let g = net(3, &[(0, 1), (1, 2)]);
        let w = EdgeWeights::new(vec![1.0, 1.0]);
        let flows = all_or_nothing(&g, &w, &[Request::new(3.0, 0, 2)]).unwrap();
        assert_eq!(flows.as_slice(), &[3.0, 3.0]);
    }

    #[test]
    fn all_or_nothing_sums_shared_edges() {
        // Both requests funnel through 1->2.
        let g = net(3, &[(0, 1), (1, 2)]);
        let w = EdgeWeights::new(vec![1.0, 1.0]);
        let flows =
            all_or_nothing(&g, &w, &[Request::new(1.0, 0, 2), Request::new(2.0, 1, 2)]).unwrap();
        assert_eq!(flows.as_slice(), &[1.0, 3.0]);
    }

    #[test]
    fn all_or_nothing_picks_the_cheaper_parallel_edge() {
        let g = net(2, &[(0, 1), (0, 1)]);
        let w = EdgeWeights::new(vec![1.0, 2.0]);
        let flows = all_or_nothing(&g, &w, &[Request::new(5.0, 0, 1)]).unwrap();
        assert_eq!(flows.as_slice(), &[5.0, 0.0]);
    }

    #[test]
    fn equal_cost_ties_go_to_the_smaller_edge_index() {
        let g = net(2, &[(0, 1), (0, 1)]);
        let w = EdgeWeights::new(vec![2.0, 2.0]);
        let flows = all_or_nothing(&g, &w, &[Request::new(1.0, 0, 1)]).unwrap();
        assert_eq!(flows.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn unreachable_request_is_identified() {
        let g = net(3, &[(0, 1)]);
        let w = EdgeWeights::new(vec![1.0]);
        let err = all_or_nothing(&g, &w, &[Request::new(1.0, 0, 1), Request::new(2.0, 1, 2)])
            .unwrap_err();
        assert_eq!(
            err,
            Error::Unreachable {
                origin: 1,
                destination: 2,
                request: Some(1)
            }
        );
    }

    #[test]
    fn assignment_is_identical_across_worker_counts() {
        // A mildly tangled graph and enough requests to exercise several
        // origin groups.
        let g = net(
            7,
            &[
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (4, 5),
                (5, 6),
                (6, 0),
                (0, 3),
                (3, 6),
                (1, 4),
                (4, 0),
                (2, 5),
            ],
        );
        let w = EdgeWeights::new(vec![
            1.0, 2.0, 1.5, 0.5, 2.5, 1.0, 3.0, 2.0, 1.0, 4.0, 0.5, 2.0,
        ]);
        let requests: Vec<Request> = (0..24)
            .map(|i| Request::new(0.1 + (i % 5) as f64 * 0.3, i % 7, (i * 3 + 1) % 7))
            .filter(|r| r.origin != r.destination)
            .collect();

        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| all_or_nothing(&g, &w, &requests).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.as_slice(), four.as_slice());
        // Bit-identical, not merely close.
        for (a, b) in one.as_slice().iter().zip(four.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Divergence of the flow at each vertex must match the demand:
        /// +intensity at the origin, -intensity at the destination.
        #[test]
        fn conservation_of_assigned_flow() {
            let g = net(
                5,
                &[
                    (0, 1),
                    (1, 2),
                    (2, 3),
                    (3, 4),
                    (4, 0),
                    (0, 2),
                    (2, 4),
                    (1, 3),
                ],
            );
            let w = EdgeWeights::new(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.7, 2.1, 0.9]);
            let requests = vec![
                Request::new(1.25, 0, 3),
                Request::new(0.5, 1, 4),
                Request::new(2.0, 2, 0),
            ];
            let flows = all_or_nothing(&g, &w, &requests).unwrap();
            let mut expected = [0.0; 5];
            for r in &requests {
                expected[r.origin] += r.intensity;
                expected[r.destination] -= r.intensity;
            }
            let mut divergence = [0.0; 5];
            for (idx, e) in g.edges().iter().enumerate() {
                divergence[e.tail] += flows.as_slice()[idx];
                divergence[e.head] -= flows.as_slice()[idx];
            }
            for (d, e) in divergence.iter().zip(&expected) {
                assert!((d - e).abs() < 1e-12);
            }
        }

        proptest! {
            #[test]
            fn path_cost_equals_tree_distance(
                weights in proptest::collection::vec(0.0f64..10.0, 8),
                origin in 0usize..5,
                destination in 0usize..5,
            ) {
                prop_assume!(origin != destination);
                let g = net(
                    5,
                    &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2), (2, 4), (1, 3)],
                );
                let w = EdgeWeights::new(weights);
                let tree = shortest_path_tree(&g, &w, origin);
                if let Some(path) = tree.path_to(&g, destination) {
                    let summed: f64 = path.edges.iter().map(|&e| w[e]).sum();
                    prop_assert!((summed - path.cost).abs() < 1e-9);
                    prop_assert_eq!(path.cost, tree.distance[destination]);
                    // chained head-to-tail
                    for pair in path.edges.windows(2) {
                        prop_assert_eq!(g.edge(pair[0]).head, g.edge(pair[1]).tail);
                    }
                }
            }

            #[test]
            fn flows_are_nonnegative(
                weights in proptest::collection::vec(0.0f64..10.0, 8),
            ) {
                let g = net(
                    5,
                    &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2), (2, 4), (1, 3)],
                );
                let w = EdgeWeights::new(weights);
                let requests = vec![Request::new(1.0, 0, 3), Request::new(2.5, 2, 1)];
                let flows = all_or_nothing(&g, &w, &requests).unwrap();
                prop_assert!(flows.as_slice().iter().all(|x| *x >= 0.0));
            }
        }
    }
}
