//! Fleet routing when customers may be dropped at a per-unit penalty.
//!
//! The graph expansion couples "drive a passenger, then rebalance" into a
//! single action so that abandoning a request can be priced against
//! executing it. Every destination vertex is split from its outgoing
//! edges by a cheap copy vertex, all vehicles ultimately drain into a
//! sink `n`, and idle vehicles continue over one extra edge `(n, n')`
//! whose constant cost is the loss penalty. The direction-finding step
//! compares, per request, the cheapest execute route against the fixed
//! two-edge idle route and takes the cheaper; the usual step averaging
//! then maintains a per-request idle fraction from which the losses are
//! read off.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::amod::AmodIterationRecord;
use crate::cost::{CostFunction, DEFAULT_LINEARIZE_AT};
use crate::demand::{require_valid_demand, Request};
use crate::error::Error;
use crate::network::{Edge, EdgeClass, ExogenousLoad, RoadNetwork};
use crate::pathfinding::{shortest_path_tree, EdgeWeights, ShortestPathTree};
use crate::solver::{
    frank_wolfe_with, AssignmentProblem, FlowVector, FwDriver, IterationRecord, Objective,
    SolverConfig, Termination,
};

/// The expanded graph for the loss variant, with the edge bookkeeping
/// needed to interpret flows on it.
#[derive(Clone, Debug)]
pub struct LossGraph {
    pub expanded: RoadNetwork,
    /// Drain for all vehicles.
    pub sink: usize,
    /// Final vertex for idle vehicles.
    pub idle_sink: usize,
    /// `(destination vertex, its copy)` pairs, ascending.
    pub dest_copies: Vec<(usize, usize)>,
    /// Original edges whose tail is not a destination.
    pub e_in: Vec<usize>,
    /// Original edges re-rooted at the copy of their destination tail.
    pub e_out: Vec<usize>,
    /// `(i, i')` hand-over edges.
    pub e_between: Vec<usize>,
    /// `(i, n)` drain edges with BPR congestion.
    pub e_end: Vec<usize>,
    /// `(i', i)` return edges for destinations that are also origins.
    pub e_self: Vec<usize>,
    /// `(o, n)` drain edges for origins that are not destinations.
    pub idle_access: Vec<usize>,
    /// The `(n, n')` edge carrying the loss penalty.
    pub loss_edge: usize,
    /// Expanded edge -> original edge for `e_in`/`e_out`, `None` elsewhere.
    pub origin_edge_map: Vec<Option<usize>>,
    /// Per original vertex, the `(v, n)` edge an idle vehicle would take.
    idle_entry: Vec<Option<usize>>,
    pub loss_cost: f64,
    pub epsilon: f64,
    pub dummy_time: f64,
}

impl LossGraph {
    /// The copy vertex for a destination, if `vertex` is one.
    pub fn copy_of(&self, vertex: usize) -> Option<usize> {
        self.dest_copies
            .binary_search_by_key(&vertex, |(v, _)| *v)
            .ok()
            .map(|i| self.dest_copies[i].1)
    }

    /// The `(origin, n)` edge the idle route of a request uses.
    pub fn idle_entry_edge(&self, origin: usize) -> Option<usize> {
        self.idle_entry[origin]
    }
}

/// Build the expanded graph.
///
/// Vertices: originals, then one copy per destination (ascending), then
/// the sink and the idle sink. Original edge indices are preserved; an
/// edge leaving a destination keeps its index but is re-rooted at the
/// copy.
pub fn build_loss_graph(
    network: &RoadNetwork,
    requests: &[Request],
    loss_cost: f64,
    epsilon: f64,
    dummy_time: f64,
) -> Result<LossGraph, Error> {
    assert!(loss_cost >= 0.0, "loss penalty must be nonnegative");
    assert!(epsilon > 0.0, "epsilon must be positive");
    assert!(dummy_time > 0.0, "dummy free-flow time must be positive");

    let n_orig = network.vertex_count();
    let mut destinations: Vec<usize> = requests.iter().map(|r| r.destination).collect();
    destinations.sort_unstable();
    destinations.dedup();
    let mut origins: Vec<usize> = requests.iter().map(|r| r.origin).collect();
    origins.sort_unstable();
    origins.dedup();

    let is_destination = {
        let mut flags = vec![false; n_orig];
        for &d in &destinations {
            flags[d] = true;
        }
        flags
    };
    let is_origin = {
        let mut flags = vec![false; n_orig];
        for &o in &origins {
            flags[o] = true;
        }
        flags
    };

    let dest_copies: Vec<(usize, usize)> = destinations
        .iter()
        .enumerate()
        .map(|(rank, &d)| (d, n_orig + rank))
        .collect();
    let copy_index: HashMap<usize, usize> = dest_copies.iter().copied().collect();
    let sink = n_orig + destinations.len();
    let idle_sink = sink + 1;

    // Arriving vehicles per destination, counting intensity: the drain
    // capacity of each (i, n) edge.
    let mut arriving = vec![0.0; n_orig];
    for r in requests {
        arriving[r.destination] += r.intensity;
    }

    let (alpha, beta) = {
        // Same coefficients as the real edges, defaulting when none are BPR.
        network
            .edges()
            .iter()
            .find_map(|e| match e.cost {
                CostFunction::Bpr { alpha, beta, .. } => Some((alpha, beta)),
                _ => None,
            })
            .unwrap_or((crate::cost::DEFAULT_ALPHA, crate::cost::DEFAULT_BETA))
    };

    let mut edges: Vec<Edge> = Vec::new();
    let mut origin_edge_map: Vec<Option<usize>> = Vec::new();
    let mut e_in = Vec::new();
    let mut e_out = Vec::new();

    for (idx, e) in network.edges().iter().enumerate() {
        if e.class != EdgeClass::Real {
            return Err(Error::InvalidNetwork(
                "the loss expansion applies to a plain road network".into(),
            ));
        }
        let rerooted = copy_index.get(&e.tail);
        let tail = rerooted.copied().unwrap_or(e.tail);
        if rerooted.is_some() {
            e_out.push(edges.len());
        } else {
            e_in.push(edges.len());
        }
        origin_edge_map.push(Some(idx));
        edges.push(Edge {
            tail,
            head: e.head,
            cost: e.cost,
            class: EdgeClass::Real,
        });
    }

    let aux = |tail: usize, head: usize, value: f64| Edge {
        tail,
        head,
        cost: CostFunction::Constant { value },
        class: EdgeClass::Auxiliary,
    };

    let mut e_between = Vec::new();
    for &(d, copy) in &dest_copies {
        e_between.push(edges.len());
        origin_edge_map.push(None);
        edges.push(aux(d, copy, epsilon));
    }

    let mut e_self = Vec::new();
    for &(d, copy) in &dest_copies {
        if is_origin[d] {
            e_self.push(edges.len());
            origin_edge_map.push(None);
            edges.push(aux(copy, d, epsilon));
        }
    }

    let mut e_end = Vec::new();
    let mut idle_entry = vec![None; n_orig];
    for &(d, _) in &dest_copies {
        e_end.push(edges.len());
        idle_entry[d] = Some(edges.len());
        origin_edge_map.push(None);
        edges.push(Edge {
            tail: d,
            head: sink,
            cost: CostFunction::Bpr {
                free_flow: dummy_time,
                capacity: arriving[d],
                alpha,
                beta,
                linearize_at: Some(DEFAULT_LINEARIZE_AT),
            },
            class: EdgeClass::Dummy,
        });
    }

    let mut idle_access = Vec::new();
    for &o in &origins {
        if !is_destination[o] {
            idle_access.push(edges.len());
            idle_entry[o] = Some(edges.len());
            origin_edge_map.push(None);
            edges.push(aux(o, sink, epsilon));
        }
    }

    let loss_edge = edges.len();
    origin_edge_map.push(None);
    edges.push(aux(sink, idle_sink, loss_cost));

    let expanded = RoadNetwork::new(idle_sink + 1, edges)?;
    Ok(LossGraph {
        expanded,
        sink,
        idle_sink,
        dest_copies,
        e_in,
        e_out,
        e_between,
        e_end,
        e_self,
        idle_access,
        loss_edge,
        origin_edge_map,
        idle_entry,
        loss_cost,
        epsilon,
        dummy_time,
    })
}

/// What a request's vehicles do under the current weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RequestChoice {
    Execute,
    Idle,
}

/// The loss variant of the all-or-nothing assignment.
///
/// For each request, price the cheapest execute route (origin to the
/// destination copy, then on to the sink) against the fixed idle route
/// (the origin's drain edge plus the penalty edge) and assign the full
/// intensity to the cheaper; ties execute.
pub fn all_or_nothing_loss(
    graph: &LossGraph,
    weights: &EdgeWeights,
    requests: &[Request],
) -> Result<(FlowVector, Vec<RequestChoice>), Error> {
    let network = &graph.expanded;
    assert_eq!(weights.len(), network.edge_count());

    let mut origins: Vec<usize> = requests.iter().map(|r| r.origin).collect();
    origins.sort_unstable();
    origins.dedup();
    let copies: Vec<usize> = graph.dest_copies.iter().map(|(_, c)| *c).collect();

    let origin_trees: HashMap<usize, ShortestPathTree> = origins
        .par_iter()
        .map(|&o| (o, shortest_path_tree(network, weights, o)))
        .collect();
    let copy_trees: HashMap<usize, ShortestPathTree> = copies
        .par_iter()
        .map(|&c| (c, shortest_path_tree(network, weights, c)))
        .collect();

    let mut flows = FlowVector::zeros(network.edge_count());
    let mut choices = Vec::with_capacity(requests.len());
    for (m, req) in requests.iter().enumerate() {
        let copy = graph
            .copy_of(req.destination)
            .expect("destination has a copy");
        let unreachable = || Error::Unreachable {
            origin: req.origin,
            destination: req.destination,
            request: Some(m),
        };
        let to_copy = origin_trees[&req.origin]
            .path_to(network, copy)
            .ok_or_else(unreachable)?;
        let to_sink = copy_trees[&copy]
            .path_to(network, graph.sink)
            .ok_or_else(unreachable)?;
        let execute_cost = to_copy.cost + to_sink.cost;

        let idle_edge = graph
            .idle_entry_edge(req.origin)
            .expect("every origin has a drain edge");
        let idle_cost = weights[idle_edge] + weights[graph.loss_edge];

        if idle_cost < execute_cost {
            choices.push(RequestChoice::Idle);
            flows.values_mut()[idle_edge] += req.intensity;
            flows.values_mut()[graph.loss_edge] += req.intensity;
        } else {
            choices.push(RequestChoice::Execute);
            for e in to_copy.edges.iter().chain(&to_sink.edges) {
                flows.values_mut()[*e] += req.intensity;
            }
        }
    }
    Ok((flows, choices))
}

#[derive(Clone, Debug)]
pub struct LossSolution {
    /// Flows on the expanded graph.
    pub expanded_flows: FlowVector,
    /// Flows mapped back to original edges.
    pub real_flows: FlowVector,
    /// Idle fraction per request, in `[0, 1]`.
    pub idle_fractions: Vec<f64>,
    /// Lost intensity per request: `idle_fraction * intensity`.
    pub losses: Vec<f64>,
    /// Total loss penalty paid: `loss_cost * sum(losses)`.
    pub loss_penalty: f64,
    /// Exact travel cost over the road edges.
    pub real_cost: f64,
    /// Exact cost over the congested drain edges.
    pub drain_cost: f64,
    pub trace: Vec<AmodIterationRecord>,
    pub termination: Termination,
    pub iterations: usize,
    pub final_gap: f64,
}

/// A generous upper bound on any execute route's weight: every vertex
/// visited at the steepest guarded BPR time plus two drains at capacity.
/// A loss penalty above this makes dropping customers never worthwhile.
pub fn execute_cost_bound(network: &RoadNetwork, dummy_time: f64) -> f64 {
    let (alpha, _) = network
        .edges()
        .iter()
        .find_map(|e| match e.cost {
            CostFunction::Bpr { alpha, beta, .. } => Some((alpha, beta)),
            _ => None,
        })
        .unwrap_or((crate::cost::DEFAULT_ALPHA, crate::cost::DEFAULT_BETA));
    let max_phi = network
        .edges()
        .iter()
        .map(|e| e.cost.free_flow())
        .fold(0.0, f64::max);
    network.vertex_count() as f64 * max_phi * (1.0 + alpha * 5f64.powi(4)) + 2.0 * 1.15 * dummy_time
}

struct LossDriver<'a> {
    graph: &'a LossGraph,
    requests: &'a [Request],
    shift: &'a [f64],
    rho: Vec<f64>,
    pending: Vec<f64>,
    trace: Vec<AmodIterationRecord>,
}

impl LossDriver<'_> {
    fn split_costs(&self, flows: &FlowVector) -> (f64, f64) {
        let mut real = 0.0;
        let mut drain = 0.0;
        for (e, edge) in self.graph.expanded.edges().iter().enumerate() {
            let x = flows.as_slice()[e];
            if x == 0.0 {
                continue;
            }
            match edge.class {
                EdgeClass::Real => {
                    let exact = edge.cost.exact();
                    real += x * exact.shifted(self.shift[e]).travel_time(x);
                }
                EdgeClass::Dummy => {
                    drain += x * edge.cost.exact().travel_time(x);
                }
                EdgeClass::Auxiliary => {}
            }
        }
        (real, drain)
    }
}

impl FwDriver for LossDriver<'_> {
    fn direction(&mut self, weights: &EdgeWeights) -> Result<FlowVector, Error> {
        let (flows, choices) = all_or_nothing_loss(self.graph, weights, self.requests)?;
        self.pending = choices
            .iter()
            .map(|c| match c {
                RequestChoice::Idle => 1.0,
                RequestChoice::Execute => 0.0,
            })
            .collect();
        Ok(flows)
    }

    fn initialized(&mut self, _flows: &FlowVector) {
        self.rho = self.pending.clone();
    }

    fn iterated(&mut self, record: &IterationRecord, flows: &FlowVector) {
        // The same convex averaging the flows get; a zero step (the
        // terminating pass) leaves the fractions untouched.
        for (r, p) in self.rho.iter_mut().zip(&self.pending) {
            *r += record.step_size * (p - *r);
        }
        // Every unit of demand is either executing or idling at every
        // iterate: the booked idle mass must match the penalty-edge flow.
        debug_assert!({
            let booked: f64 = self
                .rho
                .iter()
                .zip(self.requests)
                .map(|(rho, r)| rho * r.intensity)
                .sum();
            let total: f64 = self.requests.iter().map(|r| r.intensity).sum();
            (flows.as_slice()[self.graph.loss_edge] - booked).abs() <= 1e-9 * total.max(1.0)
        });
        let (real_cost, drain_cost) = self.split_costs(flows);
        self.trace.push(AmodIterationRecord {
            iteration: record.iteration,
            step_size: record.step_size,
            objective: record.objective,
            real_cost,
            dummy_cost: drain_cost,
            delta: None,
            relative_gap: record.relative_gap,
            elapsed: record.elapsed,
        });
    }
}

/// Solve the loss variant.
///
/// `epsilon` defaults to `1e-6` times the smallest free-flow time, small
/// enough never to flip a route choice at solver tolerances.
pub fn solve_amod_loss(
    network: &RoadNetwork,
    requests: &[Request],
    exogenous: &ExogenousLoad,
    loss_cost: f64,
    dummy_time: f64,
    epsilon: Option<f64>,
    config: &SolverConfig,
) -> Result<LossSolution, Error> {
    require_valid_demand(network, requests)?;
    let epsilon = epsilon.unwrap_or_else(|| {
        let min_phi = network
            .edges()
            .iter()
            .map(|e| e.cost.free_flow())
            .fold(f64::INFINITY, f64::min);
        1e-6 * if min_phi.is_finite() { min_phi } else { 1.0 }
    });
    let graph = build_loss_graph(network, requests, loss_cost, epsilon, dummy_time)?;

    let exo = match exogenous {
        ExogenousLoad::Uniform(g) => ExogenousLoad::Uniform(*g),
        ExogenousLoad::PerEdge(values) => {
            let mut extended = values.clone();
            extended.resize(graph.expanded.edge_count(), 0.0);
            ExogenousLoad::PerEdge(extended)
        }
    };
    let problem = AssignmentProblem::new(&graph.expanded, &[], &exo, Objective::SystemOptimum)?;

    let shift = problem.shift().to_vec();
    let mut driver = LossDriver {
        graph: &graph,
        requests,
        shift: &shift,
        rho: vec![0.0; requests.len()],
        pending: vec![0.0; requests.len()],
        trace: Vec::new(),
    };
    let result = frank_wolfe_with(&problem, config, None, &mut driver)?;

    let mut real_flows = FlowVector::zeros(network.edge_count());
    for (e, mapped) in graph.origin_edge_map.iter().enumerate() {
        if let Some(orig) = mapped {
            real_flows.values_mut()[*orig] += result.flows.as_slice()[e];
        }
    }
    let losses: Vec<f64> = driver
        .rho
        .iter()
        .zip(requests)
        .map(|(rho, r)| rho * r.intensity)
        .collect();
    let loss_penalty = loss_cost * losses.iter().sum::<f64>();
    let (real_cost, drain_cost) = driver.split_costs(&result.flows);
    let final_gap = driver
        .trace
        .last()
        .map(|r| r.relative_gap)
        .unwrap_or(f64::INFINITY);

    Ok(LossSolution {
        expanded_flows: result.flows,
        real_flows,
        idle_fractions: driver.rho,
        losses,
        loss_penalty,
        real_cost,
        drain_cost,
        trace: if config.trace_enabled {
            driver.trace
        } else {
            Vec::new()
        },
        termination: result.termination,
        iterations: result.iterations,
        final_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amod::solve_amod;
    use crate::fixtures::{star_instance, two_vertex_cycle};

    fn rel_err(got: f64, want: f64) -> f64 {
        (got - want).abs() / want.abs().max(1e-300)
    }

    #[test]
    fn single_request_expansion() {
        let (net, requests) = two_vertex_cycle();
        let graph = build_loss_graph(&net, &requests, 100.0, 1e-6, 96.0).unwrap();
        // One destination copy for vertex 1.
        assert_eq!(graph.dest_copies, vec![(1, 2)]);
        assert_eq!(graph.sink, 3);
        assert_eq!(graph.idle_sink, 4);
        // Edge 0 (0 -> 1) stays rooted; edge 1 (1 -> 0) moves to the copy.
        assert_eq!(graph.e_in, vec![0]);
        assert_eq!(graph.e_out, vec![1]);
        assert_eq!(graph.expanded.edge(1).tail, 2);
        assert_eq!(graph.expanded.edge(1).head, 0);
        // Drain at the destination with capacity = intensity; idle access
        // at the origin; vertex 1 is not an origin so e_self is empty.
        assert_eq!(graph.e_end.len(), 1);
        let end = graph.expanded.edge(graph.e_end[0]);
        assert_eq!((end.tail, end.head), (1, 3));
        assert_eq!(end.cost.capacity(), Some(1.0));
        assert_eq!(graph.idle_access.len(), 1);
        let access = graph.expanded.edge(graph.idle_access[0]);
        assert_eq!((access.tail, access.head), (0, 3));
        assert!(graph.e_self.is_empty());
        // The penalty edge.
        let loss = graph.expanded.edge(graph.loss_edge);
        assert_eq!((loss.tail, loss.head), (3, 4));
        assert_eq!(loss.cost, CostFunction::Constant { value: 100.0 });
    }

    #[test]
    fn disjoint_origins_mean_no_self_edges_and_shared_destinations_sum() {
        let (net, _) = star_instance();
        // Two requests into the same destination: capacities add.
        let requests = vec![Request::new(1.0, 0, 1), Request::new(2.0, 2, 1)];
        let graph = build_loss_graph(&net, &requests, 5.0, 1e-6, 48.0).unwrap();
        assert!(graph.e_self.is_empty());
        assert_eq!(graph.e_end.len(), 1);
        assert_eq!(
            graph.expanded.edge(graph.e_end[0]).cost.capacity(),
            Some(3.0)
        );
    }

    #[test]
    fn self_edges_appear_for_destinations_that_are_origins() {
        // 0 -> 1 and 1 -> 0 demand: both endpoints are origin and
        // destination at once.
        let (net, _) = two_vertex_cycle();
        let requests = vec![Request::new(1.0, 0, 1), Request::new(0.5, 1, 0)];
        let graph = build_loss_graph(&net, &requests, 5.0, 1e-6, 48.0).unwrap();
        assert_eq!(graph.e_self.len(), 2);
        assert!(graph.idle_access.is_empty());
        // Structural guarantee: no copy vertex connects straight to the
        // sink.
        let copies: Vec<usize> = graph.dest_copies.iter().map(|(_, c)| *c).collect();
        for e in graph.expanded.edges() {
            assert!(!(copies.contains(&e.tail) && e.head == graph.sink));
        }
    }

    #[test]
    fn choice_follows_the_cheaper_side() {
        let (net, requests) = two_vertex_cycle();
        // Uniform weights make costs easy to read off.
        let big = build_loss_graph(&net, &requests, 1e6, 1e-6, 96.0).unwrap();
        let w = EdgeWeights::new(
            big.expanded
                .edges()
                .iter()
                .enumerate()
                .map(|(e, edge)| {
                    if e == big.loss_edge {
                        1e6
                    } else {
                        edge.cost.free_flow()
                    }
                })
                .collect(),
        );
        let (_, choices) = all_or_nothing_loss(&big, &w, &requests).unwrap();
        assert_eq!(choices, vec![RequestChoice::Execute]);

        // Free idling flips the decision.
        let zero = build_loss_graph(&net, &requests, 0.0, 1e-6, 96.0).unwrap();
        let w = EdgeWeights::new(
            zero.expanded
                .edges()
                .iter()
                .enumerate()
                .map(|(e, edge)| {
                    if e == zero.loss_edge {
                        0.0
                    } else {
                        edge.cost.free_flow()
                    }
                })
                .collect(),
        );
        let (flows, choices) = all_or_nothing_loss(&zero, &w, &requests).unwrap();
        assert_eq!(choices, vec![RequestChoice::Idle]);
        assert_eq!(flows.as_slice()[zero.loss_edge], 1.0);

        // An exact tie executes. The execute route here is edge 0, the
        // hand-over edge, the re-rooted return edge, and the origin's
        // drain edge (4 + 10 = 14); idling pays the same drain edge plus
        // the penalty edge (4 + 10 = 14).
        let tie = build_loss_graph(&net, &requests, 1.0, 1e-6, 96.0).unwrap();
        let mut weights = vec![0.0; tie.expanded.edge_count()];
        weights[0] = 10.0; // 0 -> 1 carries the whole driving cost
        weights[tie.idle_entry_edge(0).unwrap()] = 4.0;
        weights[tie.loss_edge] = 10.0;
        let (_, choices) =
            all_or_nothing_loss(&tie, &EdgeWeights::new(weights), &requests).unwrap();
        assert_eq!(choices, vec![RequestChoice::Execute]);
    }

    #[test]
    fn through_traffic_crosses_destination_copies() {
        // Chain 0 -> 1 -> 2 -> 0 with destinations {1, 2}: the execute
        // route of the second request passes THROUGH vertex 1, whose
        // outgoing road edge was re-rooted at the copy, so the route must
        // thread the hand-over edge at vertex 1.
        let net = RoadNetwork::new(
            3,
            vec![
                Edge::real(0, 1, CostFunction::bpr(1.0, 2.0)),
                Edge::real(1, 2, CostFunction::bpr(1.0, 2.0)),
                Edge::real(2, 0, CostFunction::bpr(1.0, 2.0)),
            ],
        )
        .unwrap();
        let requests = vec![Request::new(1.0, 0, 1), Request::new(1.0, 0, 2)];
        let graph = build_loss_graph(&net, &requests, 1e6, 1e-6, 96.0).unwrap();
        let weights = EdgeWeights::new(
            graph
                .expanded
                .edges()
                .iter()
                .map(|e| e.cost.free_flow())
                .collect(),
        );
        let (flows, choices) = all_or_nothing_loss(&graph, &weights, &requests).unwrap();
        assert_eq!(
            choices,
            vec![RequestChoice::Execute, RequestChoice::Execute]
        );

        // Mapped back to the original network, request 1 drives 0 -> 1 -> 2
        // and both rebalance legs ride 2 -> 0 or park right away.
        let mut real = vec![0.0; net.edge_count()];
        for (e, mapped) in graph.origin_edge_map.iter().enumerate() {
            if let Some(orig) = mapped {
                real[*orig] += flows.as_slice()[e];
            }
        }
        assert_eq!(real[0], 2.0); // both requests leave vertex 0
        assert!(real[1] >= 1.0); // the through route reaches vertex 2
                                 // The hand-over edge at vertex 1 carries the through traffic and
                                 // the first request's own arrival.
        let between_1 = graph.e_between[0];
        assert_eq!(graph.expanded.edge(between_1).tail, 1);
        assert!(flows.as_slice()[between_1] >= 2.0 - 1e-12);
    }

    #[test]
    fn high_penalty_degenerates_to_plain_rebalancing() {
        for (net, requests) in [two_vertex_cycle(), star_instance()] {
            let config = SolverConfig {
                max_iterations: 2000,
                rel_gap_tolerance: 1e-6,
                ..SolverConfig::default()
            };
            let l = 96.0;
            let plain = solve_amod(&net, &requests, &ExogenousLoad::none(), l, &config).unwrap();
            let penalty = execute_cost_bound(&net, l);
            let lossy = solve_amod_loss(
                &net,
                &requests,
                &ExogenousLoad::none(),
                penalty,
                l,
                None,
                &config,
            )
            .unwrap();
            let total: f64 = requests.iter().map(|r| r.intensity).sum();
            assert!(lossy.losses.iter().sum::<f64>() <= 1e-6 * total);
            assert!(
                rel_err(lossy.real_cost, plain.real_cost) < 0.01,
                "loss {} vs plain {}",
                lossy.real_cost,
                plain.real_cost
            );
            for (a, b) in lossy
                .real_flows
                .as_slice()
                .iter()
                .zip(plain.real_flows.as_slice())
            {
                assert!((a - b).abs() < 0.01 * total.max(1.0));
            }
        }
    }

    #[test]
    fn zero_penalty_drops_everything_on_a_positive_cost_network() {
        let (net, requests) = star_instance();
        let config = SolverConfig::default();
        let sol = solve_amod_loss(
            &net,
            &requests,
            &ExogenousLoad::none(),
            0.0,
            96.0,
            None,
            &config,
        )
        .unwrap();
        let total: f64 = requests.iter().map(|r| r.intensity).sum();
        assert!(sol.losses.iter().sum::<f64>() >= 0.99 * total);
        assert!(sol.real_cost < 1e-9);
        assert_eq!(sol.loss_penalty, 0.0);
    }

    #[test]
    fn loss_crossover_tracks_the_execute_cost() {
        // Execute costs about 5 at free flow (2 out, 3 back, tiny
        // intensity); the penalty sweep crosses it.
        let net = RoadNetwork::new(
            2,
            vec![
                Edge::real(0, 1, CostFunction::bpr(2.0, 1.0)),
                Edge::real(1, 0, CostFunction::bpr(3.0, 1.0)),
            ],
        )
        .unwrap();
        let requests = vec![Request::new(0.01, 0, 1)];
        let config = SolverConfig::default();
        for (penalty, expect_loss) in [
            (1.0, true),
            (3.0, true),
            (4.5, true),
            (5.5, false),
            (7.0, false),
            (20.0, false),
        ] {
            let sol = solve_amod_loss(
                &net,
                &requests,
                &ExogenousLoad::none(),
                penalty,
                96.0,
                None,
                &config,
            )
            .unwrap();
            if expect_loss {
                assert!(
                    (sol.losses[0] - 0.01).abs() < 1e-12,
                    "penalty {penalty}: losses {:?}",
                    sol.losses
                );
            } else {
                assert!(
                    sol.losses[0] < 1e-12,
                    "penalty {penalty}: losses {:?}",
                    sol.losses
                );
            }
        }
    }

    #[test]
    fn idle_bookkeeping_matches_the_penalty_edge_flow() {
        // A mixed instance where some requests idle and others execute.
        let net = RoadNetwork::new(
            4,
            vec![
                Edge::real(0, 1, CostFunction::bpr(1.0, 2.0)),
                Edge::real(1, 0, CostFunction::bpr(1.0, 2.0)),
                Edge::real(2, 3, CostFunction::bpr(40.0, 2.0)),
                Edge::real(3, 2, CostFunction::bpr(40.0, 2.0)),
            ],
        )
        .unwrap();
        let requests = vec![Request::new(1.0, 0, 1), Request::new(1.0, 2, 3)];
        let config = SolverConfig {
            max_iterations: 500,
            ..SolverConfig::default()
        };
        // Penalty between the two execute costs (~2 + eps and ~80 + eps).
        let sol = solve_amod_loss(
            &net,
            &requests,
            &ExogenousLoad::none(),
            30.0,
            96.0,
            None,
            &config,
        )
        .unwrap();
        assert!(sol.losses[0] < 1e-9, "cheap trip should execute");
        assert!((sol.losses[1] - 1.0).abs() < 1e-9, "dear trip should idle");
        let graph = build_loss_graph(&net, &requests, 30.0, 1e-6, 96.0).unwrap();
        let on_penalty_edge = sol.expanded_flows.as_slice()[graph.loss_edge];
        let booked: f64 = sol.losses.iter().sum();
        assert!((on_penalty_edge - booked).abs() <= 1e-9 * booked.max(1.0));
        for (rho, r) in sol.idle_fractions.iter().zip(&requests) {
            assert!(*rho >= 0.0 && *rho <= 1.0);
            let loss = rho * r.intensity;
            assert!(loss >= -1e-12 && loss <= r.intensity + 1e-12);
        }
    }
}
