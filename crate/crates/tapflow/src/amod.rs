//! Reduction of fleet routing with empty-vehicle rebalancing to plain
//! traffic assignment.
//!
//! Vehicles that drop off a passenger must reappear where demand
//! originates, but their destinations are not part of the input. The
//! reduction appends one sink vertex and, for every vertex that runs a
//! vehicle deficit, a dummy edge into the sink whose BPR capacity equals
//! the deficit and whose free-flow time is a large constant `L`. Excess
//! vehicles become ordinary requests targeting the sink. Because the
//! dummy costs are minimized exactly when each dummy edge carries its
//! capacity, a large enough `L` drives the solver toward full
//! rebalancing, and the solution restricted to real edges costs no more
//! than the best fully-rebalanced routing.

use std::time::Duration;

use crate::cost::{CostFunction, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_LINEARIZE_AT};
use crate::demand::{compute_imbalance, require_valid_demand, Request};
use crate::error::Error;
use crate::network::{Edge, EdgeClass, ExogenousLoad, RoadNetwork};
use crate::pathfinding::{all_or_nothing, EdgeWeights};
use crate::solver::{
    frank_wolfe_with, AssignmentProblem, FlowVector, FwDriver, Objective, SolverConfig, Termination,
};

/// Default dummy-edge free-flow time when the caller pins neither a value
/// nor a target unfulfilled fraction.
pub const DEFAULT_DUMMY_TIME: f64 = 96.0;

/// One dummy edge of the expanded graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DummyEdge {
    /// Index in the expanded edge list.
    pub edge: usize,
    /// The shortage vertex it drains into the sink.
    pub vertex: usize,
    /// BPR capacity; equals the vehicle deficit at `vertex`.
    pub capacity: f64,
}

/// The expanded assignment instance plus the bookkeeping needed to map a
/// solution back onto the original network.
#[derive(Clone, Debug)]
pub struct ReducedProblem {
    pub expanded: RoadNetwork,
    pub extended_requests: Vec<Request>,
    pub sink: usize,
    pub dummy_edges: Vec<DummyEdge>,
    pub dummy_time: f64,
    /// Total rebalancing volume; equals the summed dummy capacities.
    pub total_rebalancing: f64,
    /// Expanded edge -> original edge, `None` for dummies.
    pub origin_edge_map: Vec<Option<usize>>,
}

/// The alpha/beta pair real BPR edges use; dummy edges follow suit so the
/// capacity-attracting property of the dummy cost carries over unchanged.
fn network_alpha_beta(network: &RoadNetwork) -> (f64, u32) {
    network
        .edges()
        .iter()
        .find_map(|e| match (e.class, e.cost) {
            (EdgeClass::Real, CostFunction::Bpr { alpha, beta, .. }) => Some((alpha, beta)),
            _ => None,
        })
        .unwrap_or((DEFAULT_ALPHA, DEFAULT_BETA))
}

/// Build the expanded graph and demand. Original vertices and edges keep
/// their indices; the sink and the dummy edges are appended.
pub fn build_reduction(
    network: &RoadNetwork,
    requests: &[Request],
    dummy_time: f64,
) -> Result<ReducedProblem, Error> {
    assert!(dummy_time > 0.0, "dummy free-flow time must be positive");
    let profile = compute_imbalance(network.vertex_count(), requests)?;
    let (alpha, beta) = network_alpha_beta(network);

    let sink = network.vertex_count();
    let mut edges = network.edges().to_vec();
    let mut origin_edge_map: Vec<Option<usize>> = (0..edges.len()).map(Some).collect();
    let mut dummy_edges = Vec::with_capacity(profile.shortage_vertices.len());
    for &vertex in &profile.shortage_vertices {
        let capacity = -profile.r[vertex];
        dummy_edges.push(DummyEdge {
            edge: edges.len(),
            vertex,
            capacity,
        });
        edges.push(Edge {
            tail: vertex,
            head: sink,
            cost: CostFunction::Bpr {
                free_flow: dummy_time,
                capacity,
                alpha,
                beta,
                // Early iterations can pile most of the rebalancing volume
                // onto a few dummy edges; the linear continuation keeps
                // the objective finite without affecting the optimum.
                linearize_at: Some(DEFAULT_LINEARIZE_AT),
            },
            class: EdgeClass::Dummy,
        });
        origin_edge_map.push(None);
    }

    let mut extended_requests = requests.to_vec();
    for &vertex in &profile.excess_vertices {
        extended_requests.push(Request::new(profile.r[vertex], vertex, sink));
    }

    let expanded = RoadNetwork::new(sink + 1, edges)?;
    Ok(ReducedProblem {
        expanded,
        extended_requests,
        sink,
        dummy_edges,
        dummy_time,
        total_rebalancing: profile.total_rebalancing,
        origin_edge_map,
    })
}

/// Fraction of rebalancing demand not met: `|x - kappa|_1 / (2R)`, zero
/// for balanced instances.
pub fn delta_unfulfilled(dummy_flows: &[f64], capacities: &[f64], total_rebalancing: f64) -> f64 {
    debug_assert_eq!(dummy_flows.len(), capacities.len());
    if total_rebalancing == 0.0 {
        return 0.0;
    }
    let l1: f64 = dummy_flows
        .iter()
        .zip(capacities)
        .map(|(x, k)| (x - k).abs())
        .sum();
    l1 / (2.0 * total_rebalancing)
}

/// The conservative dummy-time threshold that provably caps the
/// unfulfilled fraction at `delta`: `upper_bound * count / (2.4 R delta^2)`.
/// In practice far smaller values suffice; see [`tune_l`].
pub fn conservative_l_threshold(
    real_cost_upper_bound: f64,
    total_rebalancing: f64,
    dummy_edge_count: usize,
    delta: f64,
) -> f64 {
    assert!(real_cost_upper_bound > 0.0);
    assert!(total_rebalancing > 0.0);
    assert!(dummy_edge_count > 0);
    assert!(delta > 0.0 && delta <= 1.0);
    real_cost_upper_bound * dummy_edge_count as f64 / (2.4 * total_rebalancing * delta * delta)
}

/// Drop dummy edges and map the remaining flow back onto original edge
/// indices.
pub fn extract_real_flows(reduced: &ReducedProblem, flows: &FlowVector) -> FlowVector {
    debug_assert_eq!(flows.len(), reduced.expanded.edge_count());
    let original_count = reduced
        .origin_edge_map
        .iter()
        .filter_map(|m| m.map(|e| e + 1))
        .max()
        .unwrap_or(0);
    let mut real = FlowVector::zeros(original_count);
    for (e, mapped) in reduced.origin_edge_map.iter().enumerate() {
        if let Some(orig) = mapped {
            real.values_mut()[*orig] += flows.as_slice()[e];
        }
    }
    real
}

/// Per-shortage-vertex rebalancing bookkeeping: `shortfall = flow - capacity`.
#[derive(Clone, Copy, Debug)]
pub struct Shortfall {
    pub vertex: usize,
    pub capacity: f64,
    pub flow: f64,
    pub shortfall: f64,
}

/// One solver pass over an expanded instance, with the cost split into
/// its real and dummy parts.
#[derive(Clone, Debug)]
pub struct AmodIterationRecord {
    pub iteration: usize,
    pub step_size: f64,
    pub objective: f64,
    pub real_cost: f64,
    pub dummy_cost: f64,
    /// Unfulfilled rebalancing fraction; absent for expansions that do
    /// not define one.
    pub delta: Option<f64>,
    pub relative_gap: f64,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct AmodSolution {
    /// Flow on original edges (passengers plus rebalancers).
    pub real_flows: FlowVector,
    /// Flow per dummy edge, aligned with `ReducedProblem::dummy_edges`.
    pub dummy_flows: Vec<f64>,
    /// Total cost over real edges under exact costs, endogenous flow
    /// only, exogenous load as a shift.
    pub real_cost: f64,
    /// Total cost over dummy edges under exact costs.
    pub dummy_cost: f64,
    pub delta: f64,
    pub shortfalls: Vec<Shortfall>,
    pub trace: Vec<AmodIterationRecord>,
    pub termination: Termination,
    pub iterations: usize,
    pub final_gap: f64,
}

impl AmodSolution {
    /// Expanded-space flows, usable as a warm start for another solve
    /// over the same reduction.
    pub fn expanded_flows(&self) -> FlowVector {
        let mut values: Vec<f64> = self.real_flows.as_slice().to_vec();
        values.extend_from_slice(&self.dummy_flows);
        FlowVector::from_values(values)
    }
}

/// Extend the user-facing exogenous load to the expanded edge list.
/// Uniform loads already skip non-real edges; explicit per-edge loads get
/// zeros on the appended edges.
fn extend_exogenous(exogenous: &ExogenousLoad, expanded_edge_count: usize) -> ExogenousLoad {
    match exogenous {
        ExogenousLoad::Uniform(g) => ExogenousLoad::Uniform(*g),
        ExogenousLoad::PerEdge(values) => {
            let mut extended = values.clone();
            extended.resize(expanded_edge_count, 0.0);
            ExogenousLoad::PerEdge(extended)
        }
    }
}

struct AmodDriver<'a> {
    network: &'a RoadNetwork,
    requests: &'a [Request],
    reduced: &'a ReducedProblem,
    shift: &'a [f64],
    trace: Vec<AmodIterationRecord>,
}

impl AmodDriver<'_> {
    fn split_costs(&self, flows: &FlowVector) -> (f64, f64) {
        let mut real = 0.0;
        let mut dummy = 0.0;
        for (e, edge) in self.network.edges().iter().enumerate() {
            let x = flows.as_slice()[e];
            if x == 0.0 {
                continue;
            }
            let exact = edge.cost.exact();
            let cost = x * exact.shifted(self.shift[e]).travel_time(x);
            match edge.class {
                EdgeClass::Dummy => dummy += cost,
                _ => real += cost,
            }
        }
        (real, dummy)
    }

    fn delta_of(&self, flows: &FlowVector) -> f64 {
        let dummy_flows: Vec<f64> = self
            .reduced
            .dummy_edges
            .iter()
            .map(|d| flows.as_slice()[d.edge])
            .collect();
        let capacities: Vec<f64> = self
            .reduced
            .dummy_edges
            .iter()
            .map(|d| d.capacity)
            .collect();
        delta_unfulfilled(&dummy_flows, &capacities, self.reduced.total_rebalancing)
    }
}

impl FwDriver for AmodDriver<'_> {
    fn direction(&mut self, weights: &EdgeWeights) -> Result<FlowVector, Error> {
        all_or_nothing(self.network, weights, self.requests)
    }

    fn iterated(&mut self, record: &crate::solver::IterationRecord, flows: &FlowVector) {
        let (real_cost, dummy_cost) = self.split_costs(flows);
        self.trace.push(AmodIterationRecord {
            iteration: record.iteration,
            step_size: record.step_size,
            objective: record.objective,
            real_cost,
            dummy_cost,
            delta: Some(self.delta_of(flows)),
            relative_gap: record.relative_gap,
            elapsed: record.elapsed,
        });
    }
}

/// Solve the rebalancing problem by building the reduction and running
/// the system-optimum assignment over it.
pub fn solve_amod(
    network: &RoadNetwork,
    requests: &[Request],
    exogenous: &ExogenousLoad,
    dummy_time: f64,
    config: &SolverConfig,
) -> Result<AmodSolution, Error> {
    solve_amod_with_start(network, requests, exogenous, dummy_time, config, None)
}

/// As [`solve_amod`], but starting from a previous solution over the
/// same instance (used by the binary search on the dummy time).
pub fn solve_amod_with_start(
    network: &RoadNetwork,
    requests: &[Request],
    exogenous: &ExogenousLoad,
    dummy_time: f64,
    config: &SolverConfig,
    warm_start: Option<FlowVector>,
) -> Result<AmodSolution, Error> {
    require_valid_demand(network, requests)?;
    let reduced = build_reduction(network, requests, dummy_time)?;
    let exo = extend_exogenous(exogenous, reduced.expanded.edge_count());
    let problem = AssignmentProblem::new(
        &reduced.expanded,
        &reduced.extended_requests,
        &exo,
        Objective::SystemOptimum,
    )?;

    let shift = problem.shift().to_vec();
    let mut driver = AmodDriver {
        network: &reduced.expanded,
        requests: &reduced.extended_requests,
        reduced: &reduced,
        shift: &shift,
        trace: Vec::new(),
    };
    let result = frank_wolfe_with(&problem, config, warm_start, &mut driver)?;

    let real_flows = extract_real_flows(&reduced, &result.flows);
    let dummy_flows: Vec<f64> = reduced
        .dummy_edges
        .iter()
        .map(|d| result.flows.as_slice()[d.edge])
        .collect();
    let capacities: Vec<f64> = reduced.dummy_edges.iter().map(|d| d.capacity).collect();
    let delta = delta_unfulfilled(&dummy_flows, &capacities, reduced.total_rebalancing);
    let shortfalls = reduced
        .dummy_edges
        .iter()
        .zip(&dummy_flows)
        .map(|(d, &flow)| Shortfall {
            vertex: d.vertex,
            capacity: d.capacity,
            flow,
            shortfall: flow - d.capacity,
        })
        .collect();

    let (real_cost, dummy_cost) = {
        let driver_view = AmodDriver {
            network: &reduced.expanded,
            requests: &reduced.extended_requests,
            reduced: &reduced,
            shift: &shift,
            trace: Vec::new(),
        };
        driver_view.split_costs(&result.flows)
    };
    let final_gap = driver
        .trace
        .last()
        .map(|r| r.relative_gap)
        .unwrap_or(f64::INFINITY);

    Ok(AmodSolution {
        real_flows,
        dummy_flows,
        real_cost,
        dummy_cost,
        delta,
        shortfalls,
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

/// Search the dummy free-flow time that meets a target unfulfilled
/// fraction.
///
/// Solves at both bracket ends first, then bisects geometrically (the
/// useful range spans orders of magnitude). Returns the smallest probed
/// value whose solution meets the target, with that solution. Stops
/// after at most 20 solves or once the bracket ratio drops below 1.1.
/// Each probe warm-starts from the previous solution; the probes share
/// one reduction topology, so the flows carry over feasibly as they are.
pub fn tune_l(
    network: &RoadNetwork,
    requests: &[Request],
    exogenous: &ExogenousLoad,
    target_delta: f64,
    config: &SolverConfig,
    bounds: (f64, f64),
) -> Result<(f64, AmodSolution), Error> {
    assert!(
        target_delta > 0.0 && target_delta < 1.0,
        "target must lie in (0, 1)"
    );
    let (l_lo, l_hi) = bounds;
    assert!(l_lo > 0.0 && l_lo < l_hi, "need 0 < L_lo < L_hi");
    const MAX_PROBES: usize = 20;

    let upper = solve_amod(network, requests, exogenous, l_hi, config)?;
    if upper.delta > target_delta {
        return Err(Error::TargetUnreachable {
            target_delta,
            achieved_delta: upper.delta,
            l_hi,
        });
    }
    let mut warm = upper.expanded_flows();
    let lower = solve_amod_with_start(
        network,
        requests,
        exogenous,
        l_lo,
        config,
        Some(warm.clone()),
    )?;
    if lower.delta <= target_delta {
        return Ok((l_lo, lower));
    }
    warm = lower.expanded_flows();

    let mut lo = l_lo;
    let mut hi = l_hi;
    let mut best = (l_hi, upper);
    let mut probes = 2;
    while probes < MAX_PROBES && hi / lo >= 1.1 {
        let mid = (lo * hi).sqrt();
        let solution = solve_amod_with_start(
            network,
            requests,
            exogenous,
            mid,
            config,
            Some(warm.clone()),
        )?;
        warm = solution.expanded_flows();
        probes += 1;
        if solution.delta <= target_delta {
            hi = mid;
            best = (mid, solution);
        } else {
            lo = mid;
        }
    }
    Ok(best)
}
