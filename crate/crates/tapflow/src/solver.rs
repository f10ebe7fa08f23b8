//! The Frank-Wolfe loop for traffic assignment.
//!
//! Each iteration evaluates gradient weights at the current flows, routes
//! all demand onto cheapest paths under those weights (the linearized
//! subproblem), measures the relative duality gap, and moves toward the
//! all-or-nothing point by an exactly line-searched step. The feasible
//! set is a product of per-request path polytopes, so every iterate is a
//! convex combination of feasible flows and conservation is preserved for
//! free.

use std::time::{Duration, Instant};

use crate::cost::CostTransform;
use crate::demand::{require_valid_demand, Request};
use crate::error::Error;
use crate::network::{ExogenousLoad, RoadNetwork};
use crate::pathfinding::{all_or_nothing, EdgeWeights};

/// Aggregate nonnegative flow per edge, in network edge order.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowVector(Vec<f64>);

impl FlowVector {
    pub fn zeros(edge_count: usize) -> Self {
        FlowVector(vec![0.0; edge_count])
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        debug_assert!(
            values.iter().all(|x| *x >= 0.0),
            "flows must be nonnegative"
        );
        FlowVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn dot(&self, weights: &EdgeWeights) -> f64 {
        debug_assert_eq!(self.len(), weights.len());
        self.0
            .iter()
            .zip(weights.as_slice())
            .map(|(x, w)| x * w)
            .sum()
    }

    /// `x <- (1 - alpha) x + alpha y`. The two-product form keeps every
    /// component nonnegative in floating point.
    pub fn blend_toward(&mut self, toward: &FlowVector, alpha: f64) {
        debug_assert_eq!(self.len(), toward.len());
        debug_assert!((0.0..=1.0).contains(&alpha));
        let keep = 1.0 - alpha;
        for (x, y) in self.0.iter_mut().zip(&toward.0) {
            *x = keep * *x + alpha * *y;
        }
    }
}

impl From<FlowVector> for Vec<f64> {
    fn from(v: FlowVector) -> Vec<f64> {
        v.0
    }
}

/// What the assignment minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Total travel time `sum x c(x)`; routed under marginal costs.
    SystemOptimum,
    /// The user-equilibrium potential `sum ∫ c`; routed under raw times.
    UserEquilibrium,
}

impl Objective {
    pub fn transform(self) -> CostTransform {
        match self {
            Objective::SystemOptimum => CostTransform::Marginal,
            Objective::UserEquilibrium => CostTransform::Raw,
        }
    }
}

/// An immutable assignment instance: network, demand, background load and
/// the objective flavor. Construction validates the demand.
pub struct AssignmentProblem<'a> {
    network: &'a RoadNetwork,
    requests: &'a [Request],
    shift: Vec<f64>,
    objective: Objective,
}

impl<'a> AssignmentProblem<'a> {
    pub fn new(
        network: &'a RoadNetwork,
        requests: &'a [Request],
        exogenous: &ExogenousLoad,
        objective: Objective,
    ) -> Result<Self, Error> {
        require_valid_demand(network, requests)?;
        let shift = exogenous.expand(network)?;
        Ok(AssignmentProblem {
            network,
            requests,
            shift,
            objective,
        })
    }

    pub fn network(&self) -> &'a RoadNetwork {
        self.network
    }

    pub fn requests(&self) -> &'a [Request] {
        self.requests
    }

    pub fn objective_kind(&self) -> Objective {
        self.objective
    }

    /// Exogenous flow per edge.
    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    fn edge_weight(&self, edge: usize, flow: f64) -> f64 {
        let shifted = self.network.edge(edge).cost.shifted(self.shift[edge]);
        match self.objective {
            Objective::SystemOptimum => shifted.marginal(flow),
            Objective::UserEquilibrium => shifted.travel_time(flow),
        }
    }
}

/// The objective value at `flows`: the Beckmann sum under the problem's
/// transform, with each edge shifted by its exogenous load. Under
/// `SystemOptimum` this equals `sum_e x_e c_e(x_e)` identically.
pub fn objective(problem: &AssignmentProblem, flows: &FlowVector) -> f64 {
    debug_assert_eq!(flows.len(), problem.network.edge_count());
    let transform = problem.objective.transform();
    problem
        .network
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            edge.cost
                .shifted(problem.shift[e])
                .beckmann(flows.as_slice()[e], transform)
        })
        .sum()
}

/// Total travel cost `sum_e x_e c_e(x_e + shift_e)` evaluated with the
/// exact (unlinearized) cost functions, so reported numbers stay
/// comparable across runs regardless of objective guards.
pub fn total_cost(problem: &AssignmentProblem, flows: &FlowVector) -> f64 {
    total_cost_on(problem.network, &problem.shift, flows)
}

/// Evaluate `sum_e x_e c_e(x_e + shift_e)` with exact costs on an
/// arbitrary network, e.g. to re-price flows routed under a surrogate
/// cost model.
pub fn exact_cost(
    network: &RoadNetwork,
    exogenous: &ExogenousLoad,
    flows: &FlowVector,
) -> Result<f64, Error> {
    let shift = exogenous.expand(network)?;
    Ok(total_cost_on(network, &shift, flows))
}

pub(crate) fn total_cost_on(network: &RoadNetwork, shift: &[f64], flows: &FlowVector) -> f64 {
    network
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let exact = edge.cost.exact();
            flows.as_slice()[e] * exact.shifted(shift[e]).travel_time(flows.as_slice()[e])
        })
        .sum()
}

/// Per-edge linearization weights at `flows`: marginal costs under
/// `SystemOptimum`, raw travel times under `UserEquilibrium`.
pub fn gradient_weights(problem: &AssignmentProblem, flows: &FlowVector) -> EdgeWeights {
    debug_assert_eq!(flows.len(), problem.network.edge_count());
    let weights = (0..problem.network.edge_count())
        .map(|e| {
            let w = problem.edge_weight(e, flows.as_slice()[e]);
            // Negative weights cannot arise from the supported cost
            // variants; clamp anyway so the label-setting search stays
            // sound if a custom cost slips through.
            debug_assert!(w >= 0.0, "negative gradient weight {w} on edge {e}");
            w.max(0.0)
        })
        .collect();
    EdgeWeights::new(weights)
}

/// Exact line search on the segment from `x` to `y`: bisection on the
/// directional derivative `g(a) = sum_e w_e(x_e + a d_e) d_e`, `d = y - x`.
/// Returns 0 when the direction is not a descent direction and 1 when the
/// derivative stays nonpositive over the whole segment.
pub fn line_search(
    problem: &AssignmentProblem,
    x: &FlowVector,
    y: &FlowVector,
    iterations: usize,
) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let moving: Vec<(usize, f64, f64)> = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .enumerate()
        .filter(|(_, (xe, ye))| xe != ye)
        .map(|(e, (xe, ye))| (e, *xe, ye - xe))
        .collect();
    if moving.is_empty() {
        return 0.0;
    }
    let slope = |alpha: f64| -> f64 {
        moving
            .iter()
            .map(|&(e, xe, de)| problem.edge_weight(e, xe + alpha * de) * de)
            .sum()
    };
    if slope(0.0) >= 0.0 {
        return 0.0;
    }
    if slope(1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        let g = slope(mid);
        if g == 0.0 {
            return mid;
        }
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Normalized duality gap `(w.x - w.y) / w.x`, where `y` minimizes `w.y`
/// over the feasible set. Zero when `w.x` vanishes. Clamped at zero so
/// rounding can never report a negative gap.
pub fn relative_gap(x: &FlowVector, y: &FlowVector, weights: &EdgeWeights) -> f64 {
    let wx = x.dot(weights);
    if wx == 0.0 {
        return 0.0;
    }
    let wy = y.dot(weights);
    ((wx - wy) / wx).max(0.0)
}

/// All-or-nothing assignment at zero endogenous flow: every request on
/// its cheapest route under free-flow times shifted by the exogenous
/// load.
pub fn initial_solution(problem: &AssignmentProblem) -> Result<FlowVector, Error> {
    let zero = FlowVector::zeros(problem.network.edge_count());
    let weights = gradient_weights(problem, &zero);
    all_or_nothing(problem.network, &weights, problem.requests)
}

/// Solver knobs. The defaults follow the observation that the objective,
/// cost and unfulfilled-fraction curves plateau after a few dozen
/// iterations.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub rel_gap_tolerance: f64,
    pub line_search_iterations: usize,
    pub trace_enabled: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 100,
            rel_gap_tolerance: 1e-4,
            line_search_iterations: 64,
            trace_enabled: true,
        }
    }
}

/// One completed loop pass. `objective` and `total_cost` are evaluated at
/// the post-step iterate; `relative_gap` is the gap that justified the
/// step (or termination).
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    pub step_size: f64,
    pub objective: f64,
    pub total_cost: f64,
    pub relative_gap: f64,
    pub elapsed: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    GapReached,
    MaxIterations,
}

#[derive(Debug)]
pub struct FwResult {
    pub flows: FlowVector,
    pub trace: Vec<IterationRecord>,
    pub termination: Termination,
    /// Objective of the starting point, before any step.
    pub initial_objective: f64,
    pub iterations: usize,
}

/// Supplies descent directions to the Frank-Wolfe loop and observes its
/// progress. The plain solver routes requests with all-or-nothing; graph
/// expansions plug in their own routing and bookkeeping.
pub trait FwDriver {
    /// The linearized-subproblem minimizer under `weights`.
    fn direction(&mut self, weights: &EdgeWeights) -> Result<FlowVector, Error>;

    /// Called once with the starting flows.
    fn initialized(&mut self, _flows: &FlowVector) {}

    /// Called once per loop pass, after the step (if any) was applied.
    /// `record.step_size` is zero for the terminating pass.
    fn iterated(&mut self, _record: &IterationRecord, _flows: &FlowVector) {}
}

struct AonDriver<'a> {
    network: &'a RoadNetwork,
    requests: &'a [Request],
}

impl FwDriver for AonDriver<'_> {
    fn direction(&mut self, weights: &EdgeWeights) -> Result<FlowVector, Error> {
        all_or_nothing(self.network, weights, self.requests)
    }
}

/// Run the loop with a custom driver and optional warm start. The warm
/// start must be feasible for the same constraints; when absent the
/// driver's direction at zero flow is used, which is exactly the
/// free-flow all-or-nothing assignment.
pub fn frank_wolfe_with<D: FwDriver>(
    problem: &AssignmentProblem,
    config: &SolverConfig,
    warm_start: Option<FlowVector>,
    driver: &mut D,
) -> Result<FwResult, Error> {
    assert!(
        config.max_iterations >= 1,
        "max_iterations must be positive"
    );
    let start = Instant::now();
    let edge_count = problem.network.edge_count();

    let mut x = match warm_start {
        Some(x0) => {
            assert_eq!(x0.len(), edge_count, "warm start has the wrong shape");
            x0
        }
        None => {
            let w0 = gradient_weights(problem, &FlowVector::zeros(edge_count));
            driver.direction(&w0)?
        }
    };
    driver.initialized(&x);
    let initial_objective = objective(problem, &x);

    let mut trace = Vec::new();
    let mut iteration = 0;
    loop {
        let weights = gradient_weights(problem, &x);
        let direction = driver.direction(&weights)?;
        let gap = relative_gap(&x, &direction, &weights);

        if gap <= config.rel_gap_tolerance {
            let record = IterationRecord {
                iteration,
                step_size: 0.0,
                objective: objective(problem, &x),
                total_cost: total_cost(problem, &x),
                relative_gap: gap,
                elapsed: start.elapsed(),
            };
            driver.iterated(&record, &x);
            if config.trace_enabled {
                trace.push(record);
            }
            return Ok(FwResult {
                flows: x,
                trace,
                termination: Termination::GapReached,
                initial_objective,
                iterations: iteration + 1,
            });
        }

        let alpha = line_search(problem, &x, &direction, config.line_search_iterations);
        x.blend_toward(&direction, alpha);
        let record = IterationRecord {
            iteration,
            step_size: alpha,
            objective: objective(problem, &x),
            total_cost: total_cost(problem, &x),
            relative_gap: gap,
            elapsed: start.elapsed(),
        };
        driver.iterated(&record, &x);
        if config.trace_enabled {
            trace.push(record);
        }

        iteration += 1;
        if iteration >= config.max_iterations {
            return Ok(FwResult {
                flows: x,
                trace,
                termination: Termination::MaxIterations,
                initial_objective,
                iterations: iteration,
            });
        }
    }
}

/// Solve the assignment problem with the standard all-or-nothing
/// direction finder.
pub fn frank_wolfe(problem: &AssignmentProblem, config: &SolverConfig) -> Result<FwResult, Error> {
    let mut driver = AonDriver {
        network: problem.network,
        requests: problem.requests,
    };
    frank_wolfe_with(problem, config, None, &mut driver)
}
