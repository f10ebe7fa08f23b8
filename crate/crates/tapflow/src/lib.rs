//! Congestion-aware routing for traffic assignment and autonomous
//! mobility-on-demand fleets.
//!
//! The crate solves the static traffic assignment problem with the
//! Frank-Wolfe method over BPR-style volume-delay functions, and reduces
//! fleet routing with empty-vehicle rebalancing (with or without the
//! option of dropping customers at a penalty) to the same machinery by
//! expanding the graph with a rebalancing sink.
//!
//! The pieces compose bottom-up:
//!
//! - [`cost`]: travel-time functions and their marginals and integrals;
//! - [`network`] / [`demand`]: the road graph, OD requests, and the
//!   per-vertex rebalancing imbalance;
//! - [`pathfinding`]: shortest-path trees and the all-or-nothing
//!   assignment, the solver's direction-finding step;
//! - [`solver`]: the Frank-Wolfe loop with exact line search and a
//!   relative-gap stopping rule;
//! - [`amod`]: the rebalancing reduction, its quality metric, and the
//!   binary search for the dummy-edge time;
//! - [`loss`]: the customer-loss expansion;
//! - [`oracle`]: a brute-force path-space solver for validating all of
//!   the above on tiny instances;
//! - [`fixtures`]: bundled example instances.

pub mod amod;
pub mod cost;
pub mod demand;
pub mod error;
pub mod fixtures;
pub mod loss;
pub mod network;
pub mod oracle;
pub mod pathfinding;
pub mod solver;

pub use amod::{
    build_reduction, delta_unfulfilled, solve_amod, tune_l, AmodSolution, ReducedProblem,
};
pub use cost::{CostFunction, CostTransform};
pub use demand::{compute_imbalance, validate_demand, ImbalanceProfile, Request};
pub use error::Error;
pub use loss::{build_loss_graph, solve_amod_loss, LossGraph, LossSolution};
pub use network::{Edge, EdgeClass, ExogenousLoad, RoadNetwork};
pub use pathfinding::{all_or_nothing, shortest_path, shortest_path_tree, EdgeWeights};
pub use solver::{
    frank_wolfe, AssignmentProblem, FlowVector, Objective, SolverConfig, Termination,
};
