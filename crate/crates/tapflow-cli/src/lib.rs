//! Batch front end: parse network and demand files, run an assignment or
//! rebalancing solve, and emit a solution JSON plus a per-iteration trace
//! CSV.
//!
//! Headline metrics in the JSON are always re-evaluated with the exact
//! BPR curve built from the input file, whatever cost model the routing
//! step used, so numbers are comparable across runs. The trace CSV shows
//! the solver's own view per iteration.

pub mod io;

use std::fmt;
use std::fs;
use std::path::PathBuf;

use serde_json::{json, Value};

use io::{build_network, parse_edges, parse_trips, CostModel, ParsedEdge};
use tapflow::amod::{solve_amod, tune_l, AmodIterationRecord, AmodSolution, DEFAULT_DUMMY_TIME};
use tapflow::demand::{require_valid_demand, Request};
use tapflow::loss::solve_amod_loss;
use tapflow::network::{ExogenousLoad, RoadNetwork};
use tapflow::solver::{
    exact_cost, frank_wolfe, AssignmentProblem, FlowVector, Objective, SolverConfig, Termination,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Tap,
    Amod,
    AmodLoss,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Tap => "tap",
            Mode::Amod => "amod",
            Mode::AmodLoss => "amod-loss",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub edges_path: PathBuf,
    pub trips_path: PathBuf,
    pub cost_model: CostModel,
    pub objective: Objective,
    pub alpha: f64,
    pub beta: u32,
    /// One value normally; several values sweep the comparison mode.
    pub gamma_exo: Vec<f64>,
    pub dummy_time: Option<f64>,
    pub target_delta: Option<f64>,
    pub loss_cost: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iters: usize,
    pub rel_gap: f64,
    pub threads: Option<usize>,
    pub out_path: Option<PathBuf>,
    pub trace_path: Option<PathBuf>,
    pub compare: bool,
}

/// A failure with a machine-readable kind, rendered as a JSON error
/// object by the binary.
#[derive(Clone, Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            kind: "config",
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind, "message": self.message } })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<io::ParseError> for CliError {
    fn from(e: io::ParseError) -> Self {
        CliError {
            kind: "parse",
            message: e.to_string(),
        }
    }
}

impl From<tapflow::Error> for CliError {
    fn from(e: tapflow::Error) -> Self {
        CliError {
            kind: "solve",
            message: e.to_string(),
        }
    }
}

struct Inputs {
    vertex_count: usize,
    parsed_edges: Vec<ParsedEdge>,
    requests: Vec<Request>,
}

fn load_inputs(config: &RunConfig) -> Result<Inputs, CliError> {
    let read = |path: &PathBuf| {
        fs::read_to_string(path).map_err(|e| CliError {
            kind: "io",
            message: format!("cannot read {}: {e}", path.display()),
        })
    };
    let (vertex_count, parsed_edges) = parse_edges(&read(&config.edges_path)?)?;
    let requests = parse_trips(&read(&config.trips_path)?)?;
    Ok(Inputs {
        vertex_count,
        parsed_edges,
        requests,
    })
}

fn validate(config: &RunConfig) -> Result<(), CliError> {
    match config.mode {
        Mode::Amod => {
            if config.dummy_time.is_some() && config.target_delta.is_some() {
                return Err(CliError::config(
                    "--dummy-L and --target-delta are mutually exclusive",
                ));
            }
            if config.loss_cost.is_some() || config.epsilon.is_some() {
                return Err(CliError::config(
                    "--loss-cost and --epsilon apply only to amod-loss mode",
                ));
            }
        }
        Mode::AmodLoss => {
            if config.loss_cost.is_none() {
                return Err(CliError::config("amod-loss mode requires --loss-cost"));
            }
            if config.target_delta.is_some() {
                return Err(CliError::config("--target-delta applies only to amod mode"));
            }
        }
        Mode::Tap => {
            if config.dummy_time.is_some()
                || config.target_delta.is_some()
                || config.loss_cost.is_some()
                || config.epsilon.is_some()
            {
                return Err(CliError::config(
                    "--dummy-L, --target-delta, --loss-cost and --epsilon do not apply to tap mode",
                ));
            }
        }
    }
    if let Some(l) = config.dummy_time {
        if !l.is_finite() || l <= 0.0 {
            return Err(CliError::config(format!(
                "--dummy-L must be positive, got {l}"
            )));
        }
    }
    if let Some(t) = config.target_delta {
        if !t.is_finite() || t <= 0.0 || t >= 1.0 {
            return Err(CliError::config(format!(
                "--target-delta must lie strictly between 0 and 1, got {t}"
            )));
        }
    }
    if let Some(c) = config.loss_cost {
        if !c.is_finite() || c < 0.0 {
            return Err(CliError::config(format!(
                "--loss-cost must be nonnegative, got {c}"
            )));
        }
    }
    if let Some(e) = config.epsilon {
        if !e.is_finite() || e <= 0.0 {
            return Err(CliError::config(format!(
                "--epsilon must be positive, got {e}"
            )));
        }
    }
    if !config.alpha.is_finite() || config.alpha < 0.0 {
        return Err(CliError::config(format!(
            "--alpha must be nonnegative, got {}",
            config.alpha
        )));
    }
    if config.beta < 1 {
        return Err(CliError::config("--beta must be at least 1"));
    }
    if config.max_iters == 0 {
        return Err(CliError::config("--max-iters must be positive"));
    }
    if !config.rel_gap.is_finite() || config.rel_gap < 0.0 {
        return Err(CliError::config(format!(
            "--rel-gap must be nonnegative, got {}",
            config.rel_gap
        )));
    }
    if config.gamma_exo.is_empty() {
        return Err(CliError::config(
            "at least one --gamma-exo value is required",
        ));
    }
    if !config.compare && config.gamma_exo.len() != 1 {
        return Err(CliError::config(
            "multiple --gamma-exo values are only meaningful with --compare",
        ));
    }
    if config.compare && config.mode == Mode::AmodLoss {
        return Err(CliError::config("--compare supports tap and amod modes"));
    }
    for g in &config.gamma_exo {
        if !g.is_finite() || *g < 0.0 {
            return Err(CliError::config(format!(
                "--gamma-exo must be nonnegative, got {g}"
            )));
        }
    }
    Ok(())
}

fn solver_config(config: &RunConfig) -> SolverConfig {
    SolverConfig {
        max_iterations: config.max_iters,
        rel_gap_tolerance: config.rel_gap,
        line_search_iterations: 64,
        trace_enabled: true,
    }
}

fn termination_str(t: Termination) -> &'static str {
    match t {
        Termination::GapReached => "gap-reached",
        Termination::MaxIterations => "max-iterations",
    }
}

/// Execute the configured run, writing the solution and trace files.
pub fn run(config: &RunConfig) -> Result<(), CliError> {
    validate(config)?;
    let inputs = load_inputs(config)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError {
            kind: "config",
            message: format!("cannot build thread pool: {e}"),
        })?;

    pool.install(|| {
        if config.compare {
            run_compare(config, &inputs)
        } else {
            run_single(config, &inputs)
        }
    })
}

fn run_single(config: &RunConfig, inputs: &Inputs) -> Result<(), CliError> {
    let gamma = config.gamma_exo[0];
    let exo = ExogenousLoad::Uniform(gamma);
    let routing = build_network(
        inputs.vertex_count,
        &inputs.parsed_edges,
        config.cost_model,
        config.alpha,
        config.beta,
    );
    let exact = build_network(
        inputs.vertex_count,
        &inputs.parsed_edges,
        CostModel::Bpr,
        config.alpha,
        config.beta,
    );
    require_valid_demand(&routing, &inputs.requests)?;
    let solver = solver_config(config);

    let (solution_json, trace_csv) = match config.mode {
        Mode::Tap => {
            let problem =
                AssignmentProblem::new(&routing, &inputs.requests, &exo, config.objective)?;
            let result = frank_wolfe(&problem, &solver)?;
            let real_cost = exact_cost(&exact, &exo, &result.flows)?;
            let last = result.trace.last();
            let metrics = json!({
                "real_cost": real_cost,
                "objective": last.map(|r| r.objective).unwrap_or(0.0),
                "iterations": result.iterations,
                "final_gap": last.map(|r| r.relative_gap).unwrap_or(0.0),
                "termination": termination_str(result.termination),
            });
            let body = json!({
                "metadata": metadata(config, gamma, None),
                "metrics": metrics,
                "edges": edges_json(&exact, &exo, &result.flows)?,
            });
            let mut csv = trace_header();
            for r in &result.trace {
                push_row(
                    &mut csv,
                    r.iteration,
                    r.step_size,
                    r.objective,
                    r.total_cost,
                    0.0,
                    None,
                    r.relative_gap,
                    r.elapsed.as_millis(),
                );
            }
            (body, csv)
        }
        Mode::Amod => {
            let (dummy_time, solution) = match config.target_delta {
                Some(target) => {
                    // Geometric bracket spanning the useful range.
                    let bounds = (3.0, 3072.0);
                    let (l, sol) =
                        tune_l(&routing, &inputs.requests, &exo, target, &solver, bounds)?;
                    (l, sol)
                }
                None => {
                    let l = config.dummy_time.unwrap_or(DEFAULT_DUMMY_TIME);
                    let sol = solve_amod(&routing, &inputs.requests, &exo, l, &solver)?;
                    (l, sol)
                }
            };
            let real_cost = exact_cost(&exact, &exo, &solution.real_flows)?;
            let metrics = json!({
                "real_cost": real_cost,
                "dummy_cost": solution.dummy_cost,
                "delta": solution.delta,
                "dummy_time": dummy_time,
                "objective": solution.trace.last().map(|r| r.objective).unwrap_or(0.0),
                "iterations": solution.iterations,
                "final_gap": solution.final_gap,
                "termination": termination_str(solution.termination),
            });
            let body = json!({
                "metadata": metadata(config, gamma, Some(dummy_time)),
                "metrics": metrics,
                "edges": edges_json(&exact, &exo, &solution.real_flows)?,
                "shortfalls": shortfalls_json(&solution),
            });
            (body, amod_trace_csv(&solution.trace))
        }
        Mode::AmodLoss => {
            let loss_cost = config.loss_cost.expect("validated");
            let dummy_time = config.dummy_time.unwrap_or(DEFAULT_DUMMY_TIME);
            let solution = solve_amod_loss(
                &routing,
                &inputs.requests,
                &exo,
                loss_cost,
                dummy_time,
                config.epsilon,
                &solver,
            )?;
            let real_cost = exact_cost(&exact, &exo, &solution.real_flows)?;
            let total_loss: f64 = solution.losses.iter().sum();
            let metrics = json!({
                "real_cost": real_cost,
                "drain_cost": solution.drain_cost,
                "loss_penalty": solution.loss_penalty,
                "total_loss": total_loss,
                "dummy_time": dummy_time,
                "loss_cost": loss_cost,
                "objective": solution.trace.last().map(|r| r.objective).unwrap_or(0.0),
                "iterations": solution.iterations,
                "final_gap": solution.final_gap,
                "termination": termination_str(solution.termination),
            });
            let losses: Vec<Value> = inputs
                .requests
                .iter()
                .enumerate()
                .map(|(m, r)| {
                    json!({
                        "request": m,
                        "origin": r.origin,
                        "destination": r.destination,
                        "intensity": r.intensity,
                        "loss": solution.losses[m],
                        "idle_fraction": solution.idle_fractions[m],
                    })
                })
                .collect();
            let body = json!({
                "metadata": metadata(config, gamma, Some(dummy_time)),
                "metrics": metrics,
                "edges": edges_json(&exact, &exo, &solution.real_flows)?,
                "losses": losses,
            });
            (body, amod_trace_csv(&solution.trace))
        }
    };

    write_outputs(config, &solution_json, &trace_csv)
}

fn metadata(config: &RunConfig, gamma: f64, dummy_time: Option<f64>) -> Value {
    let mut meta = json!({
        "mode": config.mode.as_str(),
        "cost_model": config.cost_model.as_str(),
        "objective": match config.objective {
            Objective::SystemOptimum => "system-optimum",
            Objective::UserEquilibrium => "user-equilibrium",
        },
        "alpha": config.alpha,
        "beta": config.beta,
        "gamma_exo": gamma,
        "max_iters": config.max_iters,
        "rel_gap": config.rel_gap,
    });
    let map = meta.as_object_mut().unwrap();
    if let Some(l) = dummy_time {
        map.insert("dummy_time".into(), json!(l));
    }
    if let Some(t) = config.target_delta {
        map.insert("target_delta".into(), json!(t));
    }
    meta
}

fn edges_json(
    exact: &RoadNetwork,
    exo: &ExogenousLoad,
    flows: &FlowVector,
) -> Result<Vec<Value>, CliError> {
    let shift = exo.expand(exact)?;
    Ok(exact
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let x = flows.as_slice()[e];
            json!({
                "tail": edge.tail,
                "head": edge.head,
                "flow": x,
                "travel_time": edge.cost.shifted(shift[e]).travel_time(x),
            })
        })
        .collect())
}

fn shortfalls_json(solution: &AmodSolution) -> Vec<Value> {
    solution
        .shortfalls
        .iter()
        .map(|s| {
            json!({
                "vertex": s.vertex,
                "capacity": s.capacity,
                "flow": s.flow,
                "shortfall": s.shortfall,
            })
        })
        .collect()
}

fn trace_header() -> String {
    "iter,alpha,objective,real_cost,dummy_cost,delta,rel_gap,elapsed_ms\n".to_string()
}

#[allow(clippy::too_many_arguments)]
fn push_row(
    csv: &mut String,
    iter: usize,
    alpha: f64,
    objective: f64,
    real: f64,
    dummy: f64,
    delta: Option<f64>,
    gap: f64,
    elapsed_ms: u128,
) {
    let delta = delta.map(|d| d.to_string()).unwrap_or_default();
    csv.push_str(&format!(
        "{iter},{alpha},{objective},{real},{dummy},{delta},{gap},{elapsed_ms}\n"
    ));
}

fn amod_trace_csv(trace: &[AmodIterationRecord]) -> String {
    let mut csv = trace_header();
    for r in trace {
        push_row(
            &mut csv,
            r.iteration,
            r.step_size,
            r.objective,
            r.real_cost,
            r.dummy_cost,
            r.delta,
            r.relative_gap,
            r.elapsed.as_millis(),
        );
    }
    csv
}

fn write_outputs(config: &RunConfig, solution: &Value, trace_csv: &str) -> Result<(), CliError> {
    let rendered = serde_json::to_string_pretty(solution).expect("json serialization");
    match &config.out_path {
        Some(path) => fs::write(path, rendered.as_bytes()).map_err(|e| CliError {
            kind: "io",
            message: format!("cannot write {}: {e}", path.display()),
        })?,
        None => println!("{rendered}"),
    }
    if let Some(path) = &config.trace_path {
        fs::write(path, trace_csv.as_bytes()).map_err(|e| CliError {
            kind: "io",
            message: format!("cannot write {}: {e}", path.display()),
        })?;
    }
    Ok(())
}

/// Route under each surrogate cost model, re-price the resulting flows
/// with the exact curve, and report the ratio to the exact-model
/// optimum, one CSV row per (model, background-load) pair.
fn run_compare(config: &RunConfig, inputs: &Inputs) -> Result<(), CliError> {
    let exact = build_network(
        inputs.vertex_count,
        &inputs.parsed_edges,
        CostModel::Bpr,
        config.alpha,
        config.beta,
    );
    require_valid_demand(&exact, &inputs.requests)?;
    let solver = solver_config(config);
    let models = [
        CostModel::Bpr,
        CostModel::BprLinearized,
        CostModel::PiecewiseAffine,
        CostModel::FreeFlow,
    ];

    let mut csv = String::from("cost_model,gamma_exo,real_cost,ratio_vs_opt\n");
    for &gamma in &config.gamma_exo {
        let exo = ExogenousLoad::Uniform(gamma);
        let mut baseline = None;
        for model in models {
            let routing = build_network(
                inputs.vertex_count,
                &inputs.parsed_edges,
                model,
                config.alpha,
                config.beta,
            );
            let real_flows = match config.mode {
                Mode::Tap => {
                    let problem =
                        AssignmentProblem::new(&routing, &inputs.requests, &exo, config.objective)?;
                    frank_wolfe(&problem, &solver)?.flows
                }
                Mode::Amod => {
                    let l = config.dummy_time.unwrap_or(DEFAULT_DUMMY_TIME);
                    solve_amod(&routing, &inputs.requests, &exo, l, &solver)?.real_flows
                }
                Mode::AmodLoss => unreachable!("rejected by validation"),
            };
            let cost = exact_cost(&exact, &exo, &real_flows)?;
            let opt = *baseline.get_or_insert(cost);
            csv.push_str(&format!(
                "{},{gamma},{cost},{}\n",
                model.as_str(),
                cost / opt
            ));
        }
    }

    match &config.out_path {
        Some(path) => fs::write(path, csv.as_bytes()).map_err(|e| CliError {
            kind: "io",
            message: format!("cannot write {}: {e}", path.display()),
        })?,
        None => print!("{csv}"),
    }
    Ok(())
}
