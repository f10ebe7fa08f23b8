use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use tapflow::solver::Objective;
use tapflow_cli::io::CostModel;
use tapflow_cli::{run, CliError, Mode, RunConfig};

/// Congestion-aware assignment and fleet-rebalancing solver.
#[derive(Parser, Debug)]
#[command(name = "tapflow", version, about)]
struct Cli {
    /// What to solve.
    #[arg(long, value_enum)]
    mode: ModeArg,

    /// Edge list: lines of "tail head capacity free_flow_time".
    #[arg(long)]
    edges: PathBuf,

    /// Trip table: lines of "origin destination demand".
    #[arg(long)]
    trips: PathBuf,

    /// Travel-time curve used for routing.
    #[arg(long, value_enum, default_value = "bpr")]
    cost: CostArg,

    /// What the routing minimizes.
    #[arg(long, value_enum, default_value = "system-optimum")]
    objective: ObjectiveArg,

    /// BPR polynomial coefficient.
    #[arg(long, default_value_t = 0.15)]
    alpha: f64,

    /// BPR polynomial exponent.
    #[arg(long, default_value_t = 4)]
    beta: u32,

    /// Background traffic as a fraction of each edge's capacity. With
    /// --compare, a comma-separated list sweeps several levels.
    #[arg(long = "gamma-exo", default_value = "0.8", allow_hyphen_values = true)]
    gamma_exo: String,

    /// Free-flow time of the rebalancing drain edges (amod modes).
    #[arg(long = "dummy-L")]
    dummy_l: Option<f64>,

    /// Tune the drain time until the unfulfilled fraction drops below
    /// this target (amod mode; excludes --dummy-L).
    #[arg(long = "target-delta")]
    target_delta: Option<f64>,

    /// Penalty per unit of dropped demand (amod-loss mode).
    #[arg(long = "loss-cost")]
    loss_cost: Option<f64>,

    /// Cost of the bookkeeping edges in the loss expansion.
    #[arg(long)]
    epsilon: Option<f64>,

    /// Iteration cap.
    #[arg(long = "max-iters", default_value_t = 100)]
    max_iters: usize,

    /// Relative-gap stopping tolerance.
    #[arg(long = "rel-gap", default_value_t = 1e-4)]
    rel_gap: f64,

    /// Worker threads (defaults to available parallelism).
    #[arg(long)]
    threads: Option<usize>,

    /// Solution JSON path (stdout when omitted). With --compare, the
    /// comparison CSV path.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Per-iteration trace CSV path.
    #[arg(long)]
    trace: Option<PathBuf>,

    /// Sweep all cost models (and all --gamma-exo values) and emit the
    /// ratio of each re-priced solution to the exact-model optimum.
    #[arg(long)]
    compare: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Tap,
    Amod,
    AmodLoss,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CostArg {
    Bpr,
    BprLinearized,
    PiecewiseAffine,
    FreeFlow,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ObjectiveArg {
    SystemOptimum,
    UserEquilibrium,
}

fn to_config(cli: Cli) -> Result<RunConfig, CliError> {
    let gamma_exo = cli
        .gamma_exo
        .split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| CliError {
                kind: "config",
                message: format!("bad --gamma-exo value {:?}", s.trim()),
            })
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    Ok(RunConfig {
        mode: match cli.mode {
            ModeArg::Tap => Mode::Tap,
            ModeArg::Amod => Mode::Amod,
            ModeArg::AmodLoss => Mode::AmodLoss,
        },
        edges_path: cli.edges,
        trips_path: cli.trips,
        cost_model: match cli.cost {
            CostArg::Bpr => CostModel::Bpr,
            CostArg::BprLinearized => CostModel::BprLinearized,
            CostArg::PiecewiseAffine => CostModel::PiecewiseAffine,
            CostArg::FreeFlow => CostModel::FreeFlow,
        },
        objective: match cli.objective {
            ObjectiveArg::SystemOptimum => Objective::SystemOptimum,
            ObjectiveArg::UserEquilibrium => Objective::UserEquilibrium,
        },
        alpha: cli.alpha,
        beta: cli.beta,
        gamma_exo,
        dummy_time: cli.dummy_l,
        target_delta: cli.target_delta,
        loss_cost: cli.loss_cost,
        epsilon: cli.epsilon,
        max_iters: cli.max_iters,
        rel_gap: cli.rel_gap,
        threads: cli.threads,
        out_path: cli.out,
        trace_path: cli.trace,
        compare: cli.compare,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let err = CliError {
                kind: "usage",
                message: e.to_string(),
            };
            println!("{}", err.to_json());
            return ExitCode::FAILURE;
        }
    };
    let outcome = to_config(cli).and_then(|config| run(&config));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
