mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use popflux::par::Exec;

use commands::{CliError, SimulateArgs};
use config::RunConfig;

/// Generate agent-based housing runs, coarse-grain them, and fit a graph flux model.
#[derive(Parser)]
#[command(name = "popflux", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// key=value configuration file; flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Overwrite existing outputs
    #[arg(long, global = true)]
    force: bool,

    /// Worker threads (default: available cores); results do not depend on it
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(flatten)]
    overrides: Overrides,
}

/// Every configuration key, overridable from the command line.
#[derive(Args)]
struct Overrides {
    /// Master seed for every stage
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output root directory
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    n_runs: Option<String>,
    #[arg(long, global = true)]
    years: Option<String>,
    #[arg(long, global = true)]
    n_block_groups: Option<String>,
    /// "auto" or d1,d2,I1,I2
    #[arg(long, global = true)]
    thresholds: Option<String>,
    #[arg(long, global = true)]
    agents_per_representative: Option<String>,
    /// train,val,test fractions
    #[arg(long, global = true)]
    splits: Option<String>,
    /// "complete" or a graph file
    #[arg(long, global = true)]
    topology: Option<String>,
    #[arg(long, global = true)]
    dt: Option<String>,
    /// "normalized" or "literal"
    #[arg(long, global = true)]
    beta: Option<String>,
    /// "unit" or "source-capacity"
    #[arg(long, global = true)]
    flux_scale: Option<String>,
    #[arg(long, global = true)]
    learning_rate: Option<String>,
    #[arg(long, global = true)]
    patience: Option<String>,
    #[arg(long, global = true)]
    max_epochs: Option<String>,
    #[arg(long, global = true)]
    checkpoint_every: Option<String>,
    #[arg(long, global = true)]
    mape_floor: Option<String>,
    #[arg(long, global = true)]
    grad_instances: Option<String>,
    #[arg(long, global = true)]
    grad_tolerance: Option<String>,
    #[arg(long, global = true)]
    grad_eps: Option<String>,
}

impl Overrides {
    fn into_map(self) -> BTreeMap<&'static str, String> {
        [
            ("seed", self.seed),
            ("out", self.out),
            ("n_runs", self.n_runs),
            ("years", self.years),
            ("n_block_groups", self.n_block_groups),
            ("thresholds", self.thresholds),
            ("agents_per_representative", self.agents_per_representative),
            ("splits", self.splits),
            ("topology", self.topology),
            ("dt", self.dt),
            ("beta", self.beta),
            ("flux_scale", self.flux_scale),
            ("learning_rate", self.learning_rate),
            ("patience", self.patience),
            ("max_epochs", self.max_epochs),
            ("checkpoint_every", self.checkpoint_every),
            ("mape_floor", self.mape_floor),
            ("grad_instances", self.grad_instances),
            ("grad_tolerance", self.grad_tolerance),
            ("grad_eps", self.grad_eps),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the agent-based model for every scenario
    Generate,
    /// Aggregate runs onto the 4-node, 3-income-group graph
    Coarsen,
    /// Fit the flux network with early stopping
    Train,
    /// Score the best parameters on each split and export exemplar runs
    Evaluate,
    /// Roll out a trained model from given initial and exogenous data
    Simulate {
        #[arg(long, value_name = "FILE")]
        params: PathBuf,
        /// CSV with columns node,subpop,count
        #[arg(long, value_name = "FILE")]
        x0: PathBuf,
        /// CSV with columns year,node,subpop,G,D,C
        #[arg(long, value_name = "FILE")]
        exogenous: PathBuf,
        #[arg(long, value_name = "N")]
        steps: usize,
        /// Timed repetitions for the median wall time
        #[arg(long, default_value_t = 100)]
        repeats: usize,
    },
    /// Compare reverse-mode gradients with finite differences on random instances
    CheckGrad {
        #[arg(long, hide = true)]
        perturb_coordinate: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config::ConfigError(format!("cannot read {}: {e}", path.display())))?;
            config::parse_file(&text, path)?
        }
        None => BTreeMap::new(),
    };
    let cfg = RunConfig::resolve(file, cli.overrides.into_map())?;
    let exec = match cli.jobs {
        Some(0) => return Err(CliError::Config(config::ConfigError("--jobs must be at least 1".into()))),
        Some(1) => Exec::Sequential,
        _ => Exec::Parallel,
    };
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config::ConfigError(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Generate => commands::generate(&cfg, cli.force, exec),
        Command::Coarsen => commands::coarsen(&cfg, exec),
        Command::Train => commands::train_cmd(&cfg, exec),
        Command::Evaluate => commands::evaluate(&cfg, exec),
        Command::Simulate {
            params,
            x0,
            exogenous,
            steps,
            repeats,
        } => commands::simulate(
            &cfg,
            &SimulateArgs {
                params,
                x0,
                exogenous,
                steps,
                repeats,
            },
        ),
        Command::CheckGrad { perturb_coordinate } => commands::check_grad(&cfg, perturb_coordinate, exec),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
