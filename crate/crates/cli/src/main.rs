mod artifact;
mod commands;
mod graph;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use adsat_core::{Base, NegationMode};

use crate::graph::GraphArgs;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
    #[error("{}: {1}", .0.display())]
    Io(PathBuf, std::io::Error),
    #[error("{0}")]
    Degenerate(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Run(_) | CliError::Io(..) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "adsat", version = artifact::VERSION, about = "Adversarial K-SAT: cavity methods, exact counting, annealing")]
struct Cli {
    /// Directory for artifacts when `--output` is not given.
    #[arg(long, global = true, env = "ADSAT_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Artifact path, overriding the default name inside `--out-dir`.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with status 3 when a run is flagged as numerically degenerate.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Belief propagation and Bethe entropy on one instance.
    Bp(BpArgs),
    /// Survey propagation and complexity on one instance.
    Sp(SpArgs),
    /// Complexity of balanced Poisson instances along an alpha grid.
    SpScan(SpScanArgs),
    /// Large-deviation curve by population dynamics.
    Ldev(LdevArgs),
    /// Exact model count.
    Count(CountArgs),
    /// Empirical large-deviation histogram from exact counts.
    Eldf(EldfArgs),
    /// Anneal the negations of one formula towards unsatisfiability.
    Anneal(AnnealArgs),
    /// Success probability of annealing over random regular formulas.
    Ps(PsArgs),
    /// Factorized and instance entropies of regular formulas.
    Table1(Table1Args),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceFormat {
    Json,
    Dimacs,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum, default_value_t = InstanceFormat::Json)]
    pub format: InstanceFormat,
}

#[derive(Debug, Args, Serialize)]
pub struct BpArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, default_value_t = 0.2)]
    pub damping: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_sweeps: usize,
    /// Also average the entropy over the last W sweeps.
    #[arg(long, value_name = "W")]
    pub average_window: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SpArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, default_value_t = 0.2)]
    pub damping: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_sweeps: usize,
    #[arg(long, value_name = "W", default_value_t = 100)]
    pub average_window: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SpScanArgs {
    /// Explicit grid, e.g. `3.3,3.35,3.4`.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["alpha_min", "alpha_max"])]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3.30)]
    pub alpha_min: f64,
    #[arg(long, default_value_t = 3.50)]
    pub alpha_max: f64,
    #[arg(long, default_value_t = 0.02)]
    pub alpha_step: f64,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub damping: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_sweeps: usize,
    #[arg(long, value_name = "W", default_value_t = 100)]
    pub average_window: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct LdevArgs {
    /// Regular ensemble with variable degree L.
    #[arg(long, value_name = "L", conflicts_with_all = ["poisson_ensemble", "instance"])]
    pub regular_ensemble: Option<usize>,
    /// One Poisson graph of density ALPHA with `--n` variables.
    #[arg(long, value_name = "ALPHA", conflicts_with = "instance", requires = "n")]
    pub poisson_ensemble: Option<f64>,
    /// A fixed graph from an instance file (its negations are ignored).
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value = "bp")]
    pub base: Base,
    /// Legendre parameters, comma separated (default: 0, ±1, ±2, ±5, …, ±100).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1000)]
    pub population: usize,
    #[arg(long, default_value_t = 2)]
    pub candidates: usize,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1000)]
    pub measure_sweeps: usize,
    #[arg(long, default_value_t = 10)]
    pub measure_every: usize,
    /// Samples per estimate (0: the population size).
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    #[arg(long, default_value_t = 2)]
    pub max_doublings: usize,
    /// Restrict to balanced negation-configurations.
    #[arg(long)]
    pub balanced: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct CountArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_name = "SECONDS")]
    pub timeout: Option<f64>,
    #[arg(long)]
    pub max_nodes: Option<u64>,
    /// Check the count against full enumeration (N <= 25).
    #[arg(long)]
    pub brute_force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EldfArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.01)]
    pub bin_width: f64,
    /// Sample balanced negation-configurations only.
    #[arg(long)]
    pub balanced: bool,
    /// Per-sample counting timeout.
    #[arg(long, value_name = "SECONDS")]
    pub timeout: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleArg {
    Metropolis,
    LiteralPrinted,
}

#[derive(Debug, Args, Serialize)]
pub struct AnnealParams {
    /// Factor applied to beta every `--steps-per-rate` MC steps.
    #[arg(long, default_value_t = 1.1)]
    pub rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta0: f64,
    #[arg(long, default_value_t = 10)]
    pub steps_per_rate: usize,
    #[arg(long, default_value = "random")]
    pub init: NegationMode,
    #[arg(long, value_enum, default_value_t = RuleArg::Metropolis)]
    pub rule: RuleArg,
    #[arg(long)]
    pub max_mc_steps: Option<usize>,
    /// Per-count timeout.
    #[arg(long, value_name = "SECONDS")]
    pub timeout: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct AnnealArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub params: AnnealParams,
}

#[derive(Debug, Args, Serialize)]
pub struct PsArgs {
    /// Variable degrees, as a range `6..8` (inclusive) or a list `6,8,14`.
    #[arg(long = "L", value_parser = parse_degrees)]
    pub degrees: Degrees,
    /// Formula sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub params: AnnealParams,
}

#[derive(Debug, Args, Serialize)]
pub struct Table1Args {
    /// Degrees, as a range `2..14` (inclusive) or a list `2,4,8`.
    #[arg(long = "L", default_value = "2..14", value_parser = parse_degrees)]
    pub degrees: Degrees,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Also run BP on one random-negation instance of N variables per L.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub damping: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
pub struct Degrees(pub Vec<usize>);

fn parse_degrees(s: &str) -> Result<Degrees, String> {
    let bad = |t: &str| format!("bad degree '{t}'");
    let out: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad(a))?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad(b))?;
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad(t))).collect::<Result<_, _>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(format!("degree list '{s}' must be non-empty and positive"));
    }
    Ok(Degrees(out))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let ctx = commands::Context { sink: artifact::Sink { dir: cli.out_dir, output: cli.output }, strict: cli.strict };
    match &cli.command {
        Command::Gen(a) => commands::gen(&ctx, a),
        Command::Bp(a) => commands::bp(&ctx, a),
        Command::Sp(a) => commands::sp(&ctx, a),
        Command::SpScan(a) => commands::sp_scan(&ctx, a),
        Command::Ldev(a) => commands::ldev(&ctx, a),
        Command::Count(a) => commands::count(&ctx, a),
        Command::Eldf(a) => commands::eldf(&ctx, a),
        Command::Anneal(a) => commands::anneal(&ctx, a),
        Command::Ps(a) => commands::ps(&ctx, a),
        Command::Table1(a) => commands::table1(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adsat: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
