//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 solver failure,
//! 4 I/O error. `PACBOUND_WORKERS` sets the worker-pool size (default: all
//! cores).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use pacbound::bounds::Method;
use pacbound::core_math::{psi_star, LossVector, SolverTolerances};
use pacbound::harness::{self, HarnessError};
use pacbound::montecarlo::{run_algorithm1, McConfig};
use pacbound::scenarios::gen_gaussian_erf;

#[derive(Parser)]
#[command(
    name = "pacbound",
    about = "Anytime-valid PAC-Bayes bound toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the optimal log-wealth for one loss vector and candidate mean
    PsiStar(PsiStarArgs),
    /// Run a configured sweep over (method, n, repetition) cells
    Experiment(ExperimentArgs),
    /// Collapse a results CSV into one (method, n) series row each
    Aggregate(AggregateArgs),
    /// Run the block Monte Carlo bound on the Gaussian scenario directly
    Mc(McArgs),
    /// Compute every applicable bound for a finite loss matrix given as JSON
    Bound(BoundArgs),
}

#[derive(Args)]
struct PsiStarArgs {
    /// Comma-separated losses in [0,1]
    #[arg(long)]
    losses: String,
    /// Candidate mean in [0,1]
    #[arg(long)]
    mu: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    /// Results CSV produced by `experiment`
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path (stdout when omitted)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    /// Sample size of the underlying dataset
    #[arg(long)]
    n: u64,
    /// Total failure probability; the block procedure runs at delta_total/3
    #[arg(long, default_value_t = 0.15)]
    delta_total: f64,
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    #[arg(long, default_value_t = 1024)]
    block_size: usize,
    /// Markov multiplier C; default chosen so C^-blocks = delta
    #[arg(long)]
    multiplier: Option<f64>,
    #[arg(long, default_value_t = 0.25)]
    posterior_variance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BoundArgs {
    /// JSON file: {"atoms":[{"weight":..,"losses":[..]},..],
    /// "kl_post_prior":.., "delta":..}
    #[arg(long)]
    input: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundFile {
    atoms: Vec<BoundFileAtom>,
    kl_post_prior: f64,
    delta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundFileAtom {
    weight: f64,
    losses: Vec<f64>,
}

enum CliError {
    Usage(String),
    Solver(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Solver(m) | CliError::Io(m) => m,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io(_) => CliError::Io(e.to_string()),
            HarnessError::Solver(_) | HarnessError::Mc(_) => CliError::Solver(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn init_workers() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("PACBOUND_WORKERS") {
        let workers: usize = v
            .parse()
            .map_err(|_| CliError::Usage(format!("PACBOUND_WORKERS: not a count: `{v}`")))?;
        if workers == 0 {
            return Err(CliError::Usage("PACBOUND_WORKERS: must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Usage(format!("PACBOUND_WORKERS: {e}")))?;
    }
    Ok(())
}

fn cmd_psi_star(args: &PsiStarArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&args.mu) {
        return Err(CliError::Usage(format!(
            "--mu: must be in [0,1], got {}",
            args.mu
        )));
    }
    let mut losses = Vec::new();
    for tok in args.losses.split(',') {
        let x: f64 = tok
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--losses: malformed number `{tok}`")))?;
        losses.push(x);
    }
    let losses = LossVector::new(losses).map_err(|e| CliError::Usage(format!("--losses: {e}")))?;
    let res = psi_star(&losses, args.mu, &SolverTolerances::default())
        .map_err(|e| CliError::Solver(e.to_string()))?;
    println!(
        "{}",
        serde_json::json!({
            "value": res.value,
            "lambda_star": if res.lambda_star.is_nan() {
                serde_json::Value::Null
            } else {
                serde_json::json!(res.lambda_star)
            },
            "iterations": res.iterations,
        })
    );
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let config: harness::RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    let rows = harness::run_experiment(&config)?;
    harness::write_rows_to_path(&config.output, &rows)?;
    eprintln!("wrote {} rows to {}", rows.len(), config.output.display());
    Ok(())
}

fn cmd_aggregate(args: &AggregateArgs) -> Result<(), CliError> {
    let rows = harness::read_rows_csv(&args.input)?;
    let agg = harness::aggregate(&rows)?;
    match &args.output {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            harness::write_aggregate_csv(std::io::BufWriter::new(file), &agg)?;
        }
        None => harness::write_aggregate_csv(std::io::stdout().lock(), &agg)?,
    }
    Ok(())
}

fn cmd_mc(args: &McArgs) -> Result<(), CliError> {
    if !(args.delta_total > 0.0 && args.delta_total < 1.0) {
        return Err(CliError::Usage(format!(
            "--delta-total: must be in (0,1), got {}",
            args.delta_total
        )));
    }
    // Overall coverage is 1 - 3*delta for the block procedure, so spend a
    // third of the requested total on each failure source.
    let delta = args.delta_total / 3.0;
    let cfg = McConfig {
        blocks: args.blocks,
        block_size: args.block_size,
        multiplier: args
            .multiplier
            .unwrap_or_else(|| (1.0 / delta).powf(1.0 / args.blocks as f64)),
        delta,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let sc = gen_gaussian_erf(
        args.n as usize,
        harness::data_seed(args.seed, args.n, 0),
        args.posterior_variance,
    );
    let interval = run_algorithm1(
        &sc,
        args.n,
        &cfg,
        &SolverTolerances::default(),
        harness::cell_seed(args.seed, Method::McAlgorithm1, args.n, 0),
    )
    .map_err(|e| CliError::Solver(e.to_string()))?;
    println!(
        "{}",
        serde_json::json!({
            "method": interval.method.as_str(),
            "n": interval.n,
            "delta_total": args.delta_total,
            "delta": delta,
            "blocks": cfg.blocks,
            "block_size": cfg.block_size,
            "multiplier": cfg.multiplier,
            "lower": interval.lower,
            "upper": interval.upper,
            "width": interval.width(),
        })
    );
    Ok(())
}

fn cmd_bound(args: &BoundArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.input.display())))?;
    let file: BoundFile =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("input: {e}")))?;
    if !(file.delta > 0.0 && file.delta <= 1.0) {
        return Err(CliError::Usage(format!(
            "delta: must be in (0,1], got {}",
            file.delta
        )));
    }
    if file.kl_post_prior < 0.0 {
        return Err(CliError::Usage(format!(
            "kl_post_prior: must be >= 0, got {}",
            file.kl_post_prior
        )));
    }
    let mut weights = Vec::with_capacity(file.atoms.len());
    let mut losses = Vec::with_capacity(file.atoms.len());
    for (i, atom) in file.atoms.iter().enumerate() {
        weights.push(atom.weight);
        losses.push(
            LossVector::new(atom.losses.clone())
                .map_err(|e| CliError::Usage(format!("atoms[{i}].losses: {e}")))?,
        );
    }
    let intervals = harness::all_finite_bounds(
        &weights,
        &losses,
        file.kl_post_prior,
        file.delta,
        &SolverTolerances::default(),
    )?;
    for iv in intervals {
        println!(
            "{}",
            serde_json::json!({
                "method": iv.method.as_str(),
                "n": iv.n,
                "delta": iv.delta,
                "lower": iv.lower,
                "upper": iv.upper,
                "width": iv.width(),
            })
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    init_workers()?;
    match &cli.cmd {
        Cmd::PsiStar(a) => cmd_psi_star(a),
        Cmd::Experiment(a) => cmd_experiment(a),
        Cmd::Aggregate(a) => cmd_aggregate(a),
        Cmd::Mc(a) => cmd_mc(a),
        Cmd::Bound(a) => cmd_bound(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
