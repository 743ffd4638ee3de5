//! Benchmark CLI. Exit codes: 0 success, 1 configuration or usage error,
//! 2 runtime failure.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use nrmc::diagnostics::MeanSource;
use nrmc::harness::{
    default_grid, preset_summary, resolve, run_experiment, run_sweep, run_trace, write_csv,
    write_trace_csv, ExperimentConfig, PolicyKind, ResultRow, SweepGrid, TraceRow, PRESET_NAMES,
};
use nrmc::{Error, Result};

#[derive(Parser)]
#[command(
    name = "nrmc",
    version,
    about = "Benchmark MCMC kernels driven by a persistent slice variable"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit CSV (one row per tracked scalar).
    Run(RunArgs),
    /// Run a grid of experiments and emit CSV (failed cells become error
    /// rows).
    Sweep(SweepArgs),
    /// Record the accept/reject decision variable for consecutive updates.
    Trace(TraceArgs),
    /// List built-in presets.
    Presets,
}

#[derive(Args)]
struct CommonArgs {
    /// Built-in preset supplying defaults (see `nrmc presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Acceptance policy: standard or nonrev.
    #[arg(long, value_parser = PolicyKind::from_str)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Total groups, burn-in included.
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    /// Raw stepsize before the scaling rule.
    #[arg(long)]
    step: Option<f64>,
    /// Slice translation per update (nonrev policy).
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Half-width of the uniform noise added to the slice translation.
    #[arg(long)]
    noise: Option<f64>,
    /// Momentum persistence (plang only).
    #[arg(long)]
    alpha: Option<f64>,
    /// Base for the dimension-scaled persistence alpha = base^eta.
    #[arg(long = "alpha-base")]
    alpha_base: Option<f64>,
    #[arg(long = "leapfrog-steps")]
    leapfrog_steps: Option<usize>,
    /// Gamma shape for stepsize jitter (0 disables).
    #[arg(long = "jitter-shape")]
    jitter_shape: Option<f64>,
    #[arg(long = "max-lag")]
    max_lag: Option<usize>,
    /// Comma-separated scalars to track: coordN, energy, indicator.
    #[arg(long)]
    scalars: Option<String>,
    /// Mean the autocorrelation estimator centers on: known or sample.
    #[arg(long)]
    mean: Option<String>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Stepsizes to sweep.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    steps: Vec<f64>,
    /// Persistence bases to sweep (alpha = base^eta).
    #[arg(long = "alpha-bases", value_delimiter = ',')]
    alpha_bases: Vec<f64>,
    /// Direct persistence values to sweep.
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    /// Slice translations to sweep (nonrev cells only).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    deltas: Vec<f64>,
    /// Trajectory lengths to sweep.
    #[arg(long, value_delimiter = ',')]
    leapfrogs: Vec<usize>,
    /// Policies to sweep: standard, nonrev.
    #[arg(long, value_delimiter = ',', value_parser = PolicyKind::from_str)]
    policies: Vec<PolicyKind>,
    /// Chains per cell, each with its own seed.
    #[arg(long)]
    replications: Option<u32>,
    /// Run cells on a thread pool; output order is unchanged.
    #[arg(long)]
    parallel: bool,
    /// Refuse grids with more cells than this.
    #[arg(long)]
    cap: Option<usize>,
}

impl SweepArgs {
    fn has_axis_flags(&self) -> bool {
        !(self.steps.is_empty()
            && self.alpha_bases.is_empty()
            && self.alphas.is_empty()
            && self.deltas.is_empty()
            && self.leapfrogs.is_empty()
            && self.policies.is_empty())
    }
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Updates to record after burn-in (0 emits only the header).
    #[arg(long, default_value_t = 500)]
    updates: usize,
}

fn build_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mean = match args.mean.as_deref() {
        None => None,
        Some("known") => Some(MeanSource::Known),
        Some("sample") => Some(MeanSource::Sample),
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown mean '{other}' (expected known or sample)"
            )))
        }
    };
    let flags = ExperimentConfig {
        preset: args.preset.clone(),
        policy: args.policy,
        seed: args.seed,
        groups: args.groups,
        burnin: args.burnin,
        step: args.step,
        delta: args.delta,
        noise: args.noise,
        alpha: args.alpha,
        alpha_base: args.alpha_base,
        leapfrog_steps: args.leapfrog_steps,
        jitter_shape: args.jitter_shape,
        max_lag: args.max_lag,
        scalars: args.scalars.clone(),
        mean,
        ..ExperimentConfig::default()
    };
    let mut file_cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config file '{}': {e}", path.display()))
            })?;
            ExperimentConfig::parse_file(&text)?
        }
        None => ExperimentConfig::default(),
    };
    // A flag on one side of a paired knob wins over the file's other side,
    // same as explicit settings win over preset defaults.
    if flags.alpha.is_some() || flags.alpha_base.is_some() {
        file_cfg.alpha = None;
        file_cfg.alpha_base = None;
    }
    Ok(flags.merge_over(file_cfg))
}

fn build_grid(args: &SweepArgs, base: &ExperimentConfig) -> Result<SweepGrid> {
    let mut grid = if args.has_axis_flags() {
        SweepGrid::default()
    } else if let Some(name) = &base.preset {
        default_grid(name)?
    } else {
        SweepGrid::default()
    };
    if !args.steps.is_empty() {
        grid.steps = args.steps.clone();
    }
    if !args.alpha_bases.is_empty() {
        grid.alpha_bases = args.alpha_bases.clone();
    }
    if !args.alphas.is_empty() {
        grid.alphas = args.alphas.clone();
    }
    if !args.deltas.is_empty() {
        grid.deltas = args.deltas.clone();
    }
    if !args.leapfrogs.is_empty() {
        grid.leapfrogs = args.leapfrogs.clone();
    }
    if !args.policies.is_empty() {
        grid.policies = args.policies.clone();
    }
    if let Some(r) = args.replications {
        grid.replications = r;
    }
    grid.parallel = args.parallel;
    if let Some(c) = args.cap {
        grid.cap = c;
    }
    Ok(grid)
}

fn write_rows(out: &Option<PathBuf>, rows: &[ResultRow]) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(fs::File::create(path)?);
            write_csv(rows, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            write_csv(rows, &mut stdout.lock())?;
        }
    }
    Ok(())
}

fn write_trace(out: &Option<PathBuf>, rows: &[TraceRow]) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(fs::File::create(path)?);
            write_trace_csv(rows, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            write_trace_csv(rows, &mut stdout.lock())?;
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = build_config(&args.common)?;
            let rows = run_experiment(&cfg)?;
            write_rows(&args.common.out, &rows)
        }
        Command::Sweep(args) => {
            let cfg = build_config(&args.common)?;
            let grid = build_grid(&args, &cfg)?;
            let rows = run_sweep(&cfg, &grid)?;
            write_rows(&args.common.out, &rows)
        }
        Command::Trace(args) => {
            let cfg = build_config(&args.common)?;
            let resolved = resolve(&cfg)?;
            let rows = run_trace(&resolved, args.updates)?;
            write_trace(&args.common.out, &rows)
        }
        Command::Presets => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for name in PRESET_NAMES {
                writeln!(out, "{name:<18} {}", preset_summary(name))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => match dispatch(cli) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(if e.is_config() { 1 } else { 2 })
            }
        },
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}
