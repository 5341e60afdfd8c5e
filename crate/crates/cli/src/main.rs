use std::io;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use noma_core::harness::{emit_csv, sweep, write_csv, RunConfig};

#[derive(Parser)]
#[command(name = "noma", version, about = "Grant-free MIMO-NOMA Monte-Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded sweep and write one CSV row per grid point and detector.
    Simulate(SimulateArgs),
}

/// Flags are kept as text and parsed by the same code that reads config
/// files, so both accept exactly the same values.
#[derive(Args)]
struct SimulateArgs {
    /// key = value file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    users: Option<String>,
    /// Antenna counts, comma separated.
    #[arg(long)]
    antennas: Option<String>,
    /// Spreading lengths, comma separated.
    #[arg(long)]
    spread_len: Option<String>,
    #[arg(long, conflicts_with = "active")]
    active_frac: Option<String>,
    /// Exact number of active devices.
    #[arg(long)]
    active: Option<String>,
    /// dbpsk, dqpsk, d8psk or the order M.
    #[arg(long = "mod")]
    modulation: Option<String>,
    /// start:step:stop or a comma list.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// bpmf, conventional, oracle (comma separated).
    #[arg(long)]
    detector: Option<String>,
    #[arg(long)]
    sbl_iterations: Option<String>,
    #[arg(long)]
    data_iterations: Option<String>,
    #[arg(long)]
    sbl_tolerance: Option<String>,
    #[arg(long)]
    data_tolerance: Option<String>,
    /// gap, gap:<min_log_gap>,<fallback>, fixed:<value> or two-cluster.
    #[arg(long)]
    threshold: Option<String>,
    /// joint or current.
    #[arg(long)]
    slots: Option<String>,
    #[arg(long)]
    damping: Option<String>,
    #[arg(long)]
    variance_floor: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    paper_literal_variance: Option<String>,
    /// pair, current or fixed.
    #[arg(long)]
    lambda_mode: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    warm_lambda: Option<String>,
    /// known or sbl.
    #[arg(long)]
    lmmse_regularization: Option<String>,
    /// Output CSV (stdout if absent).
    #[arg(long)]
    out: Option<String>,
    /// Directory for per-iteration traces of trial 0 of every grid point.
    #[arg(long)]
    emit_diagnostics: Option<String>,
}

impl SimulateArgs {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("users", &self.users),
            ("antennas", &self.antennas),
            ("spread-len", &self.spread_len),
            ("active-frac", &self.active_frac),
            ("active", &self.active),
            ("mod", &self.modulation),
            ("snr-db", &self.snr_db),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("detector", &self.detector),
            ("sbl-iterations", &self.sbl_iterations),
            ("data-iterations", &self.data_iterations),
            ("sbl-tolerance", &self.sbl_tolerance),
            ("data-tolerance", &self.data_tolerance),
            ("threshold", &self.threshold),
            ("slots", &self.slots),
            ("damping", &self.damping),
            ("variance-floor", &self.variance_floor),
            ("paper-literal-variance", &self.paper_literal_variance),
            ("lambda-mode", &self.lambda_mode),
            ("warm-lambda", &self.warm_lambda),
            ("lmmse-regularization", &self.lmmse_regularization),
            ("out", &self.out),
            ("emit-diagnostics", &self.emit_diagnostics),
        ]
    }

    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in self.pairs() {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{key}"))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = args.run_config()?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let records = sweep(&cfg)?;
    match &cfg.out {
        Some(path) => emit_csv(&records, path)?,
        None => write_csv(&records, io::stdout().lock()).context("writing CSV to stdout")?,
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
    }
}
