//! Benchmark front end: latency sweeps, CNN frame timing, calibration fits
//! and the acceptance validator.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use axidma_sim::bench::{cnn_csv, run_cnn_frame, run_sweep, sweep_csv, SweepSpec};
use axidma_sim::calibrate::{fit, parse_samples, render_report, suggest_overrides};
use axidma_sim::device::CnnNetwork;
use axidma_sim::validate;
use axidma_sim::{BufferScheme, DriverKind, PartitionMode, RunOutcome, SimConfig};

#[derive(Parser)]
#[command(
    name = "axidma-bench",
    about = "Deterministic PS/PL DMA transfer simulator and benchmark harness"
)]
struct Cli {
    /// Simulation config file (`key = value` lines); defaults apply otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DriverArg {
    Poll,
    Scheduled,
    Kernel,
    All,
}

impl DriverArg {
    fn drivers(self) -> Vec<DriverKind> {
        match self {
            DriverArg::Poll => vec![DriverKind::UserPoll],
            DriverArg::Scheduled => vec![DriverKind::UserScheduled],
            DriverArg::Kernel => vec![DriverKind::KernelInterrupt],
            DriverArg::All => DriverKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Single,
    Double,
}

impl From<SchemeArg> for BufferScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Single => BufferScheme::Single,
            SchemeArg::Double => BufferScheme::Double,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Unique,
    Blocks,
}

#[derive(Args)]
struct TransferOpts {
    /// Driver strategy to exercise.
    #[arg(long, value_enum, default_value = "all")]
    driver: DriverArg,
    /// Staging buffer scheme.
    #[arg(long, value_enum, default_value = "single")]
    scheme: SchemeArg,
    /// Payload partitioning.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Block size for `--mode blocks`.
    #[arg(long, default_value_t = 65_536)]
    block_size: u64,
}

impl TransferOpts {
    fn mode(&self, default: PartitionMode) -> PartitionMode {
        match self.mode {
            None => default,
            Some(ModeArg::Unique) => PartitionMode::Unique,
            Some(ModeArg::Blocks) => PartitionMode::Blocks {
                block_size: self.block_size,
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Loop-back latency sweep over log-spaced payload sizes; emits CSV.
    Sweep {
        #[command(flatten)]
        transfer: TransferOpts,
        #[arg(long, default_value_t = 8)]
        min_size: u64,
        #[arg(long, default_value_t = 6 * 1024 * 1024)]
        max_size: u64,
        #[arg(long, default_value_t = 25)]
        points: usize,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One CNN frame through the layered accelerator; emits per-layer CSV.
    Cnn {
        #[command(flatten)]
        transfer: TransferOpts,
        /// Network descriptor file (the bundled network when omitted).
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit intercept + per-byte slope to measured `driver,size,time` rows.
    Calibrate {
        /// Measured CSV path.
        measured: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance criteria and print one line per criterion.
    Validate {
        /// Reduced iteration counts.
        #[arg(long)]
        quick: bool,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<SimConfig> {
    match path {
        Some(p) => SimConfig::from_path(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(SimConfig::default()),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Sweep {
            transfer,
            min_size,
            max_size,
            points,
            out,
        } => {
            let spec = SweepSpec {
                min_bytes: min_size,
                max_bytes: max_size,
                points,
                drivers: transfer.driver.drivers(),
                scheme: transfer.scheme.into(),
                mode: transfer.mode(SweepSpec::default().mode),
            };
            let records = run_sweep(&cfg, &spec)?;
            emit(&out, &sweep_csv(&records))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Cnn {
            transfer,
            network,
            out,
        } => {
            let net = match &network {
                Some(path) => CnnNetwork::load(path)?,
                None => validate::roshambo_like(),
            };
            let input = validate::synthetic_input_frame(&net);
            let mut reports = Vec::new();
            for driver in transfer.driver.drivers() {
                reports.push(run_cnn_frame(
                    &cfg,
                    &net,
                    &input,
                    driver,
                    transfer.scheme.into(),
                    transfer.mode(PartitionMode::Unique),
                )?);
            }
            let deadlocked = reports.iter().any(|r| r.outcome != RunOutcome::Completed);
            emit(&out, &cnn_csv(&reports))?;
            if deadlocked {
                eprintln!("error: a frame run did not complete");
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate { measured, out } => {
            let text = std::fs::read_to_string(&measured)
                .with_context(|| format!("reading {}", measured.display()))?;
            let samples = parse_samples(&text)?;
            let fits = fit(&samples)?;
            let overrides = suggest_overrides(&fits, &cfg);
            emit(&out, &render_report(&fits, &overrides))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { quick } => {
            let results = validate::run_all(quick);
            let mut all_ok = true;
            for r in &results {
                println!("{}", r.line());
                all_ok &= r.passed;
            }
            Ok(if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
