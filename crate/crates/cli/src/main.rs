//! `ecgnode`: run node simulations, score detectors and classifiers, and
//! print closed-form power tables.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecgnode::procnet::OperatingMode;

#[derive(Debug, Parser)]
#[command(name = "ecgnode", version, about = "Adaptive ECG edge node simulator")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic trace and its annotations.
    Synth(SynthArgs),
    /// Simulate the node on one or more traces.
    Simulate(SimulateArgs),
    /// Score the detector (and the classifier when weights are given).
    Score(ScoreArgs),
    /// Closed-form power, clock choice and battery life.
    Power(PowerArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 60.0)]
    pub bpm: f64,
    /// Seconds.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 330.0)]
    pub rate: f64,
    /// Standard deviation of additive noise, ADC units.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Defaults to `seed` from the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Make every n-th beat an ectopic `V` beat.
    #[arg(long)]
    pub ectopic_every: Option<usize>,
    #[arg(long, default_value = "synth")]
    pub record: String,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Trace files; each is simulated independently.
    #[arg(long = "trace", required = true, num_args = 1..)]
    pub traces: Vec<PathBuf>,
    /// Weight file; required whenever cnn mode can be reached.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Run in a fixed mode.
    #[arg(long, conflicts_with = "script")]
    pub mode: Option<OperatingMode>,
    /// Gateway command script; the run starts in `sim.initial_mode`.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Simulated seconds; defaults to the trace length.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Cost-table entry for the CNN; defaults to the weight file topology.
    #[arg(long)]
    pub cnn_model: Option<String>,
    /// Transmit every processed beat regardless of the threshold policy.
    #[arg(long)]
    pub always_send: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long = "trace", num_args = 1.., required_unless_present = "from_counts")]
    pub traces: Vec<PathBuf>,
    /// Annotation files paired with `--trace` in order; defaults to
    /// `<trace stem>.ann` next to each trace.
    #[arg(long = "ann", num_args = 1..)]
    pub annotations: Vec<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Label set of the annotations when no weight file is given.
    #[arg(long, default_value = "NLRAV")]
    pub labels: String,
    /// Fixed detector threshold; overrides the config.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub refractory: Option<f64>,
    /// Match tolerance in samples.
    #[arg(long)]
    pub tolerance: Option<usize>,
    /// Compute metrics from a confusion-matrix CSV instead of traces.
    #[arg(long, conflicts_with_all = ["traces", "annotations", "weights"])]
    pub from_counts: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long = "mode", required = true, num_args = 1..)]
    pub modes: Vec<OperatingMode>,
    #[arg(long = "bpm", num_args = 1.., default_values_t = [60.0])]
    pub bpms: Vec<f64>,
    /// Cost-table entry for the CNN.
    #[arg(long)]
    pub model: Option<String>,
    /// Clock in Hz, or `auto` to let the runtime manager choose.
    #[arg(long, default_value = "auto")]
    pub freq: String,
    /// Packet rate of the peak mode, Hz.
    #[arg(long, default_value_t = 0.0)]
    pub send_rate: f64,
}

/// A usage error detected after argument parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<ecgnode::Error>() {
            return if matches!(e, ecgnode::Error::Deadlock { .. }) { 3 } else { 2 };
        }
        if cause.is::<std::io::Error>() || cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = std::panic::catch_unwind(|| {
        let cfg = config::FileConfig::load(cli.config.as_deref())?;
        match cli.command {
            Command::Synth(a) => commands::synth(&cfg, &a),
            Command::Simulate(a) => commands::simulate(&cfg, &a),
            Command::Score(a) => commands::score(&cfg, &a),
            Command::Power(a) => commands::power(&cfg, &a),
        }
    });
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
