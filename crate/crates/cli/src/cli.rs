//! Argument parsing and flag overrides.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use rmcq_core::imaging::ImageKind;
use rmcq_core::ssl::SslMethod;

use crate::commands::{self, Context};
use crate::config::{ExperimentConfig, SweepKind};
use crate::error::CliError;
use crate::pipeline::Task;

#[derive(Debug, Parser)]
#[command(
    name = "rmcq",
    version,
    about = "Fault detection, location and phase selection from change-quantile recurrence images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the scenario grid into <out>/dataset.
    Gen(Common),
    /// Extract all per-phase features into features.csv.
    Features(Common),
    /// Rank features with ReliefF and keep the top ones per head.
    Select(Common),
    /// Render the selected feature vectors as images.
    Image(Common),
    /// Train the classifier heads.
    Train(Common),
    /// Evaluate trained heads on their held-out records.
    Eval(EvalArgs),
    /// Train and evaluate every head in one pass.
    Pipeline(Common),
    /// Semi-supervised teacher/student grid over unlabeled fractions.
    Ssl(SslArgs),
    /// Trace apparent impedances through the distance-relay baseline.
    RelayTrace(RelayArgs),
    /// Repeat one head while varying noise, sampling, window or imaging.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory for every artifact.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config, or the run.json of an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory written by `gen`; omit to synthesize in memory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Heads to run; repeat for several.
    #[arg(long = "task", value_enum)]
    pub tasks: Vec<Task>,
    /// rp, gasf or mtf.
    #[arg(long)]
    pub imaging: Option<ImageKind>,
    /// Measurement SNR in dB; `inf` for noiseless.
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Keep a random subset of this many fault scenarios.
    #[arg(long)]
    pub faults: Option<usize>,
    /// Keep a random subset of this many switching scenarios.
    #[arg(long)]
    pub switching: Option<usize>,
    #[arg(long)]
    pub window_cycles: Option<f64>,
    #[arg(long)]
    pub sampling_hz: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory holding trained heads; defaults to --out.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SslArgs {
    #[command(flatten)]
    pub common: Common,
    /// Unlabeled fractions; repeat for several.
    #[arg(long = "fu")]
    pub fractions: Vec<f64>,
    /// Teacher methods: label-spreading, label-propagation, self-training.
    #[arg(long = "method", value_parser = parse_method)]
    pub methods: Vec<SslMethod>,
}

#[derive(Debug, Clone, Args)]
pub struct RelayArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset record ids to trace; all when omitted.
    #[arg(long = "record")]
    pub records: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub kind: SweepKind,
}

fn parse_method(s: &str) -> Result<SslMethod, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown method `{s}`"))
}

impl Common {
    /// Config file (or defaults) with flags applied, seeds propagated and
    /// validated.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(d) = &self.dataset {
            c.dataset = Some(d.clone());
        }
        if !self.tasks.is_empty() {
            c.tasks = self.tasks.clone();
        }
        if let Some(k) = self.imaging {
            c.pipeline.imaging = k;
        }
        if let Some(s) = self.snr {
            c.snr_db = s.is_finite().then_some(s);
        }
        if let Some(e) = self.epochs {
            c.pipeline.net.epochs = e;
            c.ssl.student_epochs = e;
        }
        if self.faults.is_some() {
            c.grid.max_faults = self.faults;
        }
        if self.switching.is_some() {
            c.grid.max_switching = self.switching;
        }
        if let Some(w) = self.window_cycles {
            c.window_cycles = w;
        }
        if let Some(f) = self.sampling_hz {
            c.signal.sampling_freq_hz = f;
        }
        c.resolve()
    }
}

fn context(common: &Common, name: &str) -> Context {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let command = if args.is_empty() { name.to_string() } else { args.join(" ") };
    Context::new(common.out.clone(), command)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => commands::gen(&context(&a, "gen"), &a.resolve()?).map(drop),
        Command::Features(a) => commands::features(&context(&a, "features"), &a.resolve()?),
        Command::Select(a) => commands::select(&context(&a, "select"), &a.resolve()?),
        Command::Image(a) => commands::image(&context(&a, "image"), &a.resolve()?),
        Command::Train(a) => commands::train(&context(&a, "train"), &a.resolve()?).map(drop),
        Command::Eval(a) => {
            let cfg = a.common.resolve()?;
            let model = a.model.clone().unwrap_or_else(|| a.common.out.clone());
            commands::eval(&context(&a.common, "eval"), &cfg, &model).map(drop)
        }
        Command::Pipeline(a) => commands::pipeline(&context(&a, "pipeline"), &a.resolve()?).map(drop),
        Command::Ssl(a) => {
            let mut cfg = a.common.resolve()?;
            if !a.fractions.is_empty() {
                cfg.ssl.unlabeled_fractions = a.fractions.clone();
            }
            if !a.methods.is_empty() {
                cfg.ssl.methods = a.methods.clone();
            }
            cfg.validate()?;
            let task = cfg.tasks[0];
            commands::ssl(&context(&a.common, "ssl"), &cfg, task).map(drop)
        }
        Command::RelayTrace(a) => {
            let mut cfg = a.common.resolve()?;
            if !a.records.is_empty() {
                cfg.relay_trace.record_ids = a.records.clone();
            }
            commands::relay_trace(&context(&a.common, "relay-trace"), &cfg).map(drop)
        }
        Command::Sweep(a) => {
            let cfg = a.common.resolve()?;
            let task = cfg.tasks[0];
            commands::sweep(&context(&a.common, "sweep"), &cfg, a.kind, task).map(drop)
        }
    }
}
