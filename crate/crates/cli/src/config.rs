//! Experiment configuration: one JSON document, overridable from flags.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use rmcq_core::imaging::ImageKind;
use rmcq_core::relay::RelaySettings;
use rmcq_core::ssl::SslMethod;
use rmcq_core::synth::{GridConfig, SignalModelParams};

use crate::error::CliError;
use crate::pipeline::{PipelineConfig, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SslSettings {
    pub unlabeled_fractions: Vec<f64>,
    pub methods: Vec<SslMethod>,
    /// Epochs for the student classifier trained on fused labels.
    pub student_epochs: usize,
}

impl Default for SslSettings {
    fn default() -> Self {
        SslSettings {
            unlabeled_fractions: vec![0.2, 0.5, 0.8],
            methods: vec![SslMethod::LabelSpreading, SslMethod::LabelPropagation, SslMethod::SelfTraining],
            student_epochs: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Noise,
    Sampling,
    Window,
    Imaging,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub snr_db: Vec<f64>,
    pub sampling_hz: Vec<f64>,
    pub window_cycles: Vec<f64>,
    pub imaging: Vec<ImageKind>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            snr_db: vec![40.0, 30.0, 20.0],
            sampling_hz: rmcq_core::synth::STUDY_SAMPLING_HZ.to_vec(),
            window_cycles: rmcq_core::synth::STUDY_WINDOW_CYCLES.to_vec(),
            imaging: ImageKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelayTraceSettings {
    pub relay: RelaySettings,
    /// Record ids to trace when a dataset is given; empty traces all.
    pub record_ids: Vec<String>,
    /// Window of the built-in exhibit records, in cycles.
    pub exhibit_cycles: f64,
    /// Onset of the exhibit event after the window start, in cycles.
    pub exhibit_onset_cycles: f64,
    /// Remote infeed ratio of the high-resistance exhibit.
    pub exhibit_remote_infeed: f64,
}

impl Default for RelayTraceSettings {
    fn default() -> Self {
        RelayTraceSettings {
            relay: RelaySettings::default(),
            record_ids: Vec::new(),
            exhibit_cycles: 8.0,
            exhibit_onset_cycles: 3.0,
            exhibit_remote_infeed: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; copied into the grid, split, selection and network.
    pub seed: u64,
    /// Existing dataset directory; when absent the grid is synthesized.
    pub dataset: Option<PathBuf>,
    pub grid: GridConfig,
    pub signal: SignalModelParams,
    pub window_cycles: f64,
    /// Event onset after the window start, in cycles.
    pub pre_onset_cycles: f64,
    /// Measurement noise; `null` is noiseless.
    pub snr_db: Option<f64>,
    pub tasks: Vec<Task>,
    pub pipeline: PipelineConfig,
    pub ssl: SslSettings,
    pub sweep: SweepSettings,
    pub relay_trace: RelayTraceSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            dataset: None,
            grid: GridConfig::subsampled(400, 400, 0),
            signal: SignalModelParams::default(),
            window_cycles: 1.0,
            pre_onset_cycles: 0.25,
            snr_db: None,
            tasks: vec![Task::Detect, Task::Locate, Task::PhaseSelect],
            pipeline: PipelineConfig::default(),
            ssl: SslSettings::default(),
            sweep: SweepSettings::default(),
            relay_trace: RelayTraceSettings::default(),
        }
    }
}

/// `run.json` layout; also accepted by `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
}

impl ExperimentConfig {
    /// Read a plain config or a previous `run.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let inner = match value.get("config") {
            Some(c) if value.get("command").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn snr(&self) -> f64 {
        self.snr_db.unwrap_or(f64::INFINITY)
    }

    /// Propagate the master seed and check everything that can be checked
    /// before any work starts.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.grid.seed = self.seed;
        self.pipeline.seed = self.seed;
        self.pipeline.net.seed = self.seed;
        self.pipeline.relief.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.signal.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.pipeline.net.validate().or_else(|e| {
            // class count and channels are filled in per task
            if e.to_string().contains("classes") {
                Ok(())
            } else {
                Err(CliError::Config(e.to_string()))
            }
        })?;
        if self.window_cycles.is_nan() || self.window_cycles <= 0.0 {
            return bad(format!("window_cycles {} must be positive", self.window_cycles));
        }
        if !(self.pre_onset_cycles >= 0.0 && self.pre_onset_cycles < self.window_cycles) {
            return bad("pre_onset_cycles must lie in [0, window_cycles)".into());
        }
        if let Some(s) = self.snr_db {
            if s.is_nan() {
                return bad("snr_db is NaN".into());
            }
        }
        if !(self.pipeline.split_ratio > 0.0 && self.pipeline.split_ratio < 1.0) {
            return bad("split_ratio must lie in (0, 1)".into());
        }
        if self.tasks.is_empty() {
            return bad("no tasks selected".into());
        }
        if self.ssl.unlabeled_fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
            return bad("unlabeled fractions must lie in [0, 1)".into());
        }
        if let Some(d) = &self.dataset {
            if !d.join("manifest.json").is_file() {
                return bad(format!("dataset {} has no manifest.json", d.display()));
            }
        }
        self.relay_trace.relay.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}
