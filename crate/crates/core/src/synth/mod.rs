//! Parametric three-phase transient synthesis.
//!
//! Stands in for network-level EMT simulation: every record is a closed-form
//! function of its [`ScenarioSpec`], the shared [`SignalModelParams`] and a
//! seed, so datasets are reproducible bit for bit.

mod disturb;
mod grid;
mod scenario;
mod waveform;

pub use disturb::{apply_ct_saturation, apply_noise, resample, CtModel};
pub use grid::{generate, GridConfig};
pub use scenario::{Bus, EventLabel, FaultType, Phase, PhaseSet, Position, PriorityMode, ScenarioKind, ScenarioSpec};
pub use waveform::{
    synthesize, synthesize_hif, synthesize_hif_with_trace, HifModel, LineModel, SignalModelParams, WaveformRecord,
};

/// Window lengths, in cycles, covered by the window-size study.
pub const STUDY_WINDOW_CYCLES: [f64; 3] = [0.5, 1.0, 2.0];

/// Sampling rates, in Hz, covered by the sampling-rate study.
pub const STUDY_SAMPLING_HZ: [f64; 4] = [3840.0, 5120.0, 5760.0, 7680.0];
