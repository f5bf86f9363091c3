use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::scenario::{EventLabel, FaultType, Phase, PhaseSet, Position, PriorityMode, ScenarioKind, ScenarioSpec};
use crate::error::{Error, Result};
use crate::util;

/// Source-voltage angles of phases a, b, c in radians.
pub(crate) const PHASE_ANGLES: [f64; 3] = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];

/// Fixed series resistance added to the fault resistance when scaling the
/// fault-current step.
pub const BASE_RESISTANCE_OHM: f64 = 1.0;

/// Switching severity per rating level 1..=4, relative to prefault amplitude.
const RATING_SEVERITY: [f64; 4] = [0.15, 0.3, 0.45, 0.6];

/// Per-position relative strength of the fault-current step.
const POSITION_SCALE: [f64; 8] = [0.55, 0.65, 0.8, 1.0, 0.9, 0.75, 0.65, 0.55];

/// Per-position ringing frequency (Hz) of the fault-inception transient.
const POSITION_RINGING_HZ: [f64; 8] = [2100.0, 1800.0, 1500.0, 2400.0, 1650.0, 1350.0, 1150.0, 950.0];
const RINGING_DAMPING: f64 = 300.0;
const RINGING_LEVEL: f64 = 0.05;

/// Electrical model used only to render the voltage channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineModel {
    /// Positive-sequence impedance of the full protected line.
    pub z_line: Complex64,
    pub z1: Complex64,
    pub z0: Complex64,
    /// Load impedance magnitude seen at the relay before the event.
    pub load_impedance_ohm: f64,
    /// Remote-end contribution to fault current, as a multiple of the local
    /// fault-current step. Magnifies the apparent fault resistance.
    pub remote_infeed_ratio: f64,
    /// Electrical distance of p1..p8 from the relay as a fraction of the line;
    /// negative values lie behind the relay.
    pub position_distance: [f64; 8],
}

impl Default for LineModel {
    fn default() -> Self {
        LineModel {
            z_line: Complex64::new(1.0, 30.0),
            z1: Complex64::new(0.23, 7.6),
            z0: Complex64::new(8.19, 27.55),
            load_impedance_ohm: 100.0,
            remote_infeed_ratio: 0.0,
            position_distance: [-1.0, -0.6, -0.3, 0.4, 0.65, 1.3, 1.6, 2.0],
        }
    }
}

impl LineModel {
    pub fn k0(&self) -> Complex64 {
        (self.z0 - self.z1) / (3.0 * self.z1)
    }
}

/// Anti-parallel DC source arc model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HifModel {
    /// Peak of the driving phase voltage across the arc path.
    pub drive_voltage: f64,
    /// DC source opposing conduction in the positive half cycle.
    pub dc_positive: f64,
    /// DC source opposing conduction in the negative half cycle.
    pub dc_negative: f64,
    pub resistance_min_ohm: f64,
    pub resistance_max_ohm: f64,
    pub update_interval_s: f64,
}

impl Default for HifModel {
    fn default() -> Self {
        HifModel {
            drive_voltage: 40.0,
            dc_positive: 4.0,
            dc_negative: 8.0,
            resistance_min_ohm: 50.0,
            resistance_max_ohm: 300.0,
            update_interval_s: 0.002,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalModelParams {
    pub system_freq_hz: f64,
    pub sampling_freq_hz: f64,
    /// Start of the generated window (absolute time, seconds).
    pub window_start_s: f64,
    pub prefault_amplitude_per_phase: [f64; 3],
    /// Fault-current step at zero fault resistance, relative to prefault.
    pub fault_amplitude_scale: f64,
    pub dc_offset_tau_s: f64,
    pub switching_osc_freq_hz: f64,
    pub switching_damping: f64,
    /// (harmonic order, amplitude relative to the fundamental)
    pub harmonic_levels: Vec<(u32, f64)>,
    pub with_voltages: bool,
    pub line: LineModel,
    pub hif: HifModel,
}

impl Default for SignalModelParams {
    fn default() -> Self {
        SignalModelParams {
            system_freq_hz: 60.0,
            sampling_freq_hz: 7680.0,
            window_start_s: 9.0 - 0.25 / 60.0,
            prefault_amplitude_per_phase: [1.0; 3],
            fault_amplitude_scale: 6.0,
            dc_offset_tau_s: 0.02,
            switching_osc_freq_hz: 600.0,
            switching_damping: 60.0,
            harmonic_levels: vec![(5, 0.02), (7, 0.01)],
            with_voltages: false,
            line: LineModel::default(),
            hif: HifModel::default(),
        }
    }
}

impl SignalModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("system_freq_hz", self.system_freq_hz),
            ("sampling_freq_hz", self.sampling_freq_hz),
            ("dc_offset_tau_s", self.dc_offset_tau_s),
            ("switching_osc_freq_hz", self.switching_osc_freq_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite")));
            }
        }
        let finite = self
            .prefault_amplitude_per_phase
            .iter()
            .chain([&self.fault_amplitude_scale, &self.switching_damping, &self.window_start_s])
            .chain(self.harmonic_levels.iter().map(|(_, a)| a))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("signal model amplitudes must be finite"));
        }
        if self.sampling_freq_hz <= 2.0 * self.system_freq_hz {
            return Err(Error::invalid("sampling rate must exceed twice the system frequency"));
        }
        Ok(())
    }

    fn omega(&self) -> f64 {
        2.0 * PI * self.system_freq_hz
    }

    /// Load angle and fault-current angle behind the source voltage.
    fn angles(&self, mode: PriorityMode) -> (f64, f64) {
        match mode {
            PriorityMode::P => (5f64.to_radians(), 15f64.to_radians()),
            PriorityMode::Q => (35f64.to_radians(), 75f64.to_radians()),
        }
    }

    /// Number of samples in a window of `cycles` fundamental cycles.
    pub fn window_len(&self, cycles: f64) -> usize {
        (cycles * self.sampling_freq_hz / self.system_freq_hz).round().max(0.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveformRecord {
    /// Phase currents a, b, c.
    pub samples: [Vec<f64>; 3],
    /// Co-sampled phase voltages, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltages: Option<[Vec<f64>; 3]>,
    pub sampling_freq_hz: f64,
    pub start_time_s: f64,
    pub label: EventLabel,
    pub phase_label: PhaseSet,
    pub location_label: Option<Position>,
    pub scenario: ScenarioSpec,
}

impl WaveformRecord {
    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, n: usize) -> f64 {
        self.start_time_s + n as f64 / self.sampling_freq_hz
    }

    /// First sample index at or after the scenario onset.
    pub fn onset_index(&self) -> usize {
        let k = ((self.scenario.onset_time_s - self.start_time_s) * self.sampling_freq_hz - 1e-9).ceil();
        (k.max(0.0) as usize).min(self.len())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let channels = self.samples.iter().chain(self.voltages.iter().flatten());
        for ch in channels {
            if ch.len() != n {
                return Err(Error::Shape { expected: format!("{n} samples"), found: format!("{}", ch.len()) });
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("waveform sample".into()));
            }
        }
        if (self.label == EventLabel::Fault) == self.phase_label.is_empty() {
            return Err(Error::invalid("phase label must be non-empty exactly for faults"));
        }
        Ok(())
    }
}

struct Frame {
    len: usize,
    onset_s: f64,
}

fn frame(spec: &ScenarioSpec, params: &SignalModelParams, window_cycles: f64) -> Result<Frame> {
    spec.validate()?;
    params.validate()?;
    if !(window_cycles > 0.0) || !window_cycles.is_finite() {
        return Err(Error::invalid("window length must be positive"));
    }
    let len = params.window_len(window_cycles);
    if len < 2 {
        return Err(Error::invalid(format!("window of {window_cycles} cycles is shorter than 2 samples")));
    }
    let start = params.window_start_s;
    let end = start + len as f64 / params.sampling_freq_hz;
    if spec.onset_time_s < start || spec.onset_time_s >= end {
        return Err(Error::OnsetOutsideWindow { onset_s: spec.onset_time_s, start_s: start, end_s: end });
    }
    Ok(Frame { len, onset_s: spec.onset_time_s })
}

fn phasor_at(p: Complex64, omega: f64, t: f64) -> f64 {
    (p * Complex64::from_polar(1.0, omega * t)).re
}

/// Balanced prefault currents, with declared harmonics.
fn prefault_current(params: &SignalModelParams, load_angle: f64, phase: usize, t: f64) -> f64 {
    let amp = params.prefault_amplitude_per_phase[phase];
    let theta = params.omega() * t + PHASE_ANGLES[phase] - load_angle;
    let mut v = theta.cos();
    for &(order, level) in &params.harmonic_levels {
        v += level * (order as f64 * theta).cos();
    }
    amp * v
}

fn prefault_phasors(params: &SignalModelParams, load_angle: f64) -> [Complex64; 3] {
    std::array::from_fn(|k| Complex64::from_polar(params.prefault_amplitude_per_phase[k], PHASE_ANGLES[k] - load_angle))
}

/// Steady-state fault-current increments per phase.
fn fault_steps(
    spec: &ScenarioSpec,
    params: &SignalModelParams,
    fault_type: FaultType,
    fault_angle: f64,
) -> [Complex64; 3] {
    let position = spec.position.expect("validated");
    let ref_amp = params.prefault_amplitude_per_phase.iter().sum::<f64>() / 3.0;
    let magnitude = params.fault_amplitude_scale * ref_amp * POSITION_SCALE[position.index()]
        / (spec.fault_impedance_ohm + BASE_RESISTANCE_OHM);
    let mut steps = [Complex64::new(0.0, 0.0); 3];
    if let Some((from, to)) = fault_type.phase_pair() {
        let step = Complex64::from_polar(magnitude, PHASE_ANGLES[from.index()] + PI / 6.0 - fault_angle);
        steps[from.index()] = step;
        steps[to.index()] = -step;
    } else {
        for p in fault_type.phases().iter() {
            steps[p.index()] = Complex64::from_polar(magnitude, PHASE_ANGLES[p.index()] - fault_angle);
        }
    }
    steps
}

/// Synthesize a fault, capacitor-switching or load-switching record.
pub fn synthesize(spec: &ScenarioSpec, params: &SignalModelParams, window_cycles: f64) -> Result<WaveformRecord> {
    if spec.kind == ScenarioKind::Hif {
        return synthesize_hif_with_trace(spec, params, window_cycles).map(|(rec, _)| rec);
    }
    let fr = frame(spec, params, window_cycles)?;
    let fs = params.sampling_freq_hz;
    let omega = params.omega();
    let (load_angle, fault_angle) = params.angles(spec.priority_mode);
    let start = params.window_start_s;
    let onset = fr.onset_s;

    let mut samples: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(fr.len));
    let pre_phasors = prefault_phasors(params, load_angle);
    let mut post_phasors = pre_phasors;
    let steps = match spec.fault_type {
        Some(ft) if spec.kind == ScenarioKind::Fault => Some(fault_steps(spec, params, ft, fault_angle)),
        _ => None,
    };
    if let Some(steps) = &steps {
        for k in 0..3 {
            post_phasors[k] += steps[k];
        }
    }

    for n in 0..fr.len {
        let t = start + n as f64 / fs;
        let dt = t - onset;
        for (k, ch) in samples.iter_mut().enumerate() {
            let mut v = prefault_current(params, load_angle, k, t);
            if dt >= 0.0 {
                v += event_current(spec, params, steps.as_ref(), k, t, dt);
            }
            ch.push(v);
        }
    }

    let voltages = params.with_voltages.then(|| {
        let pre_v = pre_phasors.map(|i| i * Complex64::from_polar(params.line.load_impedance_ohm, load_angle));
        let post_v = match (&steps, spec.fault_type) {
            (Some(steps), Some(ft)) => fault_voltages(spec, params, ft, &pre_v, &post_phasors, steps),
            _ => pre_v,
        };
        std::array::from_fn(|k| {
            (0..fr.len)
                .map(|n| {
                    let t = start + n as f64 / fs;
                    let p = if t >= onset { post_v[k] } else { pre_v[k] };
                    phasor_at(p, omega, t)
                })
                .collect()
        })
    });

    let rec = WaveformRecord {
        samples,
        voltages,
        sampling_freq_hz: fs,
        start_time_s: start,
        label: spec.label(),
        phase_label: spec.faulted_phases(),
        location_label: if spec.kind == ScenarioKind::Fault { spec.position } else { None },
        scenario: spec.clone(),
    };
    rec.validate()?;
    Ok(rec)
}

fn event_current(
    spec: &ScenarioSpec,
    params: &SignalModelParams,
    steps: Option<&[Complex64; 3]>,
    k: usize,
    t: f64,
    dt: f64,
) -> f64 {
    let omega = params.omega();
    match spec.kind {
        ScenarioKind::Fault => {
            let step = steps.map(|s| s[k]).unwrap_or_default();
            if step.norm() == 0.0 {
                return 0.0;
            }
            let position = spec.position.expect("validated").index();
            // current stays continuous at inception; the mismatch decays as DC
            let dc = -phasor_at(step, omega, spec.onset_time_s) * (-dt / params.dc_offset_tau_s).exp();
            let ringing = RINGING_LEVEL
                * step.norm()
                * (-RINGING_DAMPING * dt).exp()
                * (2.0 * PI * POSITION_RINGING_HZ[position] * dt).sin();
            phasor_at(step, omega, t) + dc + ringing
        }
        ScenarioKind::CapacitorSwitch | ScenarioKind::LoadSwitch => {
            let level = spec.rating_level.expect("validated") as usize;
            let mut severity = RATING_SEVERITY[level - 1] * params.prefault_amplitude_per_phase[k];
            if !spec.infeed {
                severity *= 0.8;
            }
            let (freq, damping) = if spec.kind == ScenarioKind::CapacitorSwitch {
                (params.switching_osc_freq_hz, params.switching_damping)
            } else {
                severity *= 0.5;
                (0.5 * params.switching_osc_freq_hz, 2.0 * params.switching_damping)
            };
            let inception = (omega * spec.onset_time_s + PHASE_ANGLES[k]).cos();
            severity * inception * (-damping * dt).exp() * (2.0 * PI * freq * dt).sin()
        }
        ScenarioKind::Hif => unreachable!("HIF records are synthesized separately"),
    }
}

/// Relay-point voltages after inception, from the fault-loop equations.
fn fault_voltages(
    spec: &ScenarioSpec,
    params: &SignalModelParams,
    fault_type: FaultType,
    pre_v: &[Complex64; 3],
    currents: &[Complex64; 3],
    steps: &[Complex64; 3],
) -> [Complex64; 3] {
    let line = &params.line;
    let d = line.position_distance[spec.position.expect("validated").index()];
    let loop_z = line.z_line * d;
    let fault_r = spec.fault_impedance_ohm * (1.0 + line.remote_infeed_ratio);
    let i0 = (currents[0] + currents[1] + currents[2]) / 3.0;
    let k0 = line.k0();
    let mut v = *pre_v;
    if let Some((x, y)) = fault_type.phase_pair() {
        let (x, y) = (x.index(), y.index());
        let drop = loop_z * (currents[x] - currents[y]) + steps[x] * fault_r;
        let mid = (pre_v[x] + pre_v[y]) / 2.0;
        v[x] = mid + drop / 2.0;
        v[y] = mid - drop / 2.0;
    } else {
        for p in fault_type.phases().iter() {
            let k = p.index();
            v[k] = loop_z * (currents[k] + 3.0 * k0 * i0) + steps[k] * fault_r;
        }
    }
    v
}

/// Synthesize a high-impedance fault on phase a.
pub fn synthesize_hif(spec: &ScenarioSpec, params: &SignalModelParams, window_cycles: f64) -> Result<WaveformRecord> {
    synthesize_hif_with_trace(spec, params, window_cycles).map(|(rec, _)| rec)
}

/// As [`synthesize_hif`], also returning the per-sample arc resistance.
pub fn synthesize_hif_with_trace(
    spec: &ScenarioSpec,
    params: &SignalModelParams,
    window_cycles: f64,
) -> Result<(WaveformRecord, Vec<f64>)> {
    if spec.kind != ScenarioKind::Hif {
        return Err(Error::invalid("synthesize_hif needs a scenario of kind hif"));
    }
    let fr = frame(spec, params, window_cycles)?;
    let hif = &params.hif;
    if !(hif.resistance_min_ohm > 0.0 && hif.resistance_max_ohm >= hif.resistance_min_ohm) {
        return Err(Error::invalid("HIF resistance range must be positive and ordered"));
    }
    let fs = params.sampling_freq_hz;
    let omega = params.omega();
    let (load_angle, _) = params.angles(spec.priority_mode);
    let start = params.window_start_s;

    let segment = ((hif.update_interval_s * fs).floor() as usize).max(1);
    let mut rng = util::rng(spec.seed);
    let mut resistance = Vec::with_capacity(fr.len);
    let mut current = 0.0;
    for n in 0..fr.len {
        if n % segment == 0 {
            current = rng.random_range(hif.resistance_min_ohm..=hif.resistance_max_ohm);
        }
        resistance.push(current);
    }

    let mut samples: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(fr.len));
    for n in 0..fr.len {
        let t = start + n as f64 / fs;
        for (k, ch) in samples.iter_mut().enumerate() {
            let mut v = prefault_current(params, load_angle, k, t);
            if k == Phase::A.index() && t >= fr.onset_s {
                let drive = hif.drive_voltage * (omega * t + PHASE_ANGLES[k]).cos();
                v += if drive > hif.dc_positive {
                    (drive - hif.dc_positive) / resistance[n]
                } else if drive < -hif.dc_negative {
                    (drive + hif.dc_negative) / resistance[n]
                } else {
                    0.0
                };
            }
            ch.push(v);
        }
    }

    let voltages = params.with_voltages.then(|| {
        let pre_v = prefault_phasors(params, load_angle)
            .map(|i| i * Complex64::from_polar(params.line.load_impedance_ohm, load_angle));
        std::array::from_fn(|k| (0..fr.len).map(|n| phasor_at(pre_v[k], omega, start + n as f64 / fs)).collect())
    });

    let rec = WaveformRecord {
        samples,
        voltages,
        sampling_freq_hz: fs,
        start_time_s: start,
        label: EventLabel::Fault,
        phase_label: spec.faulted_phases(),
        location_label: spec.position,
        scenario: spec.clone(),
    };
    rec.validate()?;
    Ok((rec, resistance))
}
