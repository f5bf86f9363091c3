use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::waveform::WaveformRecord;
use crate::dsp;
use crate::error::{Error, Result};
use crate::util;

/// Add white Gaussian noise to each current channel at the given SNR.
///
/// The realized noise is rescaled so the per-phase power ratio measured on
/// the record equals `snr_db`. `f64::INFINITY` returns the record unchanged.
pub fn apply_noise(rec: &WaveformRecord, snr_db: f64, seed: u64) -> WaveformRecord {
    let mut out = rec.clone();
    if snr_db == f64::INFINITY {
        return out;
    }
    let mut rng = util::rng(seed);
    for ch in out.samples.iter_mut() {
        let n = ch.len();
        if n == 0 {
            continue;
        }
        let signal_power = ch.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let drawn_power = noise.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if signal_power == 0.0 || drawn_power == 0.0 {
            continue;
        }
        let target = signal_power / 10f64.powf(snr_db / 10.0);
        let scale = (target / drawn_power).sqrt();
        for (v, e) in ch.iter_mut().zip(noise) {
            *v += scale * e;
        }
    }
    out
}

/// Single-knee CT core: flux integrates secondary current and is hard
/// limited; while limited, the secondary only carries the flux change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtModel {
    /// Flux ceiling at unit burden, in ampere-seconds.
    pub knee_flux: f64,
}

impl CtModel {
    /// Knee at four times the flux swing amplitude of a unit 60 Hz current.
    pub fn for_system(system_freq_hz: f64, nominal_amplitude: f64) -> Self {
        CtModel { knee_flux: 4.0 * nominal_amplitude / (2.0 * PI * system_freq_hz) }
    }

    pub fn ceiling(&self, burden_scale: f64) -> f64 {
        self.knee_flux / burden_scale
    }

    /// Saturated record plus the per-phase flux traces.
    pub fn saturate(&self, rec: &WaveformRecord, burden_scale: f64) -> Result<(WaveformRecord, [Vec<f64>; 3])> {
        if !(burden_scale >= 1.0) || !burden_scale.is_finite() {
            return Err(Error::invalid(format!("burden scale must be >= 1, got {burden_scale}")));
        }
        let ceiling = self.ceiling(burden_scale);
        let dt = 1.0 / rec.sampling_freq_hz;
        let mut out = rec.clone();
        let mut fluxes: [Vec<f64>; 3] = Default::default();
        for (ch, flux_trace) in out.samples.iter_mut().zip(fluxes.iter_mut()) {
            let mut flux = 0.0f64;
            for v in ch.iter_mut() {
                let next = flux + *v * dt;
                if next.abs() > ceiling {
                    let clipped = next.clamp(-ceiling, ceiling);
                    *v = (clipped - flux) / dt;
                    flux = clipped;
                } else {
                    flux = next;
                }
                flux_trace.push(flux);
            }
        }
        Ok((out, fluxes))
    }
}

impl Default for CtModel {
    fn default() -> Self {
        CtModel::for_system(60.0, 1.0)
    }
}

/// CT saturation with the default single-knee model.
pub fn apply_ct_saturation(rec: &WaveformRecord, burden_scale: f64) -> Result<WaveformRecord> {
    let model = CtModel::for_system(60.0, 1.0);
    model.saturate(rec, burden_scale).map(|(r, _)| r)
}

/// Integer decimation with a zero-phase Butterworth anti-alias stage.
pub fn resample(rec: &WaveformRecord, target_fs_hz: f64) -> Result<WaveformRecord> {
    let fs = rec.sampling_freq_hz;
    if !(target_fs_hz > 0.0) || target_fs_hz > fs {
        return Err(Error::invalid(format!("cannot resample {fs} Hz to {target_fs_hz} Hz")));
    }
    let ratio = fs / target_fs_hz;
    let factor = ratio.round();
    if (ratio - factor).abs() > 1e-9 {
        return Err(Error::invalid(format!("{fs} Hz to {target_fs_hz} Hz is not an integer decimation")));
    }
    let factor = factor as usize;
    if factor == 1 {
        return Ok(rec.clone());
    }
    let filter = dsp::butterworth_lowpass(5, 0.8 * target_fs_hz / 2.0, fs)?;
    let decimate = |x: &Vec<f64>| -> Vec<f64> { filter.filtfilt(x).into_iter().step_by(factor).collect() };
    let mut out = rec.clone();
    out.samples = std::array::from_fn(|k| decimate(&rec.samples[k]));
    out.voltages = rec.voltages.as_ref().map(|v| std::array::from_fn(|k| decimate(&v[k])));
    out.sampling_freq_hz = target_fs_hz;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthesize, FaultType, Position, ScenarioSpec, SignalModelParams};

    fn sine_record(fs: f64, cycles: f64, amp: f64) -> WaveformRecord {
        let params = SignalModelParams {
            sampling_freq_hz: fs,
            harmonic_levels: vec![],
            prefault_amplitude_per_phase: [amp; 3],
            ..Default::default()
        };
        let end = params.window_start_s + (params.window_len(cycles) as f64 - 1.0) / fs;
        let spec = ScenarioSpec::fault(FaultType::Ag, 1.0, end, Position::P4);
        synthesize(&spec, &params, cycles).unwrap()
    }

    fn measured_snr(clean: &[f64], noisy: &[f64]) -> f64 {
        let ps: f64 = clean.iter().map(|v| v * v).sum();
        let pn: f64 = clean.iter().zip(noisy).map(|(a, b)| (b - a).powi(2)).sum();
        10.0 * (ps / pn).log10()
    }

    #[test]
    fn infinite_snr_is_identity() {
        let rec = sine_record(7680.0, 1.0, 1.0);
        assert_eq!(apply_noise(&rec, f64::INFINITY, 9), rec);
    }

    #[test]
    fn noise_hits_requested_snr() {
        let rec = sine_record(7680.0, 1.0, 1.0);
        for seed in [1, 2] {
            let noisy = apply_noise(&rec, 20.0, seed);
            for k in 0..3 {
                let snr = measured_snr(&rec.samples[k], &noisy.samples[k]);
                assert!((19.8..=20.2).contains(&snr), "{snr}");
            }
        }
        assert_ne!(apply_noise(&rec, 20.0, 1).samples, apply_noise(&rec, 20.0, 2).samples);
    }

    #[test]
    fn low_current_passes_unsaturated() {
        let rec = sine_record(7680.0, 2.0, 1.0);
        let out = apply_ct_saturation(&rec, 1.0).unwrap();
        assert_eq!(out, rec);
    }

    #[test]
    fn flux_stays_under_ceiling() {
        let params = SignalModelParams::default();
        let spec = ScenarioSpec::fault(FaultType::Abg, 0.01, params.window_start_s + 0.005, Position::P4);
        let rec = synthesize(&spec, &params, 2.0).unwrap();
        let model = CtModel::default();
        for burden in [1.0, 2.0, 4.0, 20.0] {
            let (_, flux) = model.saturate(&rec, burden).unwrap();
            let c = model.ceiling(burden);
            assert!(flux.iter().flatten().all(|f| f.abs() <= c + 1e-15));
        }
        assert!(model.saturate(&rec, 0.5).is_err());
    }

    #[test]
    fn decimation_keeps_every_fourth_filtered_sample() {
        let rec = sine_record(7680.0, 2.0, 1.0);
        let out = resample(&rec, 1920.0).unwrap();
        let filter = dsp::butterworth_lowpass(5, 0.8 * 960.0, 7680.0).unwrap();
        let full = filter.filtfilt(&rec.samples[1]);
        assert_eq!(out.len(), 64);
        for (i, v) in out.samples[1].iter().enumerate() {
            assert_eq!(*v, full[4 * i]);
        }
        assert_eq!(out.sampling_freq_hz, 1920.0);
        assert_eq!(out.label, rec.label);
    }

    #[test]
    fn same_rate_is_identity_and_fractional_rejected() {
        let rec = sine_record(7680.0, 1.0, 1.0);
        assert_eq!(resample(&rec, 7680.0).unwrap(), rec);
        assert!(resample(&rec, 5760.0).is_err());
        assert!(resample(&rec, 15360.0).is_err());
    }

    #[test]
    fn decimation_preserves_fundamental() {
        let rec = sine_record(7680.0, 2.0, 1.0);
        let out = resample(&rec, 3840.0).unwrap();
        let fundamental = |x: &[f64], per_cycle: usize| -> f64 {
            // single-bin DFT over whole cycles
            let n = x.len() / per_cycle * per_cycle;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x[..n].iter().enumerate() {
                let w = 2.0 * PI * i as f64 / per_cycle as f64;
                re += v * w.cos();
                im -= v * w.sin();
            }
            2.0 * (re * re + im * im).sqrt() / n as f64
        };
        let a = fundamental(&rec.samples[0], 128);
        let b = fundamental(&out.samples[0], 64);
        assert!((b / a - 1.0).abs() < 0.01, "{a} {b}");
    }
}
