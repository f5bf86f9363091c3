use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::disturb::apply_noise;
use super::scenario::{Bus, FaultType, Position, PriorityMode, ScenarioKind, ScenarioSpec};
use super::waveform::{synthesize, SignalModelParams, WaveformRecord};
use crate::error::{Error, Result};
use crate::util;

/// Scenario grid mirroring the fault and switching study tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub priority_modes: Vec<PriorityMode>,
    pub positions: Vec<Position>,
    pub fault_types: Vec<FaultType>,
    pub fault_impedances_ohm: Vec<f64>,
    pub fault_onsets_s: Vec<f64>,
    pub switch_kinds: Vec<ScenarioKind>,
    pub generator_states: Vec<bool>,
    pub buses: Vec<Bus>,
    pub ratings: Vec<u8>,
    pub switch_onsets_s: Vec<f64>,
    pub hif_positions: Vec<Position>,
    pub hif_onsets_s: Vec<f64>,
    /// Keep a seeded random subset of this many fault scenarios.
    pub max_faults: Option<usize>,
    /// Keep a seeded random subset of this many switching scenarios.
    pub max_switching: Option<usize>,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            priority_modes: vec![PriorityMode::P, PriorityMode::Q],
            positions: Position::ALL.to_vec(),
            fault_types: FaultType::ALL.to_vec(),
            fault_impedances_ohm: vec![0.01, 1.0, 10.0],
            fault_onsets_s: vec![9.0, 9.00334, 9.00668, 9.01002, 9.01336, 9.0167],
            switch_kinds: vec![ScenarioKind::CapacitorSwitch, ScenarioKind::LoadSwitch],
            generator_states: vec![true, false],
            buses: Bus::ALL.to_vec(),
            ratings: vec![1, 2, 3, 4],
            switch_onsets_s: (0..25).map(|i| 9.0 + 0.00069 * i as f64).collect(),
            hif_positions: Vec::new(),
            hif_onsets_s: Vec::new(),
            max_faults: None,
            max_switching: None,
            seed: 0,
        }
    }
}

impl GridConfig {
    /// Grid with the given fault and switching subset sizes.
    pub fn subsampled(faults: usize, switching: usize, seed: u64) -> Self {
        GridConfig { max_faults: Some(faults), max_switching: Some(switching), seed, ..Default::default() }
    }

    pub fn fault_scenarios(&self) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        for &mode in &self.priority_modes {
            for &pos in &self.positions {
                for &ft in &self.fault_types {
                    for &rf in &self.fault_impedances_ohm {
                        for &onset in &self.fault_onsets_s {
                            out.push(ScenarioSpec::fault(ft, rf, onset, pos).with_mode(mode));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn switching_scenarios(&self) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        for &kind in &self.switch_kinds {
            for &mode in &self.priority_modes {
                for &gen in &self.generator_states {
                    for &bus in &self.buses {
                        for &rating in &self.ratings {
                            for &onset in &self.switch_onsets_s {
                                let mut s = ScenarioSpec::switching(kind, bus, rating, onset).with_mode(mode);
                                s.infeed = gen;
                                out.push(s);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn hif_scenarios(&self) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        for &mode in &self.priority_modes {
            for &pos in &self.hif_positions {
                for &onset in &self.hif_onsets_s {
                    out.push(ScenarioSpec::hif(onset, pos, 0).with_mode(mode));
                }
            }
        }
        out
    }

    /// All scenarios in grid order, subsampled and seeded deterministically.
    pub fn enumerate(&self) -> Result<Vec<ScenarioSpec>> {
        let faults = self.subsample(self.fault_scenarios(), self.max_faults, 1);
        let switching = self.subsample(self.switching_scenarios(), self.max_switching, 2);
        let mut all: Vec<ScenarioSpec> = faults.into_iter().chain(switching).chain(self.hif_scenarios()).collect();
        if all.is_empty() {
            return Err(Error::invalid("scenario grid is empty"));
        }
        for (i, s) in all.iter_mut().enumerate() {
            s.seed = util::mix_seed(self.seed, i as u64);
        }
        Ok(all)
    }

    fn subsample(&self, items: Vec<ScenarioSpec>, keep: Option<usize>, salt: u64) -> Vec<ScenarioSpec> {
        match keep {
            Some(k) if k < items.len() => {
                let mut idx: Vec<usize> = (0..items.len()).collect();
                idx.shuffle(&mut util::rng(util::mix_seed(self.seed, salt)));
                let mut chosen = idx[..k].to_vec();
                chosen.sort_unstable();
                chosen.into_iter().map(|i| items[i].clone()).collect()
            }
            _ => items,
        }
    }
}

/// Synthesize every scenario with the window aligned so that onset falls
/// `pre_onset_cycles` into the record, then add noise when `snr_db` is finite.
pub fn generate(
    scenarios: &[ScenarioSpec],
    params: &SignalModelParams,
    window_cycles: f64,
    pre_onset_cycles: f64,
    snr_db: f64,
) -> Result<Vec<WaveformRecord>> {
    scenarios
        .iter()
        .map(|s| {
            let mut p = params.clone();
            p.window_start_s = s.onset_time_s - pre_onset_cycles / params.system_freq_hz;
            let rec = synthesize(s, &p, window_cycles)?;
            Ok(apply_noise(&rec, snr_db, util::mix_seed(s.seed, 0x6e6f697365)))
        })
        .collect()
}
