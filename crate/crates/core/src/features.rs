//! Change-quantile and quantile features, 69 per phase.
//!
//! Per-phase order: the 15 `(h, l)` corridors (h = 1, .8, .6, .4, .2; for each
//! h every l < h from .8 down to 0), each with aggregates mean, variance,
//! stddev, median; then quantiles p = 0.1 ..= 0.9.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::synth::{Phase, WaveformRecord};

pub const FEATURES_PER_PHASE: usize = 69;
pub const CQ_FEATURES: usize = 60;
pub const QUANTILE_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
const CORRIDOR_LEVELS: [f64; 5] = [1.0, 0.8, 0.6, 0.4, 0.2];
const LOWER_LEVELS: [f64; 5] = [0.8, 0.6, 0.4, 0.2, 0.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Mean,
    Variance,
    Stddev,
    Median,
}

impl Aggregate {
    pub const ALL: [Aggregate; 4] = [Aggregate::Mean, Aggregate::Variance, Aggregate::Stddev, Aggregate::Median];

    fn name(self) -> &'static str {
        match self {
            Aggregate::Mean => "mean",
            Aggregate::Variance => "var",
            Aggregate::Stddev => "std",
            Aggregate::Median => "median",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeQuantileSpec {
    pub h: f64,
    pub l: f64,
    pub aggregate: Aggregate,
}

impl ChangeQuantileSpec {
    pub fn new(h: f64, l: f64, aggregate: Aggregate) -> Result<Self> {
        let s = ChangeQuantileSpec { h, l, aggregate };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 1.0 && self.l >= 0.0 && self.l < 1.0 && self.l < self.h) {
            return Err(Error::invalid(format!("invalid corridor h={} l={}", self.h, self.l)));
        }
        Ok(())
    }
}

/// The 15 corridors in table order.
pub fn corridors() -> Vec<(f64, f64)> {
    CORRIDOR_LEVELS.iter().flat_map(|&h| LOWER_LEVELS.iter().filter(move |&&l| l < h).map(move |&l| (h, l))).collect()
}

/// Stable per-phase feature identifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FeatureId {
    ChangeQuantile(ChangeQuantileSpec),
    Quantile(f64),
}

impl FeatureId {
    /// All 69 per-phase ids in extraction order.
    pub fn per_phase() -> Vec<FeatureId> {
        let mut ids = Vec::with_capacity(FEATURES_PER_PHASE);
        for (h, l) in corridors() {
            for aggregate in Aggregate::ALL {
                ids.push(FeatureId::ChangeQuantile(ChangeQuantileSpec { h, l, aggregate }));
            }
        }
        ids.extend(QUANTILE_LEVELS.iter().map(|&p| FeatureId::Quantile(p)));
        ids
    }

    pub fn index(&self) -> Option<usize> {
        let key = self.to_string();
        FeatureId::per_phase().iter().position(|id| id.to_string() == key)
    }

    pub fn aggregate(&self) -> Option<Aggregate> {
        match self {
            FeatureId::ChangeQuantile(s) => Some(s.aggregate),
            FeatureId::Quantile(_) => None,
        }
    }

    pub fn evaluate(&self, signal: &[f64]) -> Result<f64> {
        match self {
            FeatureId::ChangeQuantile(s) => change_quantile(signal, s),
            FeatureId::Quantile(p) => quantile_feature(signal, *p),
        }
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureId::ChangeQuantile(s) => write!(f, "cq_h{:.1}_l{:.1}_{}", s.h, s.l, s.aggregate.name()),
            FeatureId::Quantile(p) => write!(f, "q_{p:.1}"),
        }
    }
}

impl FromStr for FeatureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureId::per_phase()
            .into_iter()
            .find(|id| id.to_string() == s)
            .ok_or_else(|| Error::UnknownFeature(s.to_string()))
    }
}

impl Serialize for FeatureId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Phase-qualified ids, e.g. `a.cq_h1.0_l0.0_mean`.
    pub feature_ids: Vec<String>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Linear-interpolation quantile of already sorted data, `(n-1)p` rule.
pub(crate) fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if hi == lo {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn sorted_copy(signal: &[f64]) -> Vec<f64> {
    let mut s = signal.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Empirical p-quantile with linear interpolation between order statistics.
pub fn quantile_feature(signal: &[f64], p: f64) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::invalid("quantile of an empty signal"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("quantile level {p} outside (0, 1)")));
    }
    Ok(sorted_quantile(&sorted_copy(signal), p))
}

/// Absolute consecutive changes whose endpoints both lie in the quantile
/// corridor `[q(l), q(h)]`.
fn corridor_changes(signal: &[f64], sorted: &[f64], h: f64, l: f64) -> Vec<f64> {
    let lo = sorted_quantile(sorted, l);
    let hi = sorted_quantile(sorted, h);
    let inside = |v: f64| v >= lo && v <= hi;
    signal.windows(2).filter(|w| inside(w[0]) && inside(w[1])).map(|w| (w[1] - w[0]).abs()).collect()
}

fn aggregate(changes: &mut [f64], agg: Aggregate) -> f64 {
    if changes.is_empty() {
        return 0.0;
    }
    let n = changes.len() as f64;
    let mean = changes.iter().sum::<f64>() / n;
    match agg {
        Aggregate::Mean => mean,
        Aggregate::Variance => changes.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n,
        Aggregate::Stddev => (changes.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt(),
        Aggregate::Median => {
            changes.sort_by(f64::total_cmp);
            sorted_quantile(changes, 0.5)
        }
    }
}

/// Aggregate of `|x(t+1) - x(t)|` over pairs inside the `(h, l)` corridor;
/// zero when no pair qualifies.
pub fn change_quantile(signal: &[f64], spec: &ChangeQuantileSpec) -> Result<f64> {
    spec.validate()?;
    if signal.len() < 2 {
        return Err(Error::invalid("change quantile needs at least 2 samples"));
    }
    let sorted = sorted_copy(signal);
    let mut changes = corridor_changes(signal, &sorted, spec.h, spec.l);
    Ok(aggregate(&mut changes, spec.aggregate))
}

/// The 69 features of one phase signal.
pub fn extract_phase(signal: &[f64]) -> Result<Vec<f64>> {
    if signal.len() < 2 {
        return Err(Error::invalid("feature extraction needs at least 2 samples"));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("phase signal".into()));
    }
    let sorted = sorted_copy(signal);
    let mut out = Vec::with_capacity(FEATURES_PER_PHASE);
    for (h, l) in corridors() {
        let changes = corridor_changes(signal, &sorted, h, l);
        for agg in Aggregate::ALL {
            out.push(aggregate(&mut changes.clone(), agg));
        }
    }
    out.extend(QUANTILE_LEVELS.iter().map(|&p| sorted_quantile(&sorted, p)));
    Ok(out)
}

fn qualified(phase: Phase, id: &str) -> String {
    format!("{}.{id}", phase.letter())
}

/// All 207 features, phases a, b, c concatenated.
pub fn extract_all(rec: &WaveformRecord) -> Result<FeatureVector> {
    let ids = FeatureId::per_phase();
    let mut values = Vec::with_capacity(3 * FEATURES_PER_PHASE);
    let mut feature_ids = Vec::with_capacity(3 * FEATURES_PER_PHASE);
    for phase in Phase::ALL {
        values.extend(extract_phase(&rec.samples[phase.index()])?);
        feature_ids.extend(ids.iter().map(|id| qualified(phase, &id.to_string())));
    }
    Ok(FeatureVector { values, feature_ids })
}

/// Resolve and validate a per-phase selection of distinct ids.
pub fn parse_selection(selection: &[String]) -> Result<Vec<FeatureId>> {
    let mut parsed: Vec<FeatureId> = Vec::with_capacity(selection.len());
    for s in selection {
        let id: FeatureId = s.parse()?;
        if parsed.iter().any(|p| p.to_string() == id.to_string()) {
            return Err(Error::invalid(format!("duplicate feature id `{s}` in selection")));
        }
        parsed.push(id);
    }
    Ok(parsed)
}

/// The selected per-phase features for phases a, b, c, concatenated.
pub fn extract_selected(rec: &WaveformRecord, selection: &[String]) -> Result<FeatureVector> {
    let ids = parse_selection(selection)?;
    if ids.len() != 5 {
        return Err(Error::invalid(format!("selection needs 5 per-phase ids, got {}", ids.len())));
    }
    let mut values = Vec::with_capacity(3 * ids.len());
    let mut feature_ids = Vec::with_capacity(3 * ids.len());
    for phase in Phase::ALL {
        for id in &ids {
            values.push(id.evaluate(&rec.samples[phase.index()])?);
            feature_ids.push(qualified(phase, &id.to_string()));
        }
    }
    Ok(FeatureVector { values, feature_ids })
}

/// Pick selected columns out of full 207-length vectors without recomputing.
pub fn select_from_full(full: &FeatureVector, selection: &[String]) -> Result<FeatureVector> {
    let ids = parse_selection(selection)?;
    let mut values = Vec::new();
    let mut feature_ids = Vec::new();
    for phase in Phase::ALL {
        for id in &ids {
            let idx = id.index().ok_or_else(|| Error::UnknownFeature(id.to_string()))?;
            let col = phase.index() * FEATURES_PER_PHASE + idx;
            values.push(*full.values.get(col).ok_or_else(|| Error::Shape {
                expected: format!("{} features", 3 * FEATURES_PER_PHASE),
                found: full.len().to_string(),
            })?);
            feature_ids.push(qualified(phase, &id.to_string()));
        }
    }
    Ok(FeatureVector { values, feature_ids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const WORKED: [f64; 5] = [-0.4, -0.2, -0.1, 0.5, 0.0];

    fn cq(signal: &[f64], h: f64, l: f64, agg: Aggregate) -> f64 {
        change_quantile(signal, &ChangeQuantileSpec::new(h, l, agg).unwrap()).unwrap()
    }

    #[test]
    fn worked_mean_change() {
        assert_eq!(cq(&WORKED, 1.0, 0.0, Aggregate::Mean), 0.35);
    }

    #[test]
    fn worked_median_change() {
        // changes {0.2, 0.1, 0.6, 0.5}: median = (0.2 + 0.5) / 2
        let got = cq(&WORKED, 1.0, 0.0, Aggregate::Median);
        assert!((got - 0.35).abs() < 1e-15);
    }

    #[test]
    fn constant_signal_has_no_change() {
        for agg in Aggregate::ALL {
            assert_eq!(cq(&[2.0; 10], 0.6, 0.2, agg), 0.0);
        }
    }

    #[test]
    fn invalid_corridor_rejected() {
        assert!(ChangeQuantileSpec::new(0.4, 0.6, Aggregate::Mean).is_err());
        assert!(ChangeQuantileSpec::new(0.4, 0.4, Aggregate::Mean).is_err());
        assert!(ChangeQuantileSpec::new(1.2, 0.0, Aggregate::Mean).is_err());
        assert!(change_quantile(&[1.0], &ChangeQuantileSpec { h: 1.0, l: 0.0, aggregate: Aggregate::Mean }).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile_feature(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
        assert_eq!(quantile_feature(&[0.0, 10.0], 0.25).unwrap(), 2.5);
        assert_eq!(quantile_feature(&[4.2; 7], 0.3).unwrap(), 4.2);
        assert!(quantile_feature(&[], 0.5).is_err());
        assert!(quantile_feature(&[1.0], 1.0).is_err());
    }

    #[test]
    fn per_phase_census() {
        let ids = FeatureId::per_phase();
        assert_eq!(corridors().len(), 15);
        assert_eq!(ids.len(), FEATURES_PER_PHASE);
        assert_eq!(ids.iter().filter(|i| i.aggregate().is_some()).count(), CQ_FEATURES);
        let names: std::collections::HashSet<String> = ids.iter().map(|i| i.to_string()).collect();
        assert_eq!(names.len(), FEATURES_PER_PHASE);
        assert_eq!(ids[0].to_string(), "cq_h1.0_l0.8_mean");
        assert_eq!(ids[59].to_string(), "cq_h0.2_l0.0_median");
        assert_eq!(ids[68].to_string(), "q_0.9");
        for id in &ids {
            assert_eq!(id.to_string().parse::<FeatureId>().unwrap().to_string(), id.to_string());
        }
    }

    #[test]
    fn selection_rejects_duplicates_and_unknowns() {
        let dup = vec!["q_0.1".to_string(), "q_0.1".to_string()];
        assert!(parse_selection(&dup).is_err());
        assert!(matches!(parse_selection(&["cq_bogus".to_string()]), Err(Error::UnknownFeature(_))));
    }

    fn brute_pairs(signal: &[f64], h: f64, l: f64) -> usize {
        let mut s = signal.to_vec();
        s.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted_quantile(&s, l), sorted_quantile(&s, h));
        signal.windows(2).filter(|w| w.iter().all(|v| *v >= lo && *v <= hi)).count()
    }

    proptest! {
        #[test]
        fn full_corridor_uses_all_pairs(signal in prop::collection::vec(-5.0f64..5.0, 2..40)) {
            let diffs: Vec<f64> = signal.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            prop_assert!((cq(&signal, 1.0, 0.0, Aggregate::Mean) - mean).abs() < 1e-12);
        }

        #[test]
        fn widening_corridor_never_loses_pairs(signal in prop::collection::vec(-5.0f64..5.0, 2..40)) {
            let pairs = corridors();
            for &(h, l) in &pairs {
                for &(h2, l2) in &pairs {
                    if h2 >= h && l2 <= l {
                        prop_assert!(brute_pairs(&signal, h2, l2) >= brute_pairs(&signal, h, l));
                    }
                }
            }
        }

        #[test]
        fn stddev_squared_is_variance(signal in prop::collection::vec(-5.0f64..5.0, 2..40)) {
            for (h, l) in corridors() {
                let v = cq(&signal, h, l, Aggregate::Variance);
                let s = cq(&signal, h, l, Aggregate::Stddev);
                prop_assert!((s * s - v).abs() < 1e-12);
            }
        }
    }
}
