//! ReliefF feature ranking and the forward-selection accuracy curve.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::util::{rng, squared_distance, standardize_columns};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReliefConfig {
    /// Number of sampled instances `T`.
    pub iterations: usize,
    /// Hits and misses per instance; 1 is plain Relief.
    pub neighbors: usize,
    /// Z-score features before measuring distances.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ReliefConfig {
    fn default() -> Self {
        ReliefConfig { iterations: 200, neighbors: 1, standardize: true, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub weights: Vec<f64>,
    pub order: Vec<usize>,
}

impl FeatureRanking {
    /// Order by descending weight, ties to the lower index.
    pub fn from_weights(weights: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
        FeatureRanking { weights, order }
    }

    pub fn top(&self, n: usize) -> &[usize] {
        &self.order[..n.min(self.order.len())]
    }

    /// Rank (0-based) of every feature.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (r, &f) in self.order.iter().enumerate() {
            ranks[f] = r;
        }
        ranks
    }

    /// Average weights over features that share a name and re-rank; names
    /// are returned in first-seen order alongside the merged ranking.
    pub fn merge_by_name(&self, names: &[String]) -> Result<(Vec<String>, FeatureRanking)> {
        if names.len() != self.weights.len() {
            return Err(Error::shape(self.weights.len(), names.len()));
        }
        let mut slots: BTreeMap<&str, usize> = BTreeMap::new();
        let mut merged_names: Vec<String> = Vec::new();
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for (name, w) in names.iter().zip(&self.weights) {
            let slot = *slots.entry(name.as_str()).or_insert_with(|| {
                merged_names.push(name.clone());
                sums.push((0.0, 0));
                sums.len() - 1
            });
            sums[slot].0 += w;
            sums[slot].1 += 1;
        }
        let weights = sums.into_iter().map(|(s, c)| s / c as f64).collect();
        Ok((merged_names, FeatureRanking::from_weights(weights)))
    }

    /// CSV `feature_id,weight,rank` in rank order, rank starting at 1.
    pub fn write_csv<W: Write>(&self, names: &[String], out: W) -> Result<()> {
        if names.len() != self.weights.len() {
            return Err(Error::shape(self.weights.len(), names.len()));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature_id", "weight", "rank"])?;
        for (r, &f) in self.order.iter().enumerate() {
            w.write_record([names[f].clone(), format!("{:.12e}", self.weights[f]), (r + 1).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_matrix(x: &[Vec<f64>], y: &[usize]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::shape(x.len(), y.len()));
    }
    let d = x.first().map(|r| r.len()).ok_or_else(|| Error::invalid("empty feature matrix"))?;
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("ragged feature matrix"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    Ok(d)
}

fn nearest(x: &[Vec<f64>], i: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let mut by_dist: Vec<(f64, usize)> =
        candidates.iter().filter(|&&j| j != i).map(|&j| (squared_distance(&x[i], &x[j]), j)).collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    by_dist.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Per-feature Relief update for one instance with fixed neighbors.
/// `misses` pairs each miss set with its class weight.
pub fn relief_update(weights: &mut [f64], xi: &[f64], hits: &[&[f64]], misses: &[(f64, Vec<&[f64]>)], scale: f64) {
    for (j, w) in weights.iter_mut().enumerate() {
        if !hits.is_empty() {
            let h: f64 = hits.iter().map(|nh| (xi[j] - nh[j]).powi(2)).sum::<f64>() / hits.len() as f64;
            *w -= h * scale;
        }
        for (class_weight, set) in misses {
            if set.is_empty() {
                continue;
            }
            let m: f64 = set.iter().map(|nm| (xi[j] - nm[j]).powi(2)).sum::<f64>() / set.len() as f64;
            *w += class_weight * m * scale;
        }
    }
}

/// ReliefF ranking. Misses are drawn from every other class, weighted by
/// that class's prior renormalized over the non-own classes.
pub fn relieff_rank(x: &[Vec<f64>], y: &[usize], cfg: &ReliefConfig) -> Result<FeatureRanking> {
    let d = check_matrix(x, y)?;
    if cfg.iterations == 0 || cfg.neighbors == 0 {
        return Err(Error::invalid("ReliefF needs iterations and neighbors ≥ 1"));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::invalid("ReliefF needs at least two classes"));
    }
    if let Some((c, _)) = by_class.iter().find(|(_, m)| m.len() < 2) {
        return Err(Error::invalid(format!("class {c} has a single instance")));
    }
    let data = if cfg.standardize { standardize_columns(x) } else { x.to_vec() };
    let m = x.len();
    let mut r = rng(cfg.seed);
    let samples: Vec<usize> = if cfg.iterations <= m {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut r);
        idx.truncate(cfg.iterations);
        idx
    } else {
        (0..cfg.iterations).map(|_| r.random_range(0..m)).collect()
    };
    let prior = |c: usize| by_class[&c].len() as f64 / m as f64;
    let scale = 1.0 / cfg.iterations as f64;
    let mut weights = vec![0.0; d];
    for &i in &samples {
        let own = y[i];
        let hit_idx = nearest(&data, i, &by_class[&own], cfg.neighbors);
        let hits: Vec<&[f64]> = hit_idx.iter().map(|&j| data[j].as_slice()).collect();
        let rest = 1.0 - prior(own);
        let misses: Vec<(f64, Vec<&[f64]>)> = by_class
            .iter()
            .filter(|(&c, _)| c != own)
            .map(|(&c, members)| {
                let idx = nearest(&data, i, members, cfg.neighbors);
                (prior(c) / rest, idx.iter().map(|&j| data[j].as_slice()).collect())
            })
            .collect();
        relief_update(&mut weights, &data[i], &hits, &misses, scale);
    }
    Ok(FeatureRanking::from_weights(weights))
}

/// Default forward-selection checkpoints: 3, 6, ..., 21 features.
pub fn default_curve_steps() -> Vec<usize> {
    (1..=7).map(|i| 3 * i).collect()
}

/// Evaluate the classifier on the top-n ranked columns for each `n` in
/// `steps`. The evaluator receives the reduced matrix and the labels.
pub fn forward_selection_curve<F>(
    x: &[Vec<f64>],
    y: &[usize],
    ranking: &FeatureRanking,
    steps: &[usize],
    mut evaluator: F,
) -> Result<Vec<(usize, f64)>>
where
    F: FnMut(&[Vec<f64>], &[usize]) -> Result<f64>,
{
    let d = check_matrix(x, y)?;
    if ranking.order.len() != d {
        return Err(Error::shape(d, ranking.order.len()));
    }
    let mut curve = Vec::with_capacity(steps.len());
    for &n in steps {
        if n == 0 || n > d {
            return Err(Error::invalid(format!("cannot select {n} of {d} features")));
        }
        let cols = ranking.top(n);
        let reduced: Vec<Vec<f64>> = x.iter().map(|r| cols.iter().map(|&j| r[j]).collect()).collect();
        curve.push((n, evaluator(&reduced, y)?));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn informative_set(n: usize, noise: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = rng(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let mut row = vec![
                if c == 0 { -1.0 } else { 1.0 }
                    + 0.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r),
            ];
            row.extend((0..noise).map(|_| -> f64 { StandardNormal.sample(&mut r) }));
            x.push(row);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separating_feature_ranks_first() {
        let (x, y) = informative_set(200, 9, 11);
        let rank = relieff_rank(&x, &y, &ReliefConfig { iterations: 200, seed: 3, ..Default::default() }).unwrap();
        assert_eq!(rank.order[0], 0);
    }

    #[test]
    fn multiclass_separating_feature_ranks_first() {
        let mut r = rng(5);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..150 {
            let c = i % 3;
            let noise: f64 = StandardNormal.sample(&mut r);
            x.push(vec![StandardNormal.sample(&mut r), c as f64 * 2.0 + 0.2 * noise, StandardNormal.sample(&mut r)]);
            y.push(c);
        }
        let cfg = ReliefConfig { iterations: 150, neighbors: 5, ..Default::default() };
        assert_eq!(relieff_rank(&x, &y, &cfg).unwrap().order[0], 1);
    }

    #[test]
    fn coincident_classes_give_zero_weights() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for p in [[0.0, 1.0], [2.0, -1.0], [1.0, 5.0]] {
            for c in 0..2 {
                for _ in 0..2 {
                    x.push(p.to_vec());
                    y.push(c);
                }
            }
        }
        let rank = relieff_rank(&x, &y, &ReliefConfig { iterations: 12, ..Default::default() }).unwrap();
        assert!(rank.weights.iter().all(|w| *w == 0.0), "{:?}", rank.weights);
    }

    #[test]
    fn same_seed_same_weights() {
        let (x, y) = informative_set(60, 4, 1);
        let cfg = ReliefConfig { iterations: 40, seed: 9, ..Default::default() };
        assert_eq!(relieff_rank(&x, &y, &cfg).unwrap(), relieff_rank(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn singleton_class_rejected() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(relieff_rank(&x, &[0, 0, 1], &ReliefConfig::default()).is_err());
        assert!(relieff_rank(&x, &[0, 0, 0], &ReliefConfig::default()).is_err());
    }

    #[test]
    fn sampling_with_replacement_beyond_dataset() {
        let (x, y) = informative_set(20, 2, 2);
        let rank = relieff_rank(&x, &y, &ReliefConfig { iterations: 100, ..Default::default() }).unwrap();
        assert_eq!(rank.order[0], 0);
    }

    #[test]
    fn update_is_zero_when_neighbors_coincide() {
        let xi = [1.0, -2.0, 3.0];
        let mut w = vec![0.0; 3];
        relief_update(&mut w, &xi, &[&xi], &[(1.0, vec![&xi])], 0.5);
        assert_eq!(w, vec![0.0; 3]);
    }

    #[test]
    fn merge_by_name_averages() {
        let rank = FeatureRanking::from_weights(vec![1.0, 4.0, 3.0, 0.0]);
        let names: Vec<String> = ["q", "cq", "q", "cq"].iter().map(|s| s.to_string()).collect();
        let (merged, r) = rank.merge_by_name(&names).unwrap();
        assert_eq!(merged, vec!["q".to_string(), "cq".to_string()]);
        assert_eq!(r.weights, vec![2.0, 2.0]);
        assert_eq!(r.order, vec![0, 1]);
    }

    #[test]
    fn ranking_csv() {
        let rank = FeatureRanking::from_weights(vec![0.5, 1.5]);
        let mut buf = Vec::new();
        rank.write_csv(&["f0".into(), "f1".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("feature_id,weight,rank"));
        assert!(text.lines().nth(1).unwrap().starts_with("f1,"));
    }

    #[test]
    fn curve_on_separable_data_reaches_one() {
        let (x, y) = informative_set(100, 20, 4);
        let rank = relieff_rank(&x, &y, &ReliefConfig { iterations: 100, ..Default::default() }).unwrap();
        // nearest-centroid evaluator on the selected columns
        let curve = forward_selection_curve(&x, &y, &rank, &default_curve_steps(), |xs, ys| {
            let d = xs[0].len();
            let mut cent = vec![vec![0.0; d]; 2];
            let mut cnt = [0.0; 2];
            for (r, &c) in xs.iter().zip(ys) {
                cnt[c] += 1.0;
                for j in 0..d {
                    cent[c][j] += r[j];
                }
            }
            for c in 0..2 {
                cent[c].iter_mut().for_each(|v| *v /= cnt[c]);
            }
            let ok = xs
                .iter()
                .zip(ys)
                .filter(|(r, &c)| {
                    let pred = usize::from(squared_distance(r, &cent[1]) < squared_distance(r, &cent[0]));
                    pred == c
                })
                .count();
            Ok(ok as f64 / xs.len() as f64)
        })
        .unwrap();
        assert_eq!(curve.len(), 7);
        assert!(curve[0].1 >= 0.99, "{curve:?}");
    }

    #[test]
    fn curve_edge_cases() {
        let (x, y) = informative_set(10, 2, 4);
        let rank = FeatureRanking::from_weights(vec![0.0; 3]);
        let flat = forward_selection_curve(&x, &y, &rank, &[1, 2, 3], |_, _| Ok(0.5)).unwrap();
        assert!(flat.iter().all(|(_, a)| *a == 0.5));
        assert!(forward_selection_curve(&x, &y, &rank, &[4], |_, _| Ok(0.5)).is_err());
        let failing = forward_selection_curve(&x, &y, &rank, &[1], |_, _| Err(Error::invalid("boom")));
        assert!(failing.is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn order_invariant_to_common_scaling(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let (x, y) = informative_set(40, 4, seed);
            let cfg = ReliefConfig { iterations: 40, seed, ..Default::default() };
            let a = relieff_rank(&x, &y, &cfg).unwrap();
            let xs: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
            let b = relieff_rank(&xs, &y, &cfg).unwrap();
            for (wa, wb) in a.weights.iter().zip(&b.weights) {
                prop_assert!((wa - wb).abs() < 1e-9);
            }
        }

        #[test]
        fn duplicate_feature_leaves_other_updates(
            xi in prop::collection::vec(-3.0f64..3.0, 4),
            nh in prop::collection::vec(-3.0f64..3.0, 4),
            nm in prop::collection::vec(-3.0f64..3.0, 4),
        ) {
            let mut w = vec![0.0; 4];
            relief_update(&mut w, &xi, &[&nh], &[(1.0, vec![&nm])], 0.1);
            let dup = |v: &[f64]| { let mut v = v.to_vec(); v.push(v[2]); v };
            let (xd, hd, md) = (dup(&xi), dup(&nh), dup(&nm));
            let mut wd = vec![0.0; 5];
            relief_update(&mut wd, &xd, &[&hd], &[(1.0, vec![&md])], 0.1);
            prop_assert_eq!(&wd[..4], &w[..]);
            prop_assert_eq!(wd[4], w[2]);
        }

        #[test]
        fn order_sorts_weights(w in prop::collection::vec(-5.0f64..5.0, 1..20)) {
            let r = FeatureRanking::from_weights(w.clone());
            for pair in r.order.windows(2) {
                prop_assert!(w[pair[0]] > w[pair[1]] || (w[pair[0]] == w[pair[1]] && pair[0] < pair[1]));
            }
        }
    }
}
