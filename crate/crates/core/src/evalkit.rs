//! Measurement layer: splits, SMOTE, classification metrics.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::util::{rng, squared_distance};

/// Index split into `(train, test)`, each sorted ascending.
pub fn split_indices(labels: &[usize], ratio: f64, stratified: bool, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} outside (0,1)")));
    }
    if labels.len() < 2 {
        return Err(Error::invalid("need at least two samples to split"));
    }
    let mut r = rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if stratified {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &c) in labels.iter().enumerate() {
            by_class.entry(c).or_default().push(i);
        }
        for (c, mut members) in by_class {
            if members.len() < 2 {
                return Err(Error::invalid(format!("class {c} has fewer than 2 members")));
            }
            members.shuffle(&mut r);
            let n_train = ((members.len() as f64 * ratio).round() as usize).clamp(1, members.len() - 1);
            train.extend_from_slice(&members[..n_train]);
            test.extend_from_slice(&members[n_train..]);
        }
    } else {
        let mut idx: Vec<usize> = (0..labels.len()).collect();
        idx.shuffle(&mut r);
        let n_train = ((labels.len() as f64 * ratio).round() as usize).clamp(1, labels.len() - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Provenance of one synthetic SMOTE point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoteOrigin {
    pub parent: usize,
    pub neighbor: usize,
    pub u: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoteOutput {
    /// Originals first, in input order, then synthetic points.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    /// One entry per synthetic point.
    pub origins: Vec<SmoteOrigin>,
}

/// Oversample every class up to the majority count.
pub fn smote(x: &[Vec<f64>], y: &[usize], k: usize, seed: u64) -> Result<SmoteOutput> {
    if x.len() != y.len() {
        return Err(Error::shape(x.len(), y.len()));
    }
    if k == 0 {
        return Err(Error::invalid("SMOTE needs k ≥ 1"));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let target = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut out = SmoteOutput { x: x.to_vec(), y: y.to_vec(), origins: Vec::new() };
    let mut r = rng(seed);
    for (&c, members) in &by_class {
        let deficit = target - members.len();
        if deficit == 0 {
            continue;
        }
        if members.len() < k + 1 {
            return Err(Error::invalid(format!(
                "class {c} has {} members, SMOTE with k={k} needs {}",
                members.len(),
                k + 1
            )));
        }
        let neighbors: Vec<Vec<usize>> = members
            .iter()
            .map(|&i| {
                let mut d: Vec<(f64, usize)> =
                    members.iter().filter(|&&j| j != i).map(|&j| (squared_distance(&x[i], &x[j]), j)).collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect();
        for s in 0..deficit {
            let slot = s % members.len();
            let parent = members[slot];
            let neighbor = neighbors[slot][r.random_range(0..k)];
            let u: f64 = r.random();
            let point = x[parent].iter().zip(&x[neighbor]).map(|(a, b)| a + u * (b - a)).collect();
            out.x.push(point);
            out.y.push(c);
            out.origins.push(SmoteOrigin { parent, neighbor, u });
        }
    }
    Ok(out)
}

/// Column z-scoring fitted on one set and applied to others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).ok_or_else(|| Error::invalid("cannot fit on no rows"))?;
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::shape(d, r.len()));
            }
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        let mut std = vec![0.0; d];
        for r in rows {
            std.iter_mut().zip(r.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        std.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
        Ok(Standardizer { mean, std })
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

impl MetricsReport {
    pub fn write_confusion_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["true\\pred".to_string()];
        header.extend((0..self.confusion.len()).map(|c| c.to_string()));
        w.write_record(&header)?;
        for (t, row) in self.confusion.iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Ranking metrics input: one score per sample, higher = more positive.
fn ranked_groups(positive: &[bool], scores: &[f64]) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut tp = 0;
        let mut fp = 0;
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if positive[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        groups.push((tp, fp));
    }
    groups
}

/// Trapezoidal area under the ROC curve; `None` when either class is absent.
pub fn auroc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return None;
    }
    let (mut tp, mut fp, mut area) = (0usize, 0usize, 0.0);
    for (gtp, gfp) in ranked_groups(positive, scores) {
        let (x0, y0) = (fp as f64 / n as f64, tp as f64 / p as f64);
        tp += gtp;
        fp += gfp;
        let (x1, y1) = (fp as f64 / n as f64, tp as f64 / p as f64);
        area += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Some(area)
}

/// Average precision: step integration of the precision-recall curve.
pub fn auprc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let p = positive.iter().filter(|&&b| b).count();
    if p == 0 || p == positive.len() {
        return None;
    }
    let (mut tp, mut fp, mut area) = (0usize, 0usize, 0.0);
    for (gtp, gfp) in ranked_groups(positive, scores) {
        tp += gtp;
        fp += gfp;
        area += gtp as f64 / p as f64 * (tp as f64 / (tp + fp) as f64);
    }
    Some(area)
}

/// Full report. `scores[i][c]` is the score of class `c` for sample `i`.
/// Binary problems score class 1; multi-class uses one-vs-rest macro means.
pub fn metrics(
    y_true: &[usize],
    y_pred: &[usize],
    scores: Option<&[Vec<f64>]>,
    n_classes: usize,
) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("metrics of an empty set"));
    }
    if let Some(&c) = y_true.iter().chain(y_pred).find(|&&c| c >= n_classes) {
        return Err(Error::invalid(format!("label {c} outside {n_classes} classes")));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassMetrics { class: c, precision, recall, f1, support }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n_classes as f64;
    let (auroc_v, auprc_v) = match scores {
        None => (None, None),
        Some(s) => {
            if s.len() != y_true.len() || s.iter().any(|r| r.len() != n_classes) {
                return Err(Error::invalid("score matrix does not match labels"));
            }
            let classes: Vec<usize> = if n_classes == 2 { vec![1] } else { (0..n_classes).collect() };
            let mut roc = Vec::new();
            let mut pr = Vec::new();
            for c in classes {
                let positive: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
                let col: Vec<f64> = s.iter().map(|r| r[c]).collect();
                roc.extend(auroc(&positive, &col));
                pr.extend(auprc(&positive, &col));
            }
            let avg = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            (avg(roc), avg(pr))
        }
    };
    Ok(MetricsReport {
        n_samples: y_true.len(),
        accuracy: correct as f64 / y_true.len() as f64,
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        per_class,
        auroc: auroc_v,
        auprc: auprc_v,
        confusion,
    })
}
