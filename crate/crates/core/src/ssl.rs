//! Graph-based semi-supervised labelling (spreading, propagation),
//! self-training, and pseudo-label fusion.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::dsp::solve_dense;
use crate::error::{Error, Result};
use crate::evalkit::{ClassMetrics, MetricsReport};
use crate::util::{rng, squared_distance};

/// Marker for an unlabeled sample.
pub const MISSING: i64 = -1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "lowercase")]
pub enum KernelSpec {
    Knn { k: usize },
    Rbf { gamma: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffinityGraph {
    pub kernel: KernelSpec,
    pub a: Vec<Vec<f64>>,
    /// `D^{-1/2} A D^{-1/2}`; rows of isolated nodes are zero.
    pub s: Vec<Vec<f64>>,
    pub components: usize,
    pub isolated: Vec<usize>,
}

impl AffinityGraph {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn is_connected(&self) -> bool {
        self.components == 1
    }
}

/// `k` nearest neighbours of every point, ties broken by index.
pub fn knn_neighbors(x: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    (0..x.len())
        .map(|i| {
            let mut d: Vec<(f64, usize)> =
                (0..x.len()).filter(|&j| j != i).map(|j| (squared_distance(&x[i], &x[j]), j)).collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

fn count_components(a: &[Vec<f64>]) -> usize {
    let m = a.len();
    let mut seen = vec![false; m];
    let mut count = 0;
    for start in 0..m {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..m {
                if a[i][j] > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

pub fn build_affinity(x: &[Vec<f64>], kernel: KernelSpec) -> Result<AffinityGraph> {
    let m = x.len();
    if m < 2 {
        return Err(Error::invalid("affinity graph needs at least 2 points"));
    }
    let mut a = vec![vec![0.0; m]; m];
    match kernel {
        KernelSpec::Knn { k } => {
            if k == 0 || k >= m {
                return Err(Error::invalid(format!("k={k} must lie in [1, {})", m)));
            }
            for (i, nbrs) in knn_neighbors(x, k).into_iter().enumerate() {
                for j in nbrs {
                    a[i][j] = 1.0;
                    a[j][i] = 1.0;
                }
            }
        }
        KernelSpec::Rbf { gamma } => {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::invalid("rbf gamma must be positive"));
            }
            for i in 0..m {
                for j in i + 1..m {
                    let w = (-gamma * squared_distance(&x[i], &x[j])).exp();
                    a[i][j] = w;
                    a[j][i] = w;
                }
            }
        }
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let s = (0..m).map(|i| (0..m).map(|j| a[i][j] * inv_sqrt[i] * inv_sqrt[j]).collect()).collect();
    let isolated = (0..m).filter(|&i| deg[i] == 0.0).collect();
    let components = count_components(&a);
    Ok(AffinityGraph { kernel, a, s, components, isolated })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelMatrix {
    pub y: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub labeled: Vec<bool>,
    pub iterations: usize,
    pub residual: f64,
}

impl LabelMatrix {
    /// One-hot `Y` from labels with [`MISSING`] for unlabeled samples.
    pub fn initial(labels: &[i64], n_classes: usize) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
        let mut y = vec![vec![0.0; n_classes]; labels.len()];
        let mut mask = vec![false; labels.len()];
        for (i, &l) in labels.iter().enumerate() {
            if l == MISSING {
                continue;
            }
            if l < 0 || l as usize >= n_classes {
                return Err(Error::invalid(format!("label {l} outside 0..{n_classes}")));
            }
            y[i][l as usize] = 1.0;
            mask[i] = true;
        }
        Ok((y, mask))
    }

    /// Argmax label and normalized confidence per row; zero rows give `None`.
    pub fn predictions(&self) -> Vec<Option<(usize, f64)>> {
        self.f
            .iter()
            .map(|row| {
                let total: f64 = row.iter().sum();
                if !(total > 0.0) {
                    return None;
                }
                let (c, best) =
                    row.iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, (c, &v)| if v > acc.1 { (c, v) } else { acc });
                Some((c, best / total))
            })
            .collect()
    }
}

fn mat_mul(s: &[Vec<f64>], f: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let c = f.first().map_or(0, |r| r.len());
    s.iter()
        .map(|row| {
            let mut out = vec![0.0; c];
            for (w, fr) in row.iter().zip(f) {
                if *w != 0.0 {
                    for (o, v) in out.iter_mut().zip(fr) {
                        *o += w * v;
                    }
                }
            }
            out
        })
        .collect()
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_labels(graph: &AffinityGraph, labels: &[i64]) -> Result<()> {
    if labels.len() != graph.len() {
        return Err(Error::shape(graph.len(), labels.len()));
    }
    Ok(())
}

/// Iterate `F ← αSF + (1−α)Y` from `F = Y`.
pub fn label_spreading(
    graph: &AffinityGraph,
    labels: &[i64],
    n_classes: usize,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LabelMatrix> {
    check_labels(graph, labels)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0,1)")));
    }
    let (y, labeled) = LabelMatrix::initial(labels, n_classes)?;
    let mut f = y.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let sf = mat_mul(&graph.s, &f);
        let next: Vec<Vec<f64>> = sf
            .iter()
            .zip(&y)
            .map(|(sr, yr)| sr.iter().zip(yr).map(|(s, y)| alpha * s + (1.0 - alpha) * y).collect())
            .collect();
        residual = max_abs_diff(&next, &f);
        f = next;
        if residual < tol {
            return Ok(LabelMatrix { y, f, labeled, iterations: it, residual });
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

/// Direct solve of `(I − αS) F = (1−α) Y`.
pub fn label_spreading_closed_form(graph: &AffinityGraph, y: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    let m = graph.len();
    let c = y.first().map_or(0, |r| r.len());
    let lhs: Vec<Vec<f64>> =
        (0..m).map(|i| (0..m).map(|j| f64::from(u8::from(i == j)) - alpha * graph.s[i][j]).collect()).collect();
    let cols: Vec<Vec<f64>> =
        (0..c).map(|k| solve_dense(lhs.clone(), y.iter().map(|r| (1.0 - alpha) * r[k]).collect())).collect();
    (0..m).map(|i| (0..c).map(|k| cols[k][i]).collect()).collect()
}

/// Iterate `F ← SF` and re-clamp labeled rows to `Y` after every step.
pub fn label_propagation(
    graph: &AffinityGraph,
    labels: &[i64],
    n_classes: usize,
    tol: f64,
    max_iter: usize,
) -> Result<LabelMatrix> {
    check_labels(graph, labels)?;
    let (y, labeled) = LabelMatrix::initial(labels, n_classes)?;
    if !labeled.iter().any(|&l| l) {
        return Err(Error::invalid("label propagation needs at least one labeled node"));
    }
    let mut f = y.clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut next = mat_mul(&graph.s, &f);
        for (i, row) in next.iter_mut().enumerate() {
            if labeled[i] {
                row.clone_from(&y[i]);
            }
        }
        residual = max_abs_diff(&next, &f);
        f = next;
        if residual < tol {
            return Ok(LabelMatrix { y, f, labeled, iterations: it, residual });
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual })
}

/// Anything that can be fitted and emit class probabilities.
pub trait ProbabilisticClassifier {
    fn fit(&mut self, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<()>;
    fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
}

/// Class frequencies among the `k` nearest training points.
#[derive(Clone, Debug, Default)]
pub struct KnnProba {
    pub k: usize,
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    n_classes: usize,
}

impl KnnProba {
    pub fn new(k: usize) -> Self {
        KnnProba { k, ..Default::default() }
    }
}

impl ProbabilisticClassifier for KnnProba {
    fn fit(&mut self, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<()> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::invalid("kNN needs a nonempty, aligned training set"));
        }
        if self.k == 0 {
            return Err(Error::invalid("kNN needs k ≥ 1"));
        }
        self.x = x.to_vec();
        self.y = y.to_vec();
        self.n_classes = n_classes;
        Ok(())
    }

    fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if self.x.is_empty() {
            return Err(Error::invalid("kNN used before fit"));
        }
        let k = self.k.min(self.x.len());
        Ok(x.iter()
            .map(|q| {
                let mut d: Vec<(f64, usize)> =
                    self.x.iter().enumerate().map(|(j, p)| (squared_distance(q, p), j)).collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut p = vec![0.0; self.n_classes];
                for &(_, j) in d.iter().take(k) {
                    p[self.y[j]] += 1.0 / k as f64;
                }
                p
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainConfig {
    pub threshold: f64,
    pub max_rounds: usize,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig { threshold: 0.8, max_rounds: 10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfTrainResult {
    /// Per unlabeled sample: label and confidence at absorption.
    pub pseudo: Vec<Option<(usize, f64)>>,
    pub rounds: usize,
}

impl SelfTrainResult {
    pub fn absorbed(&self) -> Vec<usize> {
        self.pseudo.iter().enumerate().filter_map(|(i, p)| p.map(|_| i)).collect()
    }
}

/// Fit, score the remaining unlabeled pool, absorb every sample with
/// confidence ≥ τ, repeat until nothing is absorbed or `max_rounds`.
pub fn self_train<C: ProbabilisticClassifier>(
    x_labeled: &[Vec<f64>],
    y: &[usize],
    x_unlabeled: &[Vec<f64>],
    n_classes: usize,
    cfg: &SelfTrainConfig,
    base: &mut C,
) -> Result<SelfTrainResult> {
    if !(cfg.threshold > 0.5 && cfg.threshold < 1.0) {
        return Err(Error::invalid(format!("threshold {} outside (0.5, 1)", cfg.threshold)));
    }
    let mut train_x = x_labeled.to_vec();
    let mut train_y = y.to_vec();
    let mut pseudo: Vec<Option<(usize, f64)>> = vec![None; x_unlabeled.len()];
    let mut rounds = 0;
    while rounds < cfg.max_rounds {
        let pool: Vec<usize> = (0..x_unlabeled.len()).filter(|&i| pseudo[i].is_none()).collect();
        if pool.is_empty() {
            break;
        }
        rounds += 1;
        base.fit(&train_x, &train_y, n_classes)?;
        let query: Vec<Vec<f64>> = pool.iter().map(|&i| x_unlabeled[i].clone()).collect();
        let proba = base.predict_proba(&query)?;
        let mut added = 0;
        for (&i, p) in pool.iter().zip(&proba) {
            let (c, conf) =
                p.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (c, &v)| if v > acc.1 { (c, v) } else { acc });
            if conf >= cfg.threshold {
                pseudo[i] = Some((c, conf));
                added += 1;
            }
        }
        for &i in &pool {
            if let Some((c, _)) = pseudo[i] {
                train_x.push(x_unlabeled[i].clone());
                train_y.push(c);
            }
        }
        if added == 0 {
            break;
        }
    }
    Ok(SelfTrainResult { pseudo, rounds })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FusedLabels {
    /// Sample indices that carry a training label, ascending.
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    /// Missing label and no pseudo-label.
    pub excluded: Vec<usize>,
}

/// True label where present, otherwise the pseudo-label.
pub fn fuse_labels(y: &[i64], pseudo: &[Option<usize>]) -> Result<FusedLabels> {
    if y.len() != pseudo.len() {
        return Err(Error::shape(y.len(), pseudo.len()));
    }
    let mut out = FusedLabels { indices: Vec::new(), labels: Vec::new(), excluded: Vec::new() };
    for (i, (&t, p)) in y.iter().zip(pseudo).enumerate() {
        let label = if t == MISSING { *p } else { Some(t as usize) };
        match label {
            Some(l) => {
                out.indices.push(i);
                out.labels.push(l);
            }
            None => out.excluded.push(i),
        }
    }
    Ok(out)
}

/// Hide the labels of a stratified `f_u` fraction of samples.
pub fn mask_labels(y: &[usize], unlabeled_fraction: f64, seed: u64) -> Result<Vec<i64>> {
    if !(0.0..1.0).contains(&unlabeled_fraction) {
        return Err(Error::invalid(format!("unlabeled fraction {unlabeled_fraction} outside [0,1)")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut out: Vec<i64> = y.iter().map(|&c| c as i64).collect();
    let mut r = rng(seed);
    for members in by_class.values_mut() {
        members.shuffle(&mut r);
        let hide = ((members.len() as f64 * unlabeled_fraction).round() as usize).min(members.len() - 1);
        for &i in &members[..hide] {
            out[i] = MISSING;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SslMethod {
    LabelSpreading,
    LabelPropagation,
    SelfTraining,
    Supervised,
}

/// Teacher hyperparameters for one grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub method: SslMethod,
    pub kernel: Option<KernelSpec>,
    pub alpha: Option<f64>,
    pub threshold: Option<f64>,
}

pub const ALPHA_GRID: [f64; 3] = [0.2, 0.6, 0.8];
pub const K_GRID: [usize; 3] = [5, 10, 20];
pub const GAMMA_GRID: [f64; 3] = [0.001, 0.01, 0.1];
pub const THRESHOLD_GRID: [f64; 3] = [0.7, 0.8, 0.9];

fn kernels() -> Vec<KernelSpec> {
    K_GRID
        .iter()
        .map(|&k| KernelSpec::Knn { k })
        .chain(GAMMA_GRID.iter().map(|&gamma| KernelSpec::Rbf { gamma }))
        .collect()
}

impl TeacherConfig {
    pub fn grid(method: SslMethod) -> Vec<TeacherConfig> {
        let base = TeacherConfig { method, kernel: None, alpha: None, threshold: None };
        match method {
            SslMethod::LabelSpreading => ALPHA_GRID
                .iter()
                .flat_map(|&a| {
                    kernels().into_iter().map(move |k| TeacherConfig { kernel: Some(k), alpha: Some(a), ..base })
                })
                .collect(),
            SslMethod::LabelPropagation => {
                kernels().into_iter().map(|k| TeacherConfig { kernel: Some(k), ..base }).collect()
            }
            SslMethod::SelfTraining => {
                THRESHOLD_GRID.iter().map(|&t| TeacherConfig { threshold: Some(t), ..base }).collect()
            }
            SslMethod::Supervised => vec![base],
        }
    }
}

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const SELF_TRAIN_K: usize = 10;

/// Pseudo-label for every sample (`None` where the teacher abstains).
/// Labeled samples get their own label back.
pub fn run_teacher(
    x: &[Vec<f64>],
    labels: &[i64],
    n_classes: usize,
    cfg: &TeacherConfig,
) -> Result<Vec<Option<usize>>> {
    if x.len() != labels.len() {
        return Err(Error::shape(x.len(), labels.len()));
    }
    let from_matrix = |lm: LabelMatrix| lm.predictions().into_iter().map(|p| p.map(|(c, _)| c)).collect();
    let need = |v: Option<KernelSpec>| v.ok_or_else(|| Error::invalid("graph teacher needs a kernel"));
    match cfg.method {
        SslMethod::LabelSpreading => {
            let g = build_affinity(x, need(cfg.kernel)?)?;
            let alpha = cfg.alpha.ok_or_else(|| Error::invalid("label spreading needs alpha"))?;
            Ok(from_matrix(label_spreading(&g, labels, n_classes, alpha, DEFAULT_TOL, DEFAULT_MAX_ITER)?))
        }
        SslMethod::LabelPropagation => {
            let g = build_affinity(x, need(cfg.kernel)?)?;
            Ok(from_matrix(label_propagation(&g, labels, n_classes, DEFAULT_TOL, DEFAULT_MAX_ITER)?))
        }
        SslMethod::SelfTraining => {
            let threshold = cfg.threshold.ok_or_else(|| Error::invalid("self-training needs a threshold"))?;
            let (lab, unl): (Vec<usize>, Vec<usize>) = (0..x.len()).partition(|&i| labels[i] != MISSING);
            let xl: Vec<Vec<f64>> = lab.iter().map(|&i| x[i].clone()).collect();
            let yl: Vec<usize> = lab.iter().map(|&i| labels[i] as usize).collect();
            let xu: Vec<Vec<f64>> = unl.iter().map(|&i| x[i].clone()).collect();
            let res = self_train(
                &xl,
                &yl,
                &xu,
                n_classes,
                &SelfTrainConfig { threshold, max_rounds: 10 },
                &mut KnnProba::new(SELF_TRAIN_K),
            )?;
            let mut out: Vec<Option<usize>> = labels.iter().map(|&l| (l != MISSING).then_some(l as usize)).collect();
            for (slot, p) in unl.iter().zip(&res.pseudo) {
                out[*slot] = p.map(|(c, _)| c);
            }
            Ok(out)
        }
        SslMethod::Supervised => Ok(labels.iter().map(|&l| (l != MISSING).then_some(l as usize)).collect()),
    }
}

/// One row of the SSL results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SslReport {
    pub method: SslMethod,
    pub kernel: Option<KernelSpec>,
    pub params: TeacherConfig,
    pub f_u: f64,
    /// Accuracy of pseudo-labels on the masked samples.
    pub pseudo_label_accuracy: Option<f64>,
    pub excluded: usize,
    pub per_class: Vec<ClassMetrics>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub accuracy: f64,
}

impl SslReport {
    pub fn new(
        params: TeacherConfig,
        f_u: f64,
        pseudo_label_accuracy: Option<f64>,
        excluded: usize,
        m: &MetricsReport,
    ) -> Self {
        SslReport {
            method: params.method,
            kernel: params.kernel,
            params,
            f_u,
            pseudo_label_accuracy,
            excluded,
            per_class: m.per_class.clone(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            auroc: m.auroc,
            auprc: m.auprc,
            accuracy: m.accuracy,
        }
    }
}
