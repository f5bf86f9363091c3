//! Feature → selection → imaging → classifier stages shared by the CLI
//! commands and the experiment drivers.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use rmcq_core::evalkit::{metrics, smote, split_indices, MetricsReport, Standardizer};
use rmcq_core::features::{extract_all, select_from_full, FeatureVector, FEATURES_PER_PHASE};
use rmcq_core::imaging::{image, ImageKind, ImageTensor};
use rmcq_core::net::{Ensemble, EpochStats, NetConfig};
use rmcq_core::select::{relieff_rank, ReliefConfig};
use rmcq_core::synth::{EventLabel, WaveformRecord};
use rmcq_core::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Task {
    Detect,
    Locate,
    PhaseSelect,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Detect => "detect",
            Task::Locate => "locate",
            Task::PhaseSelect => "phase_select",
        }
    }
}

/// Records participating in a task and their dense class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub classes: Vec<String>,
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Detect: fault vs no fault over everything. Locate: position over faults.
/// Phase select: faulted-phase set over faults at internal positions.
pub fn task_labels(records: &[WaveformRecord], task: Task) -> Result<TaskData> {
    let named: Vec<(usize, String)> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let is_fault = r.label == EventLabel::Fault;
            match task {
                Task::Detect => Some((i, if is_fault { "fault" } else { "no_fault" }.to_string())),
                Task::Locate => r.location_label.filter(|_| is_fault).map(|p| (i, p.to_string())),
                Task::PhaseSelect => {
                    r.location_label.filter(|p| is_fault && p.is_internal()).map(|_| (i, r.phase_label.to_string()))
                }
            }
        })
        .collect();
    let classes: Vec<String> = match task {
        Task::Detect => vec!["no_fault".into(), "fault".into()],
        _ => named.iter().map(|(_, c)| c.clone()).collect::<BTreeSet<_>>().into_iter().collect(),
    };
    if named.iter().map(|(_, c)| c).collect::<BTreeSet<_>>().len() < 2 {
        return Err(Error::InvalidInput(format!("task {} needs at least two classes in the dataset", task.name())));
    }
    let labels = named.iter().map(|(_, c)| classes.iter().position(|k| k == c).expect("known class")).collect();
    Ok(TaskData { classes, indices: named.into_iter().map(|(i, _)| i).collect(), labels })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub imaging: ImageKind,
    pub relief: ReliefConfig,
    pub features_per_phase: usize,
    pub split_ratio: f64,
    /// Oversample minority classes of the training split.
    pub smote: bool,
    pub smote_k: usize,
    pub net: NetConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            imaging: ImageKind::Rp,
            relief: ReliefConfig { iterations: 400, ..Default::default() },
            features_per_phase: 5,
            split_ratio: 0.7,
            smote: false,
            smote_k: 5,
            net: NetConfig::default(),
            seed: 0,
        }
    }
}

pub fn extract_features(records: &[WaveformRecord]) -> Result<Vec<FeatureVector>> {
    records.iter().map(extract_all).collect()
}

/// Per-phase feature id (`a.q_0.1` → `q_0.1`).
pub fn per_phase_id(qualified: &str) -> &str {
    qualified.split_once('.').map_or(qualified, |(_, id)| id)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Chosen per-phase ids, best first.
    pub ids: Vec<String>,
    /// Per-phase ids with phase-averaged ReliefF weights, ranked.
    pub ranked: Vec<(String, f64)>,
}

/// ReliefF over all 207 columns, weights averaged across the three phases.
pub fn select_features(
    full: &[&FeatureVector],
    labels: &[usize],
    relief: &ReliefConfig,
    per_phase: usize,
) -> Result<Selection> {
    let first = full.first().ok_or_else(|| Error::InvalidInput("no samples for feature selection".into()))?;
    let x: Vec<Vec<f64>> = full.iter().map(|f| f.values.clone()).collect();
    let ranking = relieff_rank(&x, labels, relief)?;
    let names: Vec<String> = first.feature_ids.iter().map(|q| per_phase_id(q).to_string()).collect();
    let (merged, r) = ranking.merge_by_name(&names)?;
    if per_phase == 0 || per_phase > FEATURES_PER_PHASE {
        return Err(Error::InvalidInput(format!("cannot select {per_phase} of {FEATURES_PER_PHASE} features")));
    }
    let ranked: Vec<(String, f64)> = r.order.iter().map(|&i| (merged[i].clone(), r.weights[i])).collect();
    let ids = ranked.iter().take(per_phase).map(|(n, _)| n.clone()).collect();
    Ok(Selection { ids, ranked })
}

/// Selected-feature vectors, standardized and imaged, plus the scalar that
/// brings training images into unit range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagePrep {
    pub kind: ImageKind,
    pub selection: Vec<String>,
    pub standardizer: Standardizer,
    pub image_scale: f64,
}

impl ImagePrep {
    pub fn fit(kind: ImageKind, selection: &[String], train: &[Vec<f64>]) -> Result<Self> {
        let standardizer = Standardizer::fit(train)?;
        let mut prep = ImagePrep { kind, selection: selection.to_vec(), standardizer, image_scale: 1.0 };
        let max = train
            .iter()
            .map(|v| prep.image_raw(v))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .flat_map(|img| img.data.iter().map(|v| v.abs()))
            .fold(0.0, f64::max);
        prep.image_scale = if max > 0.0 { 1.0 / max } else { 1.0 };
        Ok(prep)
    }

    fn image_raw(&self, selected: &[f64]) -> Result<ImageTensor> {
        image(&self.standardizer.transform(selected), self.kind)
    }

    pub fn image(&self, selected: &[f64]) -> Result<ImageTensor> {
        Ok(self.image_raw(selected)?.scaled(self.image_scale))
    }

    pub fn selected(&self, full: &FeatureVector) -> Result<Vec<f64>> {
        Ok(select_from_full(full, &self.selection)?.values)
    }
}

pub struct TaskOutcome {
    pub task: Task,
    pub classes: Vec<String>,
    pub selection: Selection,
    pub prep: ImagePrep,
    pub model: Ensemble,
    pub curves: Vec<Vec<EpochStats>>,
    /// Positions into the task's sample list.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub report: MetricsReport,
}

/// Train on `(samples, labels)` with the split, selection, imaging and
/// classifier of `cfg`; evaluate on the held-out part.
pub fn run_task(task: Task, full: &[FeatureVector], data: &TaskData, cfg: &PipelineConfig) -> Result<TaskOutcome> {
    let samples: Vec<&FeatureVector> = data.indices.iter().map(|&i| &full[i]).collect();
    let (train, test) = split_indices(&data.labels, cfg.split_ratio, true, cfg.seed)?;
    let pick = |idx: &[usize]| -> (Vec<&FeatureVector>, Vec<usize>) {
        (idx.iter().map(|&i| samples[i]).collect(), idx.iter().map(|&i| data.labels[i]).collect())
    };
    let (train_f, train_y) = pick(&train);
    let (test_f, test_y) = pick(&test);
    let selection = select_features(
        &train_f,
        &train_y,
        &ReliefConfig { seed: cfg.seed, ..cfg.relief.clone() },
        cfg.features_per_phase,
    )?;
    let selected = |set: &[&FeatureVector]| -> Result<Vec<Vec<f64>>> {
        set.iter().map(|f| Ok(select_from_full(f, &selection.ids)?.values)).collect()
    };
    let mut train_x = selected(&train_f)?;
    let test_x = selected(&test_f)?;
    let mut train_y = train_y;
    let prep = ImagePrep::fit(cfg.imaging, &selection.ids, &train_x)?;
    if cfg.smote {
        let out = smote(&train_x, &train_y, cfg.smote_k, cfg.seed)?;
        train_x = out.x;
        train_y = out.y;
    }
    let train_img: Vec<ImageTensor> = train_x.iter().map(|v| prep.image(v)).collect::<Result<_>>()?;
    let test_img: Vec<ImageTensor> = test_x.iter().map(|v| prep.image(v)).collect::<Result<_>>()?;
    let net_cfg = NetConfig { input_channels: train_img[0].size, n_classes: data.classes.len(), ..cfg.net.clone() };
    let (model, curves) = Ensemble::train(&net_cfg, &train_img, &train_y)?;
    let report = evaluate(&model, &test_img, &test_y, data.classes.len())?;
    Ok(TaskOutcome { task, classes: data.classes.clone(), selection, prep, model, curves, train, test, report })
}

pub fn evaluate(model: &Ensemble, images: &[ImageTensor], labels: &[usize], n_classes: usize) -> Result<MetricsReport> {
    let probs: Vec<Vec<f64>> = images.iter().map(|img| model.predict_proba(img)).collect::<Result<_>>()?;
    let pred: Vec<usize> = probs.iter().map(|p| rmcq_core::net::argmax(p)).collect();
    metrics(labels, &pred, Some(&probs), n_classes)
}
