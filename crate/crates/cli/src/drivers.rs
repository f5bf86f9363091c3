//! Experiment drivers: dataset sourcing, SSL grid, robustness sweeps and
//! relay exhibits.

use serde::{Deserialize, Serialize};

use rmcq_core::dataset::Dataset;
use rmcq_core::evalkit::{split_indices, MetricsReport};
use rmcq_core::features::{select_from_full, FeatureVector};
use rmcq_core::imaging::ImageTensor;
use rmcq_core::net::{Ensemble, NetConfig};
use rmcq_core::relay::{trajectory, Element, RelaySettings, Trajectory, ZoneSummary};
use rmcq_core::select::ReliefConfig;
use rmcq_core::ssl::{fuse_labels, mask_labels, run_teacher, SslMethod, SslReport, TeacherConfig, MISSING};
use rmcq_core::synth::{
    apply_noise, generate, resample, Bus, FaultType, Position, ScenarioKind, ScenarioSpec, SignalModelParams,
    WaveformRecord,
};

use crate::artifacts::{hash_dir, hash_of, StageCache};
use crate::config::{ExperimentConfig, SweepKind};
use crate::error::CliError;
use crate::pipeline::{
    evaluate, extract_features, run_task, select_features, task_labels, ImagePrep, Task, TaskOutcome,
};

/// Records plus a content key identifying them for the stage cache.
pub struct Source {
    pub ids: Vec<String>,
    pub records: Vec<WaveformRecord>,
    pub key: String,
}

#[derive(Serialize)]
struct SynthKey<'a> {
    grid: &'a rmcq_core::synth::GridConfig,
    signal: &'a SignalModelParams,
    window_cycles: f64,
    pre_onset_cycles: f64,
    snr_db: Option<f64>,
}

/// Synthesize the configured grid.
pub fn synthesize_dataset(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    let specs = cfg.grid.enumerate().map_err(|e| CliError::Config(e.to_string()))?;
    let records = generate(&specs, &cfg.signal, cfg.window_cycles, cfg.pre_onset_cycles, cfg.snr())
        .map_err(CliError::stage("gen"))?;
    Ok(Dataset::from_records(records))
}

/// The configured dataset directory, or the synthesized grid.
pub fn load_source(cfg: &ExperimentConfig) -> Result<Source, CliError> {
    match &cfg.dataset {
        Some(dir) => {
            let ds = Dataset::read(dir).map_err(CliError::stage("load"))?;
            Ok(Source { ids: ds.ids, records: ds.records, key: hash_dir(dir)? })
        }
        None => {
            let key = hash_of(&SynthKey {
                grid: &cfg.grid,
                signal: &cfg.signal,
                window_cycles: cfg.window_cycles,
                pre_onset_cycles: cfg.pre_onset_cycles,
                snr_db: cfg.snr_db,
            })?;
            let ds = synthesize_dataset(cfg)?;
            Ok(Source { ids: ds.ids, records: ds.records, key })
        }
    }
}

pub fn cached_features(source: &Source, cache: &StageCache) -> Result<Vec<FeatureVector>, CliError> {
    let key = ("features-v1".to_string(), source.key.clone());
    cache.get_or_compute("features", &key, || extract_features(&source.records).map_err(CliError::stage("features")))
}

/// Run one supervised head end to end.
pub fn run_head(
    cfg: &ExperimentConfig,
    features: &[FeatureVector],
    source: &Source,
    task: Task,
) -> Result<TaskOutcome, CliError> {
    let data = task_labels(&source.records, task).map_err(CliError::stage("labels"))?;
    run_task(task, features, &data, &cfg.pipeline).map_err(CliError::stage(task.name()))
}

/// Selection result for a task, cached per dataset and selection settings.
pub fn cached_selection(
    cfg: &ExperimentConfig,
    features: &[FeatureVector],
    source: &Source,
    task: Task,
    cache: &StageCache,
) -> Result<crate::pipeline::Selection, CliError> {
    let relief = ReliefConfig { seed: cfg.pipeline.seed, ..cfg.pipeline.relief.clone() };
    let key = serde_json::json!({
        "stage": "select-v1",
        "source": source.key,
        "task": task,
        "relief": relief,
        "per_phase": cfg.pipeline.features_per_phase,
        "split_ratio": cfg.pipeline.split_ratio,
        "seed": cfg.pipeline.seed,
    });
    cache.get_or_compute("select", &key, || {
        let data = task_labels(&source.records, task).map_err(CliError::stage("labels"))?;
        let (train, _) = split_indices(&data.labels, cfg.pipeline.split_ratio, true, cfg.pipeline.seed)
            .map_err(CliError::stage("split"))?;
        let f: Vec<&FeatureVector> = train.iter().map(|&i| &features[data.indices[i]]).collect();
        let y: Vec<usize> = train.iter().map(|&i| data.labels[i]).collect();
        select_features(&f, &y, &relief, cfg.pipeline.features_per_phase).map_err(CliError::stage("select"))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherScore {
    pub f_u: f64,
    pub params: TeacherConfig,
    /// `None` when the teacher failed on this cell.
    pub pseudo_label_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SslOutcome {
    pub task: Task,
    /// One row per (fraction, method), plus the supervised baseline first.
    pub rows: Vec<SslReport>,
    pub teacher_search: Vec<TeacherScore>,
}

impl SslOutcome {
    pub fn supervised(&self) -> &SslReport {
        &self.rows[0]
    }

    pub fn row(&self, method: SslMethod, f_u: f64) -> Option<&SslReport> {
        self.rows.iter().find(|r| r.method == method && r.f_u == f_u)
    }
}

/// Fraction of masked samples whose pseudo-label is correct; abstentions
/// count as wrong.
fn pseudo_accuracy(masked: &[i64], truth: &[usize], pseudo: &[Option<usize>]) -> Option<f64> {
    let hidden: Vec<usize> = (0..masked.len()).filter(|&i| masked[i] == MISSING).collect();
    if hidden.is_empty() {
        return None;
    }
    let ok = hidden.iter().filter(|&&i| pseudo[i] == Some(truth[i])).count();
    Some(ok as f64 / hidden.len() as f64)
}

/// Teacher/student runs over every fraction and method, and a supervised
/// baseline at `f_u = 0`.
pub fn run_ssl(
    cfg: &ExperimentConfig,
    features: &[FeatureVector],
    source: &Source,
    task: Task,
) -> Result<SslOutcome, CliError> {
    let tag = CliError::stage;
    let p = &cfg.pipeline;
    let data = task_labels(&source.records, task).map_err(tag("labels"))?;
    let n_classes = data.classes.len();
    let (train, test) = split_indices(&data.labels, p.split_ratio, true, p.seed).map_err(tag("split"))?;
    let train_f: Vec<&FeatureVector> = train.iter().map(|&i| &features[data.indices[i]]).collect();
    let train_y: Vec<usize> = train.iter().map(|&i| data.labels[i]).collect();
    let test_f: Vec<&FeatureVector> = test.iter().map(|&i| &features[data.indices[i]]).collect();
    let test_y: Vec<usize> = test.iter().map(|&i| data.labels[i]).collect();

    let mut rows = Vec::new();
    let mut teacher_search = Vec::new();
    let mut fractions = vec![0.0];
    fractions.extend(cfg.ssl.unlabeled_fractions.iter().copied().filter(|&f| f > 0.0));
    for &f_u in &fractions {
        let masked = mask_labels(&train_y, f_u, p.seed).map_err(tag("mask"))?;
        let labeled: Vec<usize> = (0..masked.len()).filter(|&i| masked[i] != MISSING).collect();
        let lf: Vec<&FeatureVector> = labeled.iter().map(|&i| train_f[i]).collect();
        let ly: Vec<usize> = labeled.iter().map(|&i| train_y[i]).collect();
        let relief = ReliefConfig { seed: p.seed, ..p.relief.clone() };
        let selection = select_features(&lf, &ly, &relief, p.features_per_phase).map_err(tag("select"))?;
        let pick = |set: &[&FeatureVector]| -> Result<Vec<Vec<f64>>, CliError> {
            set.iter().map(|f| Ok(select_from_full(f, &selection.ids).map_err(tag("select"))?.values)).collect()
        };
        let train_x = pick(&train_f)?;
        let test_x = pick(&test_f)?;
        let prep = ImagePrep::fit(p.imaging, &selection.ids, &train_x).map_err(tag("image"))?;
        let graph_x: Vec<Vec<f64>> = train_x.iter().map(|v| prep.standardizer.transform(v)).collect();

        let methods: Vec<SslMethod> = if f_u == 0.0 {
            vec![SslMethod::Supervised]
        } else {
            cfg.ssl.methods.iter().copied().filter(|&m| m != SslMethod::Supervised).collect()
        };
        for method in methods {
            let mut best: Option<(TeacherConfig, Vec<Option<usize>>, Option<f64>)> = None;
            for params in TeacherConfig::grid(method) {
                let result = run_teacher(&graph_x, &masked, n_classes, &params);
                let score = result.as_ref().ok().and_then(|ps| pseudo_accuracy(&masked, &train_y, ps));
                teacher_search.push(TeacherScore { f_u, params, pseudo_label_accuracy: score });
                if let Ok(ps) = result {
                    let better = match &best {
                        None => true,
                        Some((_, _, b)) => score.unwrap_or(-1.0) > b.unwrap_or(-1.0),
                    };
                    if better {
                        best = Some((params, ps, score));
                    }
                }
            }
            let (params, pseudo, score) =
                best.ok_or_else(|| CliError::Runtime(format!("[ssl] every {method:?} teacher failed at f_u={f_u}")))?;
            let fused = fuse_labels(&masked, &pseudo).map_err(tag("fuse"))?;
            let images: Vec<ImageTensor> = fused
                .indices
                .iter()
                .map(|&i| prep.image(&train_x[i]))
                .collect::<rmcq_core::Result<_>>()
                .map_err(tag("image"))?;
            let test_img: Vec<ImageTensor> =
                test_x.iter().map(|v| prep.image(v)).collect::<rmcq_core::Result<_>>().map_err(tag("image"))?;
            let net = NetConfig {
                input_channels: images[0].size,
                n_classes,
                epochs: cfg.ssl.student_epochs,
                ..p.net.clone()
            };
            let (model, _) = Ensemble::train(&net, &images, &fused.labels).map_err(tag("student"))?;
            let report = evaluate(&model, &test_img, &test_y, n_classes).map_err(tag("eval"))?;
            rows.push(SslReport::new(params, f_u, score, fused.excluded.len(), &report));
        }
    }
    Ok(SslOutcome { task, rows, teacher_search })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: SweepKind,
    pub setting: String,
    pub task: Task,
    pub report: MetricsReport,
}

/// Rerun one head while varying one factor; other settings come from `cfg`.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    kind: SweepKind,
    task: Task,
    cache: &StageCache,
) -> Result<Vec<SweepRow>, CliError> {
    let mut rows = Vec::new();
    let mut push = |setting: String, c: &ExperimentConfig, source: &Source| -> Result<(), CliError> {
        let features = cached_features(source, cache)?;
        let out = run_head(c, &features, source, task)?;
        rows.push(SweepRow { kind, setting, task, report: out.report });
        Ok(())
    };
    match kind {
        SweepKind::Imaging => {
            let source = load_source(cfg)?;
            for &k in &cfg.sweep.imaging {
                let mut c = cfg.clone();
                c.pipeline.imaging = k;
                push(k.to_string(), &c, &source)?;
            }
        }
        SweepKind::Noise => {
            let base = cfg.dataset.as_ref().map(|_| load_source(cfg)).transpose()?;
            for &snr in &cfg.sweep.snr_db {
                let c = ExperimentConfig { snr_db: Some(snr), ..cfg.clone() };
                let source = match &base {
                    None => load_source(&c)?,
                    Some(b) => Source {
                        ids: b.ids.clone(),
                        records: b
                            .records
                            .iter()
                            .enumerate()
                            .map(|(i, r)| apply_noise(r, snr, noise_seed(cfg.seed, i)))
                            .collect(),
                        key: hash_of(&(&b.key, "noise", snr.to_bits(), cfg.seed))?,
                    },
                };
                push(format!("{snr}"), &c, &source)?;
            }
        }
        SweepKind::Sampling => {
            let base = cfg.dataset.as_ref().map(|_| load_source(cfg)).transpose()?;
            for &fs in &cfg.sweep.sampling_hz {
                let mut c = cfg.clone();
                c.signal.sampling_freq_hz = fs;
                let source = match &base {
                    None => load_source(&c)?,
                    Some(b) => Source {
                        ids: b.ids.clone(),
                        records: b
                            .records
                            .iter()
                            .map(|r| resample(r, fs))
                            .collect::<rmcq_core::Result<_>>()
                            .map_err(CliError::stage("resample"))?,
                        key: hash_of(&(&b.key, "resample", fs.to_bits()))?,
                    },
                };
                push(format!("{fs}"), &c, &source)?;
            }
        }
        SweepKind::Window => {
            if cfg.dataset.is_some() {
                return Err(CliError::Config(
                    "the window sweep regenerates records and cannot use a stored dataset".into(),
                ));
            }
            for &w in &cfg.sweep.window_cycles {
                let c = ExperimentConfig {
                    window_cycles: w,
                    pre_onset_cycles: cfg.pre_onset_cycles.min(w / 4.0),
                    ..cfg.clone()
                };
                push(format!("{w}"), &c, &load_source(&c)?)?;
            }
        }
    }
    Ok(rows)
}

fn noise_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (index as u64).wrapping_add(0x006e_6f69_7365)
}

/// Built-in relay scenarios: a bolted internal fault, a capacitor switching
/// transient, and a remote high-resistance fault with strong remote infeed.
pub fn relay_exhibits(cfg: &ExperimentConfig) -> Result<Vec<(String, WaveformRecord)>, CliError> {
    let t = &cfg.relay_trace;
    let mut params = SignalModelParams { with_voltages: true, ..cfg.signal.clone() };
    let onset = params.window_start_s + t.exhibit_onset_cycles / params.system_freq_hz;
    let cases = [
        ("bolted_internal", ScenarioSpec::fault(FaultType::Ag, 0.01, onset, Position::P5), 0.0),
        ("capacitor_switching", ScenarioSpec::switching(ScenarioKind::CapacitorSwitch, Bus::Bus4, 4, onset), 0.0),
        (
            "remote_high_resistance",
            ScenarioSpec::fault(FaultType::Ag, 10.0, onset, Position::P5),
            t.exhibit_remote_infeed,
        ),
    ];
    cases
        .into_iter()
        .map(|(name, spec, infeed)| {
            params.line.remote_infeed_ratio = infeed;
            let rec = rmcq_core::synth::synthesize(&spec.with_seed(cfg.seed), &params, t.exhibit_cycles)
                .map_err(CliError::stage("relay"))?;
            Ok((name.to_string(), rec))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelayTraceSummary {
    pub record: String,
    pub label: rmcq_core::synth::EventLabel,
    pub elements: Vec<ZoneSummary>,
    /// Earliest zone-1 entry over all elements.
    pub first_zone1_s: Option<f64>,
    pub verdict: String,
}

pub fn trace_record(
    name: &str,
    rec: &WaveformRecord,
    settings: &RelaySettings,
) -> Result<(Trajectory, RelayTraceSummary), CliError> {
    let tag = |e: rmcq_core::Error| CliError::Runtime(format!("[relay] {name}: {e}"));
    let traj = trajectory(rec, settings).map_err(tag)?;
    let elements = traj.summary(settings).map_err(tag)?;
    let first = elements.iter().filter_map(|z| z.first_zone1_s).reduce(f64::min);
    let verdict = match first {
        Some(t) => {
            let who: Vec<String> =
                elements.iter().filter(|z| z.first_zone1_s.is_some()).map(|z| z.element.to_string()).collect();
            format!("zone1 entry at {t:.6} s ({})", who.join(","))
        }
        None => "no zone1 entry".to_string(),
    };
    Ok((
        traj,
        RelayTraceSummary { record: name.to_string(), label: rec.label, elements, first_zone1_s: first, verdict },
    ))
}

/// Points of one element only.
pub fn element_trajectory(traj: &Trajectory, e: Element) -> Trajectory {
    Trajectory { points: traj.element(e).cloned().collect() }
}
