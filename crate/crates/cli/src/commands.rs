//! Subcommand implementations. Every command writes `run.json` and its
//! artifacts under the output directory.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use rmcq_core::evalkit::{split_indices, MetricsReport};
use rmcq_core::features::{select_from_full, FeatureVector};
use rmcq_core::imaging::{write_image_set, ImageTensor};
use rmcq_core::net::{read_model, write_loss_curve, write_model, Ensemble};
use rmcq_core::relay::Element;
use rmcq_core::synth::{ScenarioKind, WaveformRecord};

use crate::artifacts::{read_json, write_json, write_run_record, write_with, StageCache};
use crate::config::{ExperimentConfig, SweepKind};
use crate::drivers::{
    cached_features, cached_selection, element_trajectory, load_source, relay_exhibits, run_head, run_ssl, run_sweep,
    synthesize_dataset, trace_record, Source,
};
use crate::error::CliError;
use crate::pipeline::{evaluate, task_labels, ImagePrep, Task, TaskOutcome};

/// Where a command writes and what it is called in `run.json`.
pub struct Context {
    pub out: PathBuf,
    pub command: String,
    pub cache: StageCache,
}

impl Context {
    pub fn new(out: PathBuf, command: String) -> Self {
        let cache = StageCache::new(out.join("cache"));
        Context { out, command, cache }
    }

    fn task_dir(&self, task: Task) -> PathBuf {
        self.out.join(task.name())
    }

    fn start(&self, cfg: &ExperimentConfig) -> Result<(), CliError> {
        fs::create_dir_all(&self.out)?;
        write_run_record(&self.out, &self.command, cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenCounts {
    pub records: usize,
    pub faults: usize,
    pub switching: usize,
    pub hif: usize,
}

impl GenCounts {
    fn of(records: &[WaveformRecord]) -> Self {
        let count = |k: &[ScenarioKind]| records.iter().filter(|r| k.contains(&r.scenario.kind)).count();
        GenCounts {
            records: records.len(),
            faults: count(&[ScenarioKind::Fault]),
            switching: count(&[ScenarioKind::CapacitorSwitch, ScenarioKind::LoadSwitch]),
            hif: count(&[ScenarioKind::Hif]),
        }
    }
}

/// Synthesize the grid into `<out>/dataset`. The directory is built under a
/// temporary name and only renamed into place once complete.
pub fn gen(ctx: &Context, cfg: &ExperimentConfig) -> Result<GenCounts, CliError> {
    ctx.start(cfg)?;
    let ds = synthesize_dataset(cfg)?;
    let target = ctx.out.join("dataset");
    let staging = ctx.out.join(".dataset.partial");
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    if let Err(e) = ds.write(&staging) {
        let _ = fs::remove_dir_all(&staging);
        return Err(CliError::Runtime(format!("[gen] {e}")));
    }
    if target.exists() {
        fs::remove_dir_all(&target)?;
    }
    fs::rename(&staging, &target)?;
    let counts = GenCounts::of(&ds.records);
    write_json(&ctx.out.join("gen_counts.json"), &counts)?;
    println!(
        "generated {} records ({} fault, {} switching, {} hif) in {}",
        counts.records,
        counts.faults,
        counts.switching,
        counts.hif,
        target.display()
    );
    Ok(counts)
}

fn source_and_features(ctx: &Context, cfg: &ExperimentConfig) -> Result<(Source, Vec<FeatureVector>), CliError> {
    let source = load_source(cfg)?;
    let features = cached_features(&source, &ctx.cache)?;
    Ok((source, features))
}

/// `features.csv`: one row per record, all 207 features.
pub fn features(ctx: &Context, cfg: &ExperimentConfig) -> Result<(), CliError> {
    ctx.start(cfg)?;
    let (source, features) = source_and_features(ctx, cfg)?;
    write_with(&ctx.out.join("features.csv"), |buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec!["record_id".to_string(), "label".to_string()];
        if let Some(f) = features.first() {
            header.extend(f.feature_ids.iter().cloned());
        }
        w.write_record(&header)?;
        for ((id, rec), f) in source.ids.iter().zip(&source.records).zip(&features) {
            let mut row = vec![id.clone(), serde_json::to_value(rec.label)?.as_str().unwrap_or_default().to_string()];
            row.extend(f.values.iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!("wrote {} feature rows", features.len());
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    pub task: Task,
    pub classes: Vec<String>,
    pub selected: Vec<String>,
    pub ranked: Vec<(String, f64)>,
}

/// `<task>/ranking.csv` and `<task>/selection.json`.
pub fn select(ctx: &Context, cfg: &ExperimentConfig) -> Result<(), CliError> {
    ctx.start(cfg)?;
    let (source, features) = source_and_features(ctx, cfg)?;
    for &task in &cfg.tasks {
        let sel = cached_selection(cfg, &features, &source, task, &ctx.cache)?;
        let data = task_labels(&source.records, task).map_err(CliError::stage("labels"))?;
        let dir = ctx.task_dir(task);
        write_with(&dir.join("ranking.csv"), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["feature_id", "weight", "rank"])?;
            for (rank, (name, weight)) in sel.ranked.iter().enumerate() {
                w.write_record([name.clone(), format!("{weight:e}"), (rank + 1).to_string()])?;
            }
            w.flush()?;
            Ok(())
        })?;
        write_json(
            &dir.join("selection.json"),
            &SelectionFile { task, classes: data.classes, selected: sel.ids.clone(), ranked: sel.ranked.clone() },
        )?;
        println!("{}: {}", task.name(), sel.ids.join(", "));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub label: usize,
    pub split: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageIndex {
    pub task: Task,
    pub classes: Vec<String>,
    pub prep: ImagePrep,
    pub entries: Vec<ImageEntry>,
}

/// `<task>/images.bin` (all task samples, split order) and `images.json`.
pub fn image(ctx: &Context, cfg: &ExperimentConfig) -> Result<(), CliError> {
    ctx.start(cfg)?;
    let (source, features) = source_and_features(ctx, cfg)?;
    for &task in &cfg.tasks {
        let sel = cached_selection(cfg, &features, &source, task, &ctx.cache)?;
        let data = task_labels(&source.records, task).map_err(CliError::stage("labels"))?;
        let (train, test) = split_indices(&data.labels, cfg.pipeline.split_ratio, true, cfg.pipeline.seed)
            .map_err(CliError::stage("split"))?;
        let vec_of = |i: usize| -> Result<Vec<f64>, CliError> {
            Ok(select_from_full(&features[data.indices[i]], &sel.ids).map_err(CliError::stage("image"))?.values)
        };
        let train_x: Vec<Vec<f64>> = train.iter().map(|&i| vec_of(i)).collect::<Result<_, _>>()?;
        let prep = ImagePrep::fit(cfg.pipeline.imaging, &sel.ids, &train_x).map_err(CliError::stage("image"))?;
        let mut images = Vec::new();
        let mut entries = Vec::new();
        for (split, set) in [("train", &train), ("test", &test)] {
            for &i in set.iter() {
                images.push(prep.image(&vec_of(i)?).map_err(CliError::stage("image"))?);
                entries.push(ImageEntry {
                    id: source.ids[data.indices[i]].clone(),
                    label: data.labels[i],
                    split: split.into(),
                });
            }
        }
        let dir = ctx.task_dir(task);
        write_with(&dir.join("images.bin"), |buf| write_image_set(&images, buf))?;
        write_json(&dir.join("images.json"), &ImageIndex { task, classes: data.classes.clone(), prep, entries })?;
        println!("{}: {} {} images", task.name(), images.len(), cfg.pipeline.imaging);
    }
    Ok(())
}

/// Everything `eval` needs to rebuild test images for a trained head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadFile {
    pub task: Task,
    pub classes: Vec<String>,
    pub prep: ImagePrep,
    pub members: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

fn member_name(stem: &str, k: usize, ext: &str) -> String {
    if k == 0 {
        format!("{stem}.{ext}")
    } else {
        format!("{stem}.{k}.{ext}")
    }
}

fn save_head(ctx: &Context, source: &Source, out: &TaskOutcome) -> Result<(), CliError> {
    let dir = ctx.task_dir(out.task);
    let data = task_labels(&source.records, out.task).map_err(CliError::stage("labels"))?;
    let ids = |set: &[usize]| set.iter().map(|&i| source.ids[data.indices[i]].clone()).collect();
    for (k, (m, curve)) in out.model.members.iter().zip(&out.curves).enumerate() {
        write_with(&dir.join(member_name("model", k, "bin")), |buf| write_model(m, buf))?;
        write_with(&dir.join(member_name("loss_curve", k, "csv")), |buf| write_loss_curve(curve, buf))?;
    }
    write_json(
        &dir.join("head.json"),
        &HeadFile {
            task: out.task,
            classes: out.classes.clone(),
            prep: out.prep.clone(),
            members: out.model.members.len(),
            train_ids: ids(&out.train),
            test_ids: ids(&out.test),
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub task: Task,
    pub classes: Vec<String>,
    pub imaging: rmcq_core::imaging::ImageKind,
    pub selected: Vec<String>,
    pub report: MetricsReport,
}

fn save_metrics(dir: &Path, file: &MetricsFile) -> Result<(), CliError> {
    write_json(&dir.join("metrics.json"), file)?;
    write_with(&dir.join("confusion.csv"), |buf| file.report.write_confusion_csv(buf))
}

/// Train every configured head; writes model and loss curve per head.
pub fn train(ctx: &Context, cfg: &ExperimentConfig) -> Result<Vec<TaskOutcome>, CliError> {
    ctx.start(cfg)?;
    let (source, features) = source_and_features(ctx, cfg)?;
    let mut outs = Vec::new();
    for &task in &cfg.tasks {
        let out = run_head(cfg, &features, &source, task)?;
        save_head(ctx, &source, &out)?;
        let last = out.curves[0].last().map(|s| s.train_acc).unwrap_or(f64::NAN);
        println!("{}: trained on {} samples, final train accuracy {last:.4}", task.name(), out.train.len());
        outs.push(out);
    }
    Ok(outs)
}

/// Evaluate heads saved under `model_dir` on their held-out records.
pub fn eval(ctx: &Context, cfg: &ExperimentConfig, model_dir: &Path) -> Result<Vec<MetricsFile>, CliError> {
    ctx.start(cfg)?;
    let (source, features) = source_and_features(ctx, cfg)?;
    let mut files = Vec::new();
    for &task in &cfg.tasks {
        let dir = model_dir.join(task.name());
        let head_path = dir.join("head.json");
        if !head_path.is_file() {
            return Err(CliError::Config(format!("no trained {} head at {}", task.name(), dir.display())));
        }
        let head: HeadFile = read_json(&head_path)?;
        let members = (0..head.members)
            .map(|k| {
                let p = dir.join(member_name("model", k, "bin"));
                let f = fs::File::open(&p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
                read_model(std::io::BufReader::new(f)).map_err(CliError::stage("eval"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let model = Ensemble { members };
        let data = task_labels(&source.records, task).map_err(CliError::stage("labels"))?;
        let mut images: Vec<ImageTensor> = Vec::new();
        let mut labels = Vec::new();
        for id in &head.test_ids {
            let pos = source
                .ids
                .iter()
                .position(|s| s == id)
                .ok_or_else(|| CliError::Runtime(format!("[eval] record {id} missing from dataset")))?;
            let slot =
                data.indices.iter().position(|&i| i == pos).ok_or_else(|| {
                    CliError::Runtime(format!("[eval] record {id} is not part of task {}", task.name()))
                })?;
            let class = &data.classes[data.labels[slot]];
            labels.push(
                head.classes
                    .iter()
                    .position(|c| c == class)
                    .ok_or_else(|| CliError::Runtime(format!("[eval] class {class} unknown to the trained head")))?,
            );
            let v = head.prep.selected(&features[pos]).map_err(CliError::stage("eval"))?;
            images.push(head.prep.image(&v).map_err(CliError::stage("eval"))?);
        }
        let report = evaluate(&model, &images, &labels, head.classes.len()).map_err(CliError::stage("eval"))?;
        let file = MetricsFile {
            task,
            classes: head.classes.clone(),
            imaging: head.prep.kind,
            selected: head.prep.selection.clone(),
            report,
        };
        save_metrics(&ctx.task_dir(task), &file)?;
        println!("{}: accuracy {:.4} on {} test records", task.name(), file.report.accuracy, file.report.n_samples);
        files.push(file);
    }
    Ok(files)
}

/// Train and evaluate all heads in one pass; adds `pipeline.json`.
pub fn pipeline(ctx: &Context, cfg: &ExperimentConfig) -> Result<Vec<MetricsFile>, CliError> {
    let outs = train(ctx, cfg)?;
    let mut files = Vec::new();
    for out in outs {
        let file = MetricsFile {
            task: out.task,
            classes: out.classes.clone(),
            imaging: out.prep.kind,
            selected: out.selection.ids.clone(),
            report: out.report,
        };
        save_metrics(&ctx.task_dir(out.task), &file)?;
        println!("{}: accuracy {:.4} on {} test records", out.task.name(), file.report.accuracy, file.report.n_samples);
        files.push(file);
    }
    write_json(&ctx.out.join("pipeline.json"), &files)?;
    Ok(files)
}

/// `ssl_report.json`: supervised baseline, then one row per fraction and method.
pub fn ssl(ctx: &Context, cfg: &ExperimentConfig, task: Task) -> Result<crate::drivers::SslOutcome, CliError> {
    ctx.start(cfg)?;
    let (source, features) = source_and_features(ctx, cfg)?;
    let outcome = run_ssl(cfg, &features, &source, task)?;
    write_json(&ctx.out.join("ssl_report.json"), &outcome)?;
    for r in &outcome.rows {
        println!(
            "f_u={:.1} {:?}: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}",
            r.f_u, r.method, r.accuracy, r.precision, r.recall, r.f1
        );
    }
    Ok(outcome)
}

/// Per-element trajectory CSVs under `relay/<record>/` and `relay/summary.json`.
pub fn relay_trace(ctx: &Context, cfg: &ExperimentConfig) -> Result<Vec<crate::drivers::RelayTraceSummary>, CliError> {
    ctx.start(cfg)?;
    let settings = &cfg.relay_trace.relay;
    let records: Vec<(String, WaveformRecord)> = match &cfg.dataset {
        None => relay_exhibits(cfg)?,
        Some(_) => {
            let source = load_source(cfg)?;
            let wanted = &cfg.relay_trace.record_ids;
            for id in wanted {
                if !source.ids.contains(id) {
                    return Err(CliError::Config(format!("record {id} is not in the dataset")));
                }
            }
            source
                .ids
                .into_iter()
                .zip(source.records)
                .filter(|(id, _)| wanted.is_empty() || wanted.contains(id))
                .collect()
        }
    };
    let mut summaries = Vec::new();
    for (name, rec) in &records {
        let (traj, summary) = trace_record(name, rec, settings)?;
        let dir = ctx.out.join("relay").join(name);
        for e in Element::ALL {
            let part = element_trajectory(&traj, e);
            write_with(&dir.join(format!("{e}.csv")), |buf| part.write_csv(settings, buf))?;
        }
        println!("{name}: {}", summary.verdict);
        summaries.push(summary);
    }
    write_json(&ctx.out.join("relay").join("summary.json"), &summaries)?;
    Ok(summaries)
}

/// `sweep_<kind>.json`.
pub fn sweep(
    ctx: &Context,
    cfg: &ExperimentConfig,
    kind: SweepKind,
    task: Task,
) -> Result<Vec<crate::drivers::SweepRow>, CliError> {
    ctx.start(cfg)?;
    let rows = run_sweep(cfg, kind, task, &ctx.cache)?;
    let name = serde_json::to_value(kind)?.as_str().unwrap_or("sweep").to_string();
    write_json(&ctx.out.join(format!("sweep_{name}.json")), &rows)?;
    for r in &rows {
        println!("{name} {}: accuracy {:.4}", r.setting, r.report.accuracy);
    }
    Ok(rows)
}
