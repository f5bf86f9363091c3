//! On-disk waveform datasets: `manifest.json` plus one `rec_<id>.csv` per
//! record with header `t,ia,ib,ic` (and `va,vb,vc` when voltages exist).

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::synth::{EventLabel, PhaseSet, Position, ScenarioSpec, WaveformRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub label: EventLabel,
    pub phase_label: PhaseSet,
    pub location_label: Option<Position>,
    pub sampling_freq_hz: f64,
    pub start_time_s: f64,
    pub scenario: ScenarioSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub records: Vec<WaveformRecord>,
}

impl Dataset {
    pub fn from_records(records: Vec<WaveformRecord>) -> Self {
        let ids = (0..records.len()).map(|i| format!("{i:05}")).collect();
        Dataset { ids, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.ids
            .iter()
            .zip(&self.records)
            .map(|(id, r)| ManifestEntry {
                id: id.clone(),
                file: format!("rec_{id}.csv"),
                label: r.label,
                phase_label: r.phase_label,
                location_label: r.location_label,
                sampling_freq_hz: r.sampling_freq_hz,
                start_time_s: r.start_time_s,
                scenario: r.scenario.clone(),
            })
            .collect()
    }

    /// Write into `dir`, which is created if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (entry, rec) in self.manifest().iter().zip(&self.records) {
            write_record_csv(&dir.join(&entry.file), rec)?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(dir.join("manifest.json"), manifest)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
        let mut ids = Vec::with_capacity(entries.len());
        let mut records = Vec::with_capacity(entries.len());
        for e in entries {
            let (samples, voltages, fs_csv) = read_record_csv(&dir.join(&e.file))?;
            if let Some(fs_csv) = fs_csv {
                if (fs_csv / e.sampling_freq_hz - 1.0).abs() > 1e-6 {
                    return Err(Error::Format(format!(
                        "{}: time column implies {fs_csv} Hz, manifest says {} Hz",
                        e.file, e.sampling_freq_hz
                    )));
                }
            }
            let rec = WaveformRecord {
                samples,
                voltages,
                sampling_freq_hz: e.sampling_freq_hz,
                start_time_s: e.start_time_s,
                label: e.label,
                phase_label: e.phase_label,
                location_label: e.location_label,
                scenario: e.scenario,
            };
            rec.validate()?;
            ids.push(e.id);
            records.push(rec);
        }
        Ok(Dataset { ids, records })
    }

    pub fn record_path(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("rec_{id}.csv"))
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_record_csv(path: &Path, rec: &WaveformRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t", "ia", "ib", "ic"];
    if rec.voltages.is_some() {
        header.extend(["va", "vb", "vc"]);
    }
    w.write_record(&header)?;
    for n in 0..rec.len() {
        let mut row = vec![fmt_f64(rec.time(n))];
        row.extend(rec.samples.iter().map(|ch| fmt_f64(ch[n])));
        if let Some(v) = &rec.voltages {
            row.extend(v.iter().map(|ch| fmt_f64(ch[n])));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

type Channels = [Vec<f64>; 3];

/// Read a `t,ia,ib,ic[,va,vb,vc]` CSV. Also returns the sampling rate implied
/// by the time column when there are at least two rows.
pub fn read_record_csv(path: &Path) -> Result<(Channels, Option<Channels>, Option<f64>)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|s| s.to_ascii_lowercase()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (t, ia, ib, ic) = match (col("t"), col("ia"), col("ib"), col("ic")) {
        (Some(t), Some(a), Some(b), Some(c)) => (t, a, b, c),
        _ => return Err(Error::Format(format!("{}: header must contain t,ia,ib,ic", path.display()))),
    };
    let volt_cols = match (col("va"), col("vb"), col("vc")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    let mut times = Vec::new();
    let mut cur: Channels = Default::default();
    let mut volt: Channels = Default::default();
    for row in r.records() {
        let row = row?;
        let get = |i: usize| -> Result<f64> {
            row.get(i)
                .ok_or_else(|| Error::Format(format!("{}: short row", path.display())))?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
        };
        times.push(get(t)?);
        for (ch, i) in cur.iter_mut().zip([ia, ib, ic]) {
            ch.push(get(i)?);
        }
        if let Some(cols) = volt_cols {
            for (ch, i) in volt.iter_mut().zip(cols) {
                ch.push(get(i)?);
            }
        }
    }
    let fs = (times.len() >= 2).then(|| (times.len() - 1) as f64 / (times[times.len() - 1] - times[0]));
    Ok((cur, volt_cols.map(|_| volt), fs))
}
