//! Time-series imaging: recurrence matrices, Gramian angular summation
//! fields and Markov transition fields.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::sorted_quantile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Rp,
    Gasf,
    Mtf,
}

impl ImageKind {
    pub const ALL: [ImageKind; 3] = [ImageKind::Rp, ImageKind::Gasf, ImageKind::Mtf];

    fn code(self) -> u8 {
        match self {
            ImageKind::Rp => 0,
            ImageKind::Gasf => 1,
            ImageKind::Mtf => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.code() == c).ok_or_else(|| Error::Format(format!("image kind code {c}")))
    }
}

impl fmt::Display for ImageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImageKind::Rp => "rp",
            ImageKind::Gasf => "gasf",
            ImageKind::Mtf => "mtf",
        })
    }
}

impl FromStr for ImageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rp" => Ok(ImageKind::Rp),
            "gasf" | "gaf" => Ok(ImageKind::Gasf),
            "mtf" => Ok(ImageKind::Mtf),
            _ => Err(Error::invalid(format!("unknown imaging technique `{s}`"))),
        }
    }
}

/// Square image, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    pub kind: ImageKind,
    pub size: usize,
    pub source_len: usize,
    pub data: Vec<f64>,
}

impl ImageTensor {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.size..(row + 1) * self.size]
    }

    pub fn scaled(&self, factor: f64) -> ImageTensor {
        ImageTensor { data: self.data.iter().map(|v| v * factor).collect(), ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceSpec {
    pub embedding_dim: usize,
    pub delay: usize,
}

impl Default for RecurrenceSpec {
    fn default() -> Self {
        RecurrenceSpec { embedding_dim: 1, delay: 1 }
    }
}

/// Unthresholded recurrence matrix of Euclidean distances between
/// delay-embedded states.
pub fn recurrence_matrix(series: &[f64], spec: &RecurrenceSpec) -> Result<ImageTensor> {
    if spec.embedding_dim == 0 || spec.delay == 0 {
        return Err(Error::invalid("embedding dimension and delay must be at least 1"));
    }
    let span = (spec.embedding_dim - 1) * spec.delay;
    if series.len() < span + 2 {
        return Err(Error::invalid(format!(
            "series of length {} too short for embedding dimension {} and delay {}",
            series.len(),
            spec.embedding_dim,
            spec.delay
        )));
    }
    let states = series.len() - span;
    let state = |p: usize| (0..spec.embedding_dim).map(move |j| series[p + j * spec.delay]);
    let mut data = vec![0.0; states * states];
    for p in 0..states {
        for q in p + 1..states {
            let d = state(p).zip(state(q)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            data[p * states + q] = d;
            data[q * states + p] = d;
        }
    }
    Ok(ImageTensor { kind: ImageKind::Rp, size: states, source_len: series.len(), data })
}

/// Min-max rescale to [-1, 1]; a constant series maps to all zeros.
fn rescale_unit(series: &[f64]) -> Vec<f64> {
    let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) {
        return vec![0.0; series.len()];
    }
    series.iter().map(|x| (((x - max) + (x - min)) / range).clamp(-1.0, 1.0)).collect()
}

/// Gramian angular summation field `cos(a_i + a_j)`, `a = arccos(rescaled)`.
pub fn gasf(series: &[f64]) -> Result<ImageTensor> {
    if series.is_empty() {
        return Err(Error::invalid("GASF of an empty series"));
    }
    let angles: Vec<f64> = rescale_unit(series).into_iter().map(f64::acos).collect();
    let n = series.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = (angles[i] + angles[j]).cos();
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Ok(ImageTensor { kind: ImageKind::Gasf, size: n, source_len: n, data })
}

/// Quantile-bin index per sample; occupied bins are renumbered densely so
/// that empty bins merge away.
pub fn quantile_bins(series: &[f64], n_bins: usize) -> Vec<usize> {
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..n_bins).map(|b| sorted_quantile(&sorted, b as f64 / n_bins as f64)).collect();
    let raw: Vec<usize> = series.iter().map(|&x| edges.iter().filter(|&&e| x > e).count()).collect();
    let mut occupied: Vec<usize> = raw.clone();
    occupied.sort_unstable();
    occupied.dedup();
    raw.iter().map(|b| occupied.binary_search(b).expect("present")).collect()
}

/// Markov transition field over `n_bins` quantile states. Rows of the
/// transition matrix without outgoing transitions are uniform.
pub fn mtf(series: &[f64], n_bins: usize) -> Result<ImageTensor> {
    if series.len() < 2 {
        return Err(Error::invalid("MTF needs at least 2 samples"));
    }
    if n_bins < 2 {
        return Err(Error::invalid("MTF needs at least 2 bins"));
    }
    let bins = quantile_bins(series, n_bins);
    let states = bins.iter().max().map_or(1, |m| m + 1);
    let mut w = vec![vec![0.0; states]; states];
    for pair in bins.windows(2) {
        w[pair[0]][pair[1]] += 1.0;
    }
    for row in w.iter_mut() {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        } else {
            row.iter_mut().for_each(|v| *v = 1.0 / states as f64);
        }
    }
    let n = series.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = w[bins[i]][bins[j]];
        }
    }
    Ok(ImageTensor { kind: ImageKind::Mtf, size: n, source_len: n, data })
}

pub const DEFAULT_MTF_BINS: usize = 4;

/// Image a series with the default settings for `kind`.
pub fn image(series: &[f64], kind: ImageKind) -> Result<ImageTensor> {
    match kind {
        ImageKind::Rp => recurrence_matrix(series, &RecurrenceSpec::default()),
        ImageKind::Gasf => gasf(series),
        ImageKind::Mtf => mtf(series, DEFAULT_MTF_BINS),
    }
}

/// CSV dump of one image, one row per line.
pub fn write_image_csv<W: Write>(img: &ImageTensor, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in 0..img.size {
        w.write_record(img.row(r).iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

const IMAGE_MAGIC: &[u8; 4] = b"RMIM";

/// Binary image set: magic, kind (u8), N (u32), count (u64), then row-major
/// little-endian doubles.
pub fn write_image_set<W: Write>(images: &[ImageTensor], mut out: W) -> Result<()> {
    let (kind, size) = match images.first() {
        Some(i) => (i.kind, i.size),
        None => (ImageKind::Rp, 0),
    };
    if images.iter().any(|i| i.kind != kind || i.size != size) {
        return Err(Error::invalid("image set must share kind and size"));
    }
    out.write_all(IMAGE_MAGIC)?;
    out.write_all(&[kind.code()])?;
    out.write_all(&(size as u32).to_le_bytes())?;
    out.write_all(&(images.len() as u64).to_le_bytes())?;
    for img in images {
        for v in &img.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_image_set<R: Read>(mut input: R) -> Result<Vec<ImageTensor>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != IMAGE_MAGIC {
        return Err(Error::Format("not an image set".into()));
    }
    let mut kind = [0u8; 1];
    input.read_exact(&mut kind)?;
    let kind = ImageKind::from_code(kind[0])?;
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let size = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let mut data = Vec::with_capacity(size * size);
        for _ in 0..size * size {
            input.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        images.push(ImageTensor { kind, size, source_len: size, data });
    }
    Ok(images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_recurrence_example() {
        let m = recurrence_matrix(&[0.15, 0.08, -0.01], &RecurrenceSpec::default()).unwrap();
        let expect = [[0.0, 0.07, 0.16], [0.07, 0.0, 0.09], [0.16, 0.09, 0.0]];
        for (r, row) in expect.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert!((m.get(r, c) - v).abs() < 1e-15, "{r},{c}: {}", m.get(r, c));
            }
        }
    }

    #[test]
    fn constant_series_gives_zero_recurrence() {
        let m = recurrence_matrix(&[3.0; 6], &RecurrenceSpec::default()).unwrap();
        assert!(m.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn embedded_recurrence_matches_direct_norm() {
        let s = [0.0, 1.0, 0.0, 1.0];
        let m = recurrence_matrix(&s, &RecurrenceSpec { embedding_dim: 2, delay: 1 }).unwrap();
        assert_eq!(m.size, 3);
        let states: [[f64; 2]; 3] = [[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        for p in 0..3 {
            for q in 0..3 {
                let d = ((states[p][0] - states[q][0]).powi(2) + (states[p][1] - states[q][1]).powi(2)).sqrt();
                assert_eq!(m.get(p, q), d);
            }
        }
    }

    #[test]
    fn recurrence_rejects_short_series() {
        assert!(recurrence_matrix(&[1.0], &RecurrenceSpec::default()).is_err());
        assert!(recurrence_matrix(&[1.0, 2.0, 3.0], &RecurrenceSpec { embedding_dim: 3, delay: 1 }).is_err());
        assert!(recurrence_matrix(&[1.0, 2.0], &RecurrenceSpec { embedding_dim: 1, delay: 0 }).is_err());
    }

    #[test]
    fn gasf_constant_series_is_minus_one() {
        // rescaled to 0 => angle pi/2 => cos(pi) = -1
        let g = gasf(&[2.0; 4]).unwrap();
        assert!(g.data.iter().all(|v| (v + 1.0).abs() < 1e-15));
        assert!(gasf(&[]).is_err());
    }

    #[test]
    fn gasf_maximum_has_unit_diagonal() {
        let g = gasf(&[0.0, 3.0, 1.0]).unwrap();
        assert_eq!(g.get(1, 1), 1.0);
    }

    #[test]
    fn mtf_constant_series_all_ones() {
        let m = mtf(&[1.5; 8], 4).unwrap();
        assert!(m.data.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn mtf_increasing_two_bins() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let m = mtf(&s, 2).unwrap();
        // bins 0,0,0,1,1,1: low->low 2/3, low->high 1/3, high->high 1
        let w = [[2.0 / 3.0, 1.0 / 3.0], [0.0, 1.0]];
        let bins = [0, 0, 0, 1, 1, 1];
        for i in 0..6 {
            for j in 0..6 {
                assert!((m.get(i, j) - w[bins[i]][bins[j]]).abs() < 1e-15);
            }
        }
        assert!(mtf(&[1.0], 2).is_err());
        assert!(mtf(&s, 1).is_err());
    }

    #[test]
    fn image_set_round_trip() {
        let imgs: Vec<ImageTensor> = (0..3).map(|i| gasf(&[i as f64, 1.0, -2.0, 0.5]).unwrap()).collect();
        let mut buf = Vec::new();
        write_image_set(&imgs, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 1 + 4 + 8 + 3 * 16 * 8);
        let back = read_image_set(&buf[..]).unwrap();
        assert_eq!(back, imgs);
        assert!(read_image_set(&b"NOPE"[..]).is_err());
    }

    proptest! {
        #[test]
        fn recurrence_is_a_metric(s in prop::collection::vec(-10.0f64..10.0, 2..16), shift in -5.0f64..5.0) {
            let m = recurrence_matrix(&s, &RecurrenceSpec::default()).unwrap();
            let n = m.size;
            for p in 0..n {
                prop_assert_eq!(m.get(p, p), 0.0);
                for q in 0..n {
                    prop_assert_eq!(m.get(p, q), m.get(q, p));
                    prop_assert!(m.get(p, q) >= 0.0);
                    for r in 0..n {
                        prop_assert!(m.get(p, q) <= m.get(p, r) + m.get(r, q) + 1e-12);
                    }
                }
            }
            let shifted: Vec<f64> = s.iter().map(|v| v + shift).collect();
            let ms = recurrence_matrix(&shifted, &RecurrenceSpec::default()).unwrap();
            for (a, b) in m.data.iter().zip(&ms.data) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn gasf_reversal_and_symmetry(s in prop::collection::vec(-10.0f64..10.0, 1..16)) {
            let g = gasf(&s).unwrap();
            let rev: Vec<f64> = s.iter().rev().cloned().collect();
            let gr = gasf(&rev).unwrap();
            let n = g.size;
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((g.get(i, j) - g.get(j, i)).abs() < 1e-12);
                    prop_assert!((gr.get(i, j) - g.get(n - 1 - i, n - 1 - j)).abs() < 1e-12);
                    prop_assert!(g.get(i, j).abs() <= 1.0 + 1e-12);
                }
            }
            let x = rescale_unit(&s);
            for i in 0..n {
                prop_assert!((g.get(i, i) - (2.0 * x[i] * x[i] - 1.0)).abs() < 1e-9);
            }
        }

        #[test]
        fn mtf_depends_only_on_bins(s in prop::collection::vec(-10.0f64..10.0, 2..16), bins in 2usize..6) {
            let m = mtf(&s, bins).unwrap();
            let b = quantile_bins(&s, bins);
            for i in 0..s.len() {
                for j in 0..s.len() {
                    let v = m.get(i, j);
                    prop_assert!((0.0..=1.0).contains(&v));
                    for i2 in 0..s.len() {
                        for j2 in 0..s.len() {
                            if b[i] == b[i2] && b[j] == b[j2] {
                                prop_assert_eq!(v, m.get(i2, j2));
                            }
                        }
                    }
                }
            }
        }
    }
}
