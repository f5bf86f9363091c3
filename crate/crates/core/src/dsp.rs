//! IIR filter design and application.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Transfer-function coefficients, `a[0] == 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IirCoeffs {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
}

/// Digital Butterworth low-pass from analog poles and a prewarped bilinear
/// transform, so the -3 dB point lands exactly on `cutoff_hz`.
pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, fs_hz: f64) -> Result<IirCoeffs> {
    if order == 0 {
        return Err(Error::invalid("filter order must be at least 1"));
    }
    if !(cutoff_hz > 0.0 && fs_hz > 0.0) || !cutoff_hz.is_finite() || !fs_hz.is_finite() {
        return Err(Error::invalid("cutoff and sampling rate must be positive"));
    }
    if cutoff_hz >= fs_hz / 2.0 {
        return Err(Error::invalid(format!("cutoff {cutoff_hz} Hz is not below Nyquist {} Hz", fs_hz / 2.0)));
    }
    let n = order as f64;
    let k = 2.0 * fs_hz;
    let warped = k * (PI * cutoff_hz / fs_hz).tan();

    let poles: Vec<Complex64> = (0..order)
        .map(|i| {
            let theta = PI * (2.0 * i as f64 + n + 1.0) / (2.0 * n);
            Complex64::from_polar(warped, theta)
        })
        .map(|p| (k + p) / (k - p))
        .collect();
    let zeros = vec![Complex64::new(-1.0, 0.0); order];

    let a = real_poly(&poles);
    let b_unit = real_poly(&zeros);
    let gain = a.iter().sum::<f64>() / b_unit.iter().sum::<f64>();
    let b = b_unit.iter().map(|c| c * gain).collect();
    Ok(IirCoeffs { b, a })
}

fn real_poly(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

impl IirCoeffs {
    pub fn order(&self) -> usize {
        self.a.len().max(self.b.len()) - 1
    }

    /// Complex response at `freq_hz` for sampling rate `fs_hz`.
    pub fn response(&self, freq_hz: f64, fs_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / fs_hz;
        let eval = |c: &[f64]| -> Complex64 {
            c.iter().enumerate().map(|(k, &v)| Complex64::from_polar(v, -w * k as f64)).sum()
        };
        eval(&self.b) / eval(&self.a)
    }

    pub fn magnitude(&self, freq_hz: f64, fs_hz: f64) -> f64 {
        self.response(freq_hz, fs_hz).norm()
    }

    /// Direct-form II transposed filtering with zero initial state.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut state = vec![0.0; self.order()];
        self.filter_with_state(x, &mut state)
    }

    fn filter_with_state(&self, x: &[f64], z: &mut [f64]) -> Vec<f64> {
        let n = self.order();
        let b = padded(&self.b, n + 1);
        let a = padded(&self.a, n + 1);
        let mut y = Vec::with_capacity(x.len());
        for &xi in x {
            let yi = b[0] * xi + z.first().copied().unwrap_or(0.0);
            for i in 0..n {
                let next = if i + 1 < n { z[i + 1] } else { 0.0 };
                z[i] = b[i + 1] * xi + next - a[i + 1] * yi;
            }
            y.push(yi);
        }
        y
    }

    /// Steady-state initial conditions for a unit step input.
    fn step_state(&self) -> Vec<f64> {
        let n = self.order();
        if n == 0 {
            return Vec::new();
        }
        let b = padded(&self.b, n + 1);
        let a = padded(&self.a, n + 1);
        // (I - C^T) zi = b[1:] - a[1:] b[0], C the companion matrix of a
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for i in 0..n {
            // C[0][i] = -a[i+1]; C[i+1][i] = 1  =>  C^T[i][0] = -a[i+1], C^T[i][i+1] = 1
            m[i][0] += a[i + 1];
            if i + 1 < n {
                m[i][i + 1] -= 1.0;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| b[i + 1] - a[i + 1] * b[0]).collect();
        solve_dense(m, rhs)
    }

    /// Zero-phase forward-backward filtering with odd-extension padding.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        if x.is_empty() {
            return Vec::new();
        }
        let pad = (3 * self.a.len().max(self.b.len())).min(x.len() - 1);
        let first = x[0];
        let last = x[x.len() - 1];
        let mut ext = Vec::with_capacity(x.len() + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[x.len() - 1 - i]));

        let zi = self.step_state();
        let mut z: Vec<f64> = zi.iter().map(|v| v * ext[0]).collect();
        let mut y = self.filter_with_state(&ext, &mut z);
        y.reverse();
        let mut z: Vec<f64> = zi.iter().map(|v| v * y[0]).collect();
        let mut y = self.filter_with_state(&y, &mut z);
        y.reverse();
        y[pad..pad + x.len()].to_vec()
    }
}

fn padded(c: &[f64], len: usize) -> Vec<f64> {
    let mut v = c.to_vec();
    v.resize(len, 0.0);
    v
}

/// Gaussian elimination with partial pivoting for small dense systems.
pub(crate) fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap_or(col);
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let p = m[col][col];
        if p == 0.0 {
            continue;
        }
        for row in col + 1..n {
            let f = m[row][col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = if m[row][row] == 0.0 { 0.0 } else { (rhs[row] - s) / m[row][row] };
    }
    x
}
