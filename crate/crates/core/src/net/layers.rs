//! Per-sample 1-D layers on `channels × length` tensors.

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Tensor {
    pub c: usize,
    pub l: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, l: usize) -> Self {
        Tensor { c, l, data: vec![0.0; c * l] }
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.l..(c + 1) * self.l]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }
}

/// Offsets of one convolution's weights `[c_out][c_in][k]` and biases in
/// the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvSpec {
    pub w: usize,
    pub b: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
}

impl ConvSpec {
    pub fn n_params(&self) -> usize {
        self.c_out * self.c_in * self.k + self.c_out
    }

    /// Left padding of a stride-1 "same" convolution.
    fn pad(&self) -> usize {
        (self.k - 1) / 2
    }

    pub fn forward(&self, p: &[f64], x: &Tensor) -> Tensor {
        debug_assert_eq!(x.c, self.c_in);
        let l = x.l;
        let pad = self.pad() as isize;
        let mut y = Tensor::zeros(self.c_out, l);
        for o in 0..self.c_out {
            let out = &mut y.data[o * l..(o + 1) * l];
            out.iter_mut().for_each(|v| *v = p[self.b + o]);
            for i in 0..self.c_in {
                let xi = x.row(i);
                let wrow = &p[self.w + (o * self.c_in + i) * self.k..][..self.k];
                for (j, &w) in wrow.iter().enumerate() {
                    let shift = j as isize - pad;
                    let (t0, t1) = valid_range(shift, l);
                    for t in t0..t1 {
                        out[t] += w * xi[(t as isize + shift) as usize];
                    }
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients into `g`; returns the input gradient.
    pub fn backward(&self, p: &[f64], x: &Tensor, dy: &Tensor, g: &mut [f64]) -> Tensor {
        let l = x.l;
        let pad = self.pad() as isize;
        let mut dx = Tensor::zeros(self.c_in, l);
        for o in 0..self.c_out {
            let d = dy.row(o);
            g[self.b + o] += d.iter().sum::<f64>();
            for i in 0..self.c_in {
                let xi = x.row(i);
                let base = self.w + (o * self.c_in + i) * self.k;
                let dxi = &mut dx.data[i * l..(i + 1) * l];
                for j in 0..self.k {
                    let shift = j as isize - pad;
                    let (t0, t1) = valid_range(shift, l);
                    let w = p[base + j];
                    let mut acc = 0.0;
                    for t in t0..t1 {
                        let s = (t as isize + shift) as usize;
                        acc += d[t] * xi[s];
                        dxi[s] += w * d[t];
                    }
                    g[base + j] += acc;
                }
            }
        }
        dx
    }
}

/// Output positions `t` for which `t + shift` is a valid input index.
fn valid_range(shift: isize, l: usize) -> (usize, usize) {
    let t0 = (-shift).max(0) as usize;
    let t1 = (l as isize - shift).clamp(0, l as isize) as usize;
    (t0.min(t1), t1)
}

/// Width-3, stride-1 max pooling with "same" padding. Returns the pooled
/// tensor and the argmax source index per output element.
pub(crate) fn maxpool3(x: &Tensor) -> (Tensor, Vec<usize>) {
    let mut y = Tensor::zeros(x.c, x.l);
    let mut arg = vec![0; x.c * x.l];
    for c in 0..x.c {
        let row = x.row(c);
        for t in 0..x.l {
            let mut best = t;
            for s in t.saturating_sub(1)..(t + 2).min(x.l) {
                if row[s] > row[best] {
                    best = s;
                }
            }
            y.data[c * x.l + t] = row[best];
            arg[c * x.l + t] = c * x.l + best;
        }
    }
    (y, arg)
}

pub(crate) fn maxpool3_backward(dy: &Tensor, arg: &[usize]) -> Tensor {
    let mut dx = Tensor::zeros(dy.c, dy.l);
    for (d, &a) in dy.data.iter().zip(arg) {
        dx.data[a] += d;
    }
    dx
}

pub(crate) fn relu(x: &Tensor) -> Tensor {
    Tensor { c: x.c, l: x.l, data: x.data.iter().map(|v| v.max(0.0)).collect() }
}

/// Gradient through ReLU given its pre-activation.
pub(crate) fn relu_backward(pre: &Tensor, dy: &Tensor) -> Tensor {
    Tensor {
        c: pre.c,
        l: pre.l,
        data: pre.data.iter().zip(&dy.data).map(|(p, d)| if *p > 0.0 { *d } else { 0.0 }).collect(),
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_conv_matches_direct_sum() {
        // one in/out channel, k = 4: pad left 1, right 2
        let spec = ConvSpec { w: 0, b: 4, c_in: 1, c_out: 1, k: 4 };
        let p = [1.0, 2.0, 3.0, 4.0, 0.5];
        let x = Tensor { c: 1, l: 5, data: vec![1.0, -1.0, 2.0, 0.0, 3.0] };
        let y = spec.forward(&p, &x);
        let xp = [0.0, 1.0, -1.0, 2.0, 0.0, 3.0, 0.0, 0.0];
        for t in 0..5 {
            let expect: f64 = 0.5 + (0..4).map(|j| p[j] * xp[t + j]).sum::<f64>();
            assert_eq!(y.data[t], expect);
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        let spec = ConvSpec { w: 0, b: 12, c_in: 2, c_out: 2, k: 3 };
        let p: Vec<f64> = (0..14).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = Tensor { c: 2, l: 4, data: (0..8).map(|i| (i as f64 * 0.9).cos()).collect() };
        let dy = Tensor { c: 2, l: 4, data: (0..8).map(|i| i as f64 * 0.1 - 0.3).collect() };
        let mut g = vec![0.0; 14];
        let dx = spec.backward(&p, &x, &dy, &mut g);
        // <dy, conv(x) - bias> == <dx, x> for a linear map
        let y = spec.forward(&p, &x);
        let lhs: f64 =
            (0..2).map(|o| (0..4).map(|t| dy.data[o * 4 + t] * (y.data[o * 4 + t] - p[12 + o])).sum::<f64>()).sum();
        let rhs: f64 = dx.data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn maxpool_routes_to_argmax() {
        let x = Tensor { c: 1, l: 4, data: vec![1.0, 3.0, 2.0, 5.0] };
        let (y, arg) = maxpool3(&x);
        assert_eq!(y.data, vec![3.0, 3.0, 5.0, 5.0]);
        let dx = maxpool3_backward(&Tensor { c: 1, l: 4, data: vec![1.0; 4] }, &arg);
        assert_eq!(dx.data, vec![0.0, 2.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        assert_eq!(softmax(&[2.0; 4]), vec![0.25; 4]);
    }
}
