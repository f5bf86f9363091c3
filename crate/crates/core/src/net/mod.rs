//! Inception-style multi-scale 1-D convolutional classifier with
//! hand-written backpropagation and Adam.
//!
//! An `N×N` image is read as `N` channels of length `N` (row = channel).
//! Each inception module applies a 1×1 bottleneck, three "same"
//! convolutions with kernels `{k, k/2, k/4}` on the bottleneck output, and
//! a max-pool(3) → 1×1 branch on the module input; the four branches are
//! concatenated to `4F` channels and passed through ReLU. Module `d` with
//! `d % residual_every == residual_every − 1` adds a 1×1-projected
//! shortcut from the input of module `d − residual_every + 1`, followed by
//! ReLU. Global average pooling feeds a dense softmax head.
//!
//! Parameter count, with input channels `C`, bottleneck `B`, filters `F`,
//! kernels `k1..k3`, classes `n`, and module inputs `C_0 = C`,
//! `C_d = 4F` for `d > 0`:
//!
//! ```text
//! module d:   (C_d·B + B) + Σ_i (B·F·k_i + F) + (C_d·F + F)
//! shortcut:   C_res·4F + 4F        (per residual module)
//! head:       4F·n + n
//! ```

mod io;
mod layers;

pub use io::{read_model, write_loss_curve, write_model};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageTensor;
use crate::util::{mix_seed, rng};
use layers::{maxpool3, maxpool3_backward, relu, relu_backward, softmax, ConvSpec, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Image side `N`, which is also the channel count.
    pub input_channels: usize,
    pub depth: usize,
    pub residual_every: usize,
    pub use_residual: bool,
    pub n_filters: usize,
    /// Base kernel `k`; the branches use `k`, `k/2`, `k/4`.
    pub kernel_size: usize,
    pub bottleneck_size: usize,
    pub n_classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Independently seeded networks whose softmax outputs are averaged.
    pub ensemble_size: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_channels: 15,
            depth: 2,
            residual_every: 3,
            use_residual: true,
            n_filters: 8,
            kernel_size: 12,
            bottleneck_size: 8,
            n_classes: 2,
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            ensemble_size: 1,
        }
    }
}

impl NetConfig {
    /// Hyperparameters of the full-size network.
    pub fn full_scale(input_channels: usize, n_classes: usize) -> Self {
        NetConfig {
            input_channels,
            depth: 6,
            n_filters: 32,
            kernel_size: 40,
            bottleneck_size: 32,
            n_classes,
            epochs: 1500,
            ensemble_size: 5,
            ..Default::default()
        }
    }

    pub fn kernel_sizes(&self) -> [usize; 3] {
        [self.kernel_size, self.kernel_size / 2, self.kernel_size / 4]
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_sizes().contains(&0) {
            return Err(Error::invalid("kernel sizes k, k/2, k/4 must all be ≥ 1 (k ≥ 4)"));
        }
        if self.n_classes < 2 {
            return Err(Error::invalid("need at least 2 classes"));
        }
        let positive = [
            ("input_channels", self.input_channels),
            ("depth", self.depth),
            ("residual_every", self.residual_every),
            ("n_filters", self.n_filters),
            ("bottleneck_size", self.bottleneck_size),
            ("batch_size", self.batch_size),
            ("ensemble_size", self.ensemble_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be ≥ 1")));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        Ok(())
    }

    fn is_residual(&self, d: usize) -> bool {
        self.use_residual && d % self.residual_every == self.residual_every - 1
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ModuleLayout {
    bottleneck: ConvSpec,
    branches: [ConvSpec; 3],
    pool_conv: ConvSpec,
    shortcut: Option<ConvSpec>,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    modules: Vec<ModuleLayout>,
    dense_w: usize,
    dense_b: usize,
    width: usize,
    n_params: usize,
}

impl Layout {
    fn new(cfg: &NetConfig) -> Self {
        let mut off = 0;
        let mut conv = |c_in: usize, c_out: usize, k: usize| {
            let spec = ConvSpec { w: off, b: off + c_out * c_in * k, c_in, c_out, k };
            off += spec.n_params();
            spec
        };
        let f = cfg.n_filters;
        let width = 4 * f;
        let mut modules = Vec::with_capacity(cfg.depth);
        for d in 0..cfg.depth {
            let c = if d == 0 { cfg.input_channels } else { width };
            let bottleneck = conv(c, cfg.bottleneck_size, 1);
            let branches = cfg.kernel_sizes().map(|k| conv(cfg.bottleneck_size, f, k));
            let pool_conv = conv(c, f, 1);
            let shortcut = cfg.is_residual(d).then(|| {
                let res_src = d + 1 - cfg.residual_every;
                let c_res = if res_src == 0 { cfg.input_channels } else { width };
                conv(c_res, width, 1)
            });
            modules.push(ModuleLayout { bottleneck, branches, pool_conv, shortcut });
        }
        let dense_w = off;
        let dense_b = off + width * cfg.n_classes;
        Layout { modules, dense_w, dense_b, width, n_params: dense_b + cfg.n_classes }
    }

    fn convs(&self) -> impl Iterator<Item = &ConvSpec> {
        self.modules.iter().flat_map(|m| {
            std::iter::once(&m.bottleneck)
                .chain(m.branches.iter())
                .chain(std::iter::once(&m.pool_conv))
                .chain(m.shortcut.iter())
        })
    }
}

/// Weights, Adam moments, step counter and the training RNG.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: NetConfig,
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step: u64,
    pub rng: ChaCha8Rng,
    layout: Layout,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct ModuleCache {
    input: Tensor,
    bott: Tensor,
    pooled: Tensor,
    pool_arg: Vec<usize>,
    pre: Tensor,
    /// Pre-activation of the residual sum.
    sum_pre: Option<Tensor>,
}

struct Forward {
    caches: Vec<ModuleCache>,
    features: Tensor,
    pooled: Vec<f64>,
    probs: Vec<f64>,
}

pub fn parameter_count(cfg: &NetConfig) -> usize {
    Layout::new(cfg).n_params
}

/// Build and Glorot-uniform initialize; biases start at zero.
pub fn build(cfg: &NetConfig) -> Result<ModelState> {
    let mut model = ModelState::zeroed(cfg)?;
    let mut r = rng(mix_seed(cfg.seed, 0x696e6974));
    let layout = model.layout.clone();
    for spec in layout.convs() {
        let limit = (6.0 / ((spec.c_in + spec.c_out) * spec.k) as f64).sqrt();
        for w in &mut model.params[spec.w..spec.b] {
            *w = r.random_range(-limit..limit);
        }
    }
    let limit = (6.0 / (layout.width + cfg.n_classes) as f64).sqrt();
    for w in &mut model.params[layout.dense_w..layout.dense_b] {
        *w = r.random_range(-limit..limit);
    }
    Ok(model)
}

impl ModelState {
    /// All parameters zero.
    pub fn zeroed(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        let n = layout.n_params;
        Ok(ModelState {
            config: cfg.clone(),
            params: vec![0.0; n],
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
            rng: rng(mix_seed(cfg.seed, 0x73687566)),
            layout,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn input_tensor(&self, img: &ImageTensor) -> Result<Tensor> {
        if img.size != self.config.input_channels || img.data.len() != img.size * img.size {
            return Err(Error::shape(
                format!("{0}×{0} image", self.config.input_channels),
                format!("{0}×{0} image", img.size),
            ));
        }
        Ok(Tensor { c: img.size, l: img.size, data: img.data.clone() })
    }

    fn forward(&self, x: Tensor) -> Forward {
        let p = &self.params;
        let f = self.config.n_filters;
        let mut caches: Vec<ModuleCache> = Vec::with_capacity(self.layout.modules.len());
        let mut cur = x;
        for (d, m) in self.layout.modules.iter().enumerate() {
            let bott = m.bottleneck.forward(p, &cur);
            let (pooled, pool_arg) = maxpool3(&cur);
            let mut pre = Tensor::zeros(4 * f, cur.l);
            for (b, spec) in m.branches.iter().enumerate() {
                let out = spec.forward(p, &bott);
                pre.data[b * f * cur.l..(b + 1) * f * cur.l].copy_from_slice(&out.data);
            }
            let pc = m.pool_conv.forward(p, &pooled);
            pre.data[3 * f * cur.l..].copy_from_slice(&pc.data);
            let mut out = relu(&pre);
            let sum_pre = m.shortcut.as_ref().map(|sc| {
                let src = d + 1 - self.config.residual_every;
                let res_in = if src == d { &cur } else { &caches[src].input };
                let mut s = sc.forward(p, res_in);
                s.add_assign(&out);
                s
            });
            if let Some(s) = &sum_pre {
                out = relu(s);
            }
            caches.push(ModuleCache { input: cur, bott, pooled, pool_arg, pre, sum_pre });
            cur = out;
        }
        let n = self.config.n_classes;
        let pooled: Vec<f64> = (0..cur.c).map(|c| cur.row(c).iter().sum::<f64>() / cur.l as f64).collect();
        let logits: Vec<f64> = (0..n)
            .map(|k| {
                p[self.layout.dense_b + k]
                    + (0..cur.c).map(|c| p[self.layout.dense_w + k * cur.c + c] * pooled[c]).sum::<f64>()
            })
            .collect();
        Forward { caches, features: cur, pooled, probs: softmax(&logits) }
    }

    /// Cross-entropy loss for one sample; gradients are added into `g`.
    fn backward(&self, fw: &Forward, label: usize, g: &mut [f64]) -> f64 {
        let p = &self.params;
        let n = self.config.n_classes;
        let width = fw.features.c;
        let l = fw.features.l;
        let mut dlogits = fw.probs.clone();
        dlogits[label] -= 1.0;
        let mut dfeat = Tensor::zeros(width, l);
        for k in 0..n {
            g[self.layout.dense_b + k] += dlogits[k];
            for c in 0..width {
                g[self.layout.dense_w + k * width + c] += dlogits[k] * fw.pooled[c];
            }
        }
        for c in 0..width {
            let dg: f64 = (0..n).map(|k| p[self.layout.dense_w + k * width + c] * dlogits[k]).sum();
            dfeat.data[c * l..(c + 1) * l].iter_mut().for_each(|v| *v = dg / l as f64);
        }

        let depth = self.layout.modules.len();
        // gradient w.r.t. each module's input, filled from the top down
        let mut pending: Vec<Option<Tensor>> = vec![None; depth];
        let f = self.config.n_filters;
        let mut dout = dfeat;
        for d in (0..depth).rev() {
            let m = &self.layout.modules[d];
            let cache = &fw.caches[d];
            let mut dz = dout;
            if let (Some(sc), Some(sum_pre)) = (&m.shortcut, &cache.sum_pre) {
                let ds = relu_backward(sum_pre, &dz);
                let src = d + 1 - self.config.residual_every;
                let res_in = &fw.caches[src].input;
                let dres = sc.backward(p, res_in, &ds, g);
                match &mut pending[src] {
                    Some(t) => t.add_assign(&dres),
                    slot => *slot = Some(dres),
                }
                dz = ds;
            }
            let dpre = relu_backward(&cache.pre, &dz);
            let cl = cache.input.l;
            let chunk = |b: usize| Tensor { c: f, l: cl, data: dpre.data[b * f * cl..(b + 1) * f * cl].to_vec() };
            let mut dbott = Tensor::zeros(cache.bott.c, cl);
            for (b, spec) in m.branches.iter().enumerate() {
                dbott.add_assign(&spec.backward(p, &cache.bott, &chunk(b), g));
            }
            let mut dx = m.bottleneck.backward(p, &cache.input, &dbott, g);
            let dpooled = m.pool_conv.backward(p, &cache.pooled, &chunk(3), g);
            dx.add_assign(&maxpool3_backward(&dpooled, &cache.pool_arg));
            if let Some(extra) = pending[d].take() {
                dx.add_assign(&extra);
            }
            dout = dx;
        }
        -fw.probs[label].max(f64::MIN_POSITIVE).ln()
    }

    pub fn predict_proba(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        Ok(self.forward(self.input_tensor(img)?).probs)
    }

    pub fn predict(&self, img: &ImageTensor) -> Result<usize> {
        Ok(argmax(&self.predict_proba(img)?))
    }

    /// Mean loss and full gradient over `images`.
    pub fn loss_and_gradient(&self, images: &[ImageTensor], labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; self.n_params()];
        let mut loss = 0.0;
        for (img, &y) in images.iter().zip(labels) {
            let fw = self.forward(self.input_tensor(img)?);
            loss += self.backward(&fw, y, &mut g);
        }
        let n = images.len().max(1) as f64;
        g.iter_mut().for_each(|v| *v /= n);
        Ok((loss / n, g))
    }

    pub fn loss(&self, images: &[ImageTensor], labels: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (img, &y) in images.iter().zip(labels) {
            total -= self.predict_proba(img)?[y].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / images.len().max(1) as f64)
    }

    fn adam_update(&mut self, g: &[f64]) {
        self.step += 1;
        let t = self.step as i32;
        let lr = self.config.learning_rate;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for (((w, m), v), &gi) in self.params.iter_mut().zip(&mut self.adam_m).zip(&mut self.adam_v).zip(g) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * gi;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * gi * gi;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc }).0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

/// Mini-batch Adam for `config.epochs` epochs. Epoch loss and accuracy are
/// measured on the forward passes used for the updates.
pub fn train(model: &mut ModelState, images: &[ImageTensor], labels: &[usize]) -> Result<Vec<EpochStats>> {
    if images.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if images.len() != labels.len() {
        return Err(Error::shape(images.len(), labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= model.config.n_classes) {
        return Err(Error::invalid(format!("label {bad} outside {} classes", model.config.n_classes)));
    }
    let inputs: Vec<Tensor> = images.iter().map(|img| model.input_tensor(img)).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut per_sample_loss = vec![0.0; images.len()];
    let mut per_sample_hit = vec![false; images.len()];
    let mut curve = Vec::with_capacity(model.config.epochs);
    for epoch in 0..model.config.epochs {
        order.shuffle(&mut model.rng);
        for batch in order.chunks(model.config.batch_size) {
            let mut g = vec![0.0; model.n_params()];
            for &i in batch {
                let fw = model.forward(inputs[i].clone());
                per_sample_hit[i] = argmax(&fw.probs) == labels[i];
                per_sample_loss[i] = model.backward(&fw, labels[i], &mut g);
            }
            let scale = 1.0 / batch.len() as f64;
            g.iter_mut().for_each(|v| *v *= scale);
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter {pos} at epoch {epoch}, step {}",
                    model.step
                )));
            }
            model.adam_update(&g);
        }
        let loss = per_sample_loss.iter().sum::<f64>() / images.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        let acc = per_sample_hit.iter().filter(|&&h| h).count() as f64 / images.len() as f64;
        curve.push(EpochStats { epoch, loss, train_acc: acc });
    }
    Ok(curve)
}

/// Central-difference check on a random subsample of parameters.
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(
    model: &ModelState,
    image: &ImageTensor,
    label: usize,
    n_params: usize,
    eps: f64,
    seed: u64,
) -> Result<f64> {
    let (_, analytic) = model.loss_and_gradient(std::slice::from_ref(image), &[label])?;
    let mut idx: Vec<usize> = (0..model.n_params()).collect();
    idx.shuffle(&mut rng(seed));
    idx.truncate(n_params);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in idx {
        let w = probe.params[i];
        probe.params[i] = w + eps;
        let up = probe.loss(std::slice::from_ref(image), &[label])?;
        probe.params[i] = w - eps;
        let down = probe.loss(std::slice::from_ref(image), &[label])?;
        probe.params[i] = w;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Independently seeded members; prediction averages their softmax outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub members: Vec<ModelState>,
}

impl Ensemble {
    pub fn train(cfg: &NetConfig, images: &[ImageTensor], labels: &[usize]) -> Result<(Self, Vec<Vec<EpochStats>>)> {
        cfg.validate()?;
        let mut members = Vec::with_capacity(cfg.ensemble_size);
        let mut curves = Vec::with_capacity(cfg.ensemble_size);
        for i in 0..cfg.ensemble_size {
            let seed = if i == 0 { cfg.seed } else { mix_seed(cfg.seed, i as u64) };
            let mut model = build(&NetConfig { seed, ..cfg.clone() })?;
            curves.push(train(&mut model, images, labels)?);
            members.push(model);
        }
        Ok((Ensemble { members }, curves))
    }

    pub fn predict_proba(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        let mut acc: Vec<f64> = Vec::new();
        for m in &self.members {
            let p = m.predict_proba(img)?;
            if acc.is_empty() {
                acc = vec![0.0; p.len()];
            }
            acc.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
        let n = self.members.len() as f64;
        Ok(acc.into_iter().map(|v| v / n).collect())
    }

    pub fn predict(&self, img: &ImageTensor) -> Result<usize> {
        Ok(argmax(&self.predict_proba(img)?))
    }
}
