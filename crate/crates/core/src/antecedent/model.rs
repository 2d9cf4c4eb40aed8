use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PairExample;
use crate::embeddings::Embeddings;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-7;

fn clamp_p<T: Scalar>(p: T) -> T {
    let lo = T::of(CLAMP);
    p.max(lo).min(T::one() - lo)
}

/// Summed binary cross-entropy.
pub fn bce_loss<T: Scalar>(predictions: &[T], labels: &[bool]) -> Result<T> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return invalid(format!("bce over {} predictions and {} labels", predictions.len(), labels.len()));
    }
    Ok(predictions.iter().zip(labels).map(|(&p, &y)| bce_one(p, y)).sum())
}

fn bce_one<T: Scalar>(p: T, y: bool) -> T {
    let p = clamp_p(p);
    if y { -p.ln() } else { -(T::one() - p).ln() }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    128
}
fn default_epochs() -> usize {
    20
}
fn default_patience() -> usize {
    3
}
fn default_dropout() -> f64 {
    0.5
}
fn default_hidden() -> Vec<usize> {
    vec![150, 150, 150]
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            patience: default_patience(),
            dropout: default_dropout(),
            hidden: default_hidden(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.patience == 0 {
            return bad("batch_size, epochs and patience must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer sizes must be positive".into());
        }
        Ok(())
    }
}

/// Feedforward net: ReLU hidden layers, one sigmoid output unit.
///
/// `weights[l]` is `sizes[l+1] × sizes[l]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
}

/// Inverted-dropout multipliers for the input of every linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks<T> {
    pub layers: Vec<Vec<T>>,
}

/// Each unit is kept with probability `1 - p` and scaled by `1 / (1 - p)`.
pub fn sample_masks<T: Scalar, R: Rng>(sizes: &[usize], p: f64, rng: &mut R) -> DropoutMasks<T> {
    let keep = T::of(1.0 / (1.0 - p));
    DropoutMasks {
        layers: sizes[..sizes.len() - 1]
            .iter()
            .map(|&n| (0..n).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect())
            .collect(),
    }
}

struct Trace<T> {
    /// Masked input of each linear layer.
    inputs: Vec<Vec<T>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<T>>,
    logit: T,
}

impl<T: Scalar> Mlp<T> {
    /// Uniform(±1/√fan_in) weights and biases.
    pub fn new<R: Rng>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut m = Self::zeros(input_dim, hidden);
        for l in 0..m.weights.len() {
            let bound = 1.0 / (m.sizes[l] as f64).sqrt();
            for w in m.weights[l].iter_mut().chain(m.biases[l].iter_mut()) {
                *w = T::of(rng.random_range(-bound..bound));
            }
        }
        m
    }

    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::from_sizes(&sizes)
    }

    pub(crate) fn from_sizes(sizes: &[usize]) -> Self {
        let weights = sizes.windows(2).map(|w| vec![T::zero(); w[0] * w[1]]).collect();
        let biases = sizes[1..].iter().map(|&n| vec![T::zero(); n]).collect();
        Mlp { sizes: sizes.to_vec(), weights, biases }
    }

    /// Layer widths from input to the single output.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Flat view: per layer, weights then bias.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.num_params(), "parameter count");
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            b.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
    }

    fn forward_trace(&self, x: &[T], masks: Option<&DropoutMasks<T>>) -> Trace<T> {
        let layers = self.weights.len();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers - 1);
        let mut a: Vec<T> = x.to_vec();
        for l in 0..layers {
            if let Some(m) = masks {
                for (v, k) in a.iter_mut().zip(&m.layers[l]) {
                    *v *= *k;
                }
            }
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.weights[l];
            let z: Vec<T> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    row.iter().zip(&a).fold(self.biases[l][o], |acc, (wi, ai)| acc + *wi * *ai)
                })
                .collect();
            inputs.push(a);
            if l + 1 == layers {
                return Trace { inputs, pre, logit: z[0] };
            }
            a = z.iter().map(|v| v.max(T::zero())).collect();
            pre.push(z);
        }
        unreachable!("at least one layer")
    }

    /// Mask-free probability for one feature vector.
    pub fn score(&self, features: &[T]) -> Result<T> {
        if features.len() != self.input_dim() {
            return invalid(format!("expected {} features, got {}", self.input_dim(), features.len()));
        }
        Ok(sigmoid(self.forward_trace(features, None).logit))
    }

    /// Mean BCE over `batch`, with optional per-example dropout masks.
    pub fn loss(&self, batch: &[(Vec<T>, bool)], masks: Option<&[DropoutMasks<T>]>) -> T {
        let total: T = batch
            .iter()
            .enumerate()
            .map(|(n, (x, y))| bce_one(sigmoid(self.forward_trace(x, masks.map(|m| &m[n])).logit), *y))
            .sum();
        total / T::of(batch.len() as f64)
    }

    /// Mean BCE over `batch` and its gradient in [`Mlp::params`] layout.
    pub fn loss_and_grad(&self, batch: &[(Vec<T>, bool)], masks: Option<&[DropoutMasks<T>]>) -> (T, Vec<T>) {
        let layers = self.weights.len();
        let mut gw: Vec<Vec<T>> = self.weights.iter().map(|w| vec![T::zero(); w.len()]).collect();
        let mut gb: Vec<Vec<T>> = self.biases.iter().map(|b| vec![T::zero(); b.len()]).collect();
        let mut loss = T::zero();
        let lo = T::of(CLAMP);
        for (n, (x, y)) in batch.iter().enumerate() {
            let mask = masks.map(|m| &m[n]);
            let t = self.forward_trace(x, mask);
            let p = sigmoid(t.logit);
            loss += bce_one(p, *y);
            // the clamp is flat outside its interval
            let target = if *y { T::one() } else { T::zero() };
            let mut delta = if p < lo || p > T::one() - lo { vec![T::zero()] } else { vec![p - target] };
            for l in (0..layers).rev() {
                let n_in = self.sizes[l];
                let a = &t.inputs[l];
                for (o, d) in delta.iter().enumerate() {
                    gb[l][o] += *d;
                    let row = &mut gw[l][o * n_in..(o + 1) * n_in];
                    for (g, ai) in row.iter_mut().zip(a) {
                        *g += *d * *ai;
                    }
                }
                if l == 0 {
                    break;
                }
                let w = &self.weights[l];
                let mut prev = vec![T::zero(); n_in];
                for (o, d) in delta.iter().enumerate() {
                    for (pv, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *pv += *d * *wi;
                    }
                }
                for (k, pv) in prev.iter_mut().enumerate() {
                    let mut g = if t.pre[l - 1][k] > T::zero() { *pv } else { T::zero() };
                    if let Some(m) = mask {
                        g *= m.layers[l][k];
                    }
                    *pv = g;
                }
                delta = prev;
            }
        }
        let scale = T::one() / T::of(batch.len() as f64);
        let mut grad = Vec::with_capacity(self.num_params());
        for (w, b) in gw.iter().zip(&gb) {
            grad.extend(w.iter().map(|g| *g * scale));
            grad.extend(b.iter().map(|g| *g * scale));
        }
        (loss * scale, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_losses: Vec<f64>,
    /// Empty when no dev pairs were supplied.
    pub dev_losses: Vec<f64>,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        let (b1, b2, eps) = (T::of(0.9), T::of(0.999), T::of(1e-8));
        self.t += 1;
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = b1 * self.m[k] + (T::one() - b1) * grad[k];
            self.v[k] = b2 * self.v[k] + (T::one() - b2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

fn check_pairs<T: Scalar>(pairs: &[PairExample], emb: &Embeddings<T>) -> Result<()> {
    for p in pairs {
        if p.mention_j >= p.mention_i || p.mention_i >= emb.len() {
            return invalid(format!("bad pair ({}, {}) for {} mentions", p.mention_i, p.mention_j, emb.len()));
        }
    }
    Ok(())
}

/// Mini-batch Adam on mean BCE with dropout; returns the parameters from the
/// epoch with the lowest dev loss (training loss when `dev` is empty).
///
/// The embeddings are only read.
pub fn train<T: Scalar>(
    pairs: &[PairExample],
    dev: &[PairExample],
    emb: &Embeddings<T>,
    config: &TrainConfig,
) -> Result<(Mlp<T>, TrainReport)> {
    config.validate()?;
    check_pairs(pairs, emb)?;
    check_pairs(dev, emb)?;
    let positives = pairs.iter().filter(|p| p.label).count();
    if positives == 0 || positives == pairs.len() {
        return Err(Error::Training(format!(
            "training pairs need both classes, got {positives} positive of {}",
            pairs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Mlp::new(2 * emb.dim() + 1, &config.hidden, &mut rng);
    let data: Vec<(Vec<T>, bool)> = pairs.iter().map(|p| (p.features(emb), p.label)).collect();
    let dev_data: Vec<(Vec<T>, bool)> = dev.iter().map(|p| (p.features(emb), p.label)).collect();
    let mut adam = Adam { m: vec![T::zero(); model.num_params()], v: vec![T::zero(); model.num_params()], t: 0 };
    let lr = T::of(config.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport { epochs_run: 0, best_epoch: 0, train_losses: Vec::new(), dev_losses: Vec::new() };
    let mut best: Option<(T, Vec<T>)> = None;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut params = model.params();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(Vec<T>, bool)> = chunk.iter().map(|&k| data[k].clone()).collect();
            let masks: Vec<DropoutMasks<T>> =
                (0..batch.len()).map(|_| sample_masks(model.sizes(), config.dropout, &mut rng)).collect();
            let (_, grad) = model.loss_and_grad(&batch, Some(&masks));
            adam.step(&mut params, &grad, lr);
            model.set_params(&params);
        }
        let train_loss = model.loss(&data, None);
        report.train_losses.push(train_loss.as_f64());
        let monitored = if dev_data.is_empty() {
            train_loss
        } else {
            let d = model.loss(&dev_data, None);
            report.dev_losses.push(d.as_f64());
            d
        };
        report.epochs_run = epoch + 1;
        if best.as_ref().is_none_or(|(b, _)| monitored < *b) {
            best = Some((monitored, params));
            report.best_epoch = epoch + 1;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    if let Some((_, p)) = best {
        model.set_params(&p);
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[0.5], &[true]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let near: f64 = bce_loss(&[1.0 - 1e-7], &[true]).unwrap();
        assert!((near - 1e-7).abs() < 1e-12);
        let v = bce_loss(&[0.9, 0.2], &[true, false]).unwrap();
        assert!((v - (-(0.9f64).ln() - (0.8f64).ln())).abs() < 1e-12);
        assert!((v - 0.328504).abs() < 1e-6);
        assert!(bce_loss::<f64>(&[], &[]).is_err());
        assert!(bce_loss(&[0.5], &[true, false]).is_err());
        // clamped endpoints stay finite
        assert!(bce_loss(&[0.0f64, 1.0], &[true, false]).unwrap().is_finite());
    }

    #[test]
    fn zero_model_scores_half() {
        let m = Mlp::<f64>::zeros(5, &[4, 3]);
        assert_eq!(m.score(&[1.0; 5]).unwrap(), 0.5);
        assert!(m.score(&[1.0; 4]).is_err());
    }

    #[test]
    fn default_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::<f64>::new(65, &default_hidden(), &mut rng);
        assert_eq!(m.sizes(), &[65, 150, 150, 150, 1]);
        assert_eq!(m.num_params(), 65 * 150 + 150 + 2 * (150 * 150 + 150) + 151);
        let x: Vec<f64> = (0..65).map(|k| (k as f64).sin()).collect();
        let p = m.score(&x).unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(p, m.score(&x).unwrap());
    }

    #[test]
    fn params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Mlp::<f64>::new(3, &[2], &mut rng);
        let mut z = Mlp::<f64>::zeros(3, &[2]);
        z.set_params(&m.params());
        assert_eq!(z, m);
    }

    #[test]
    fn masks_scale_kept_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m: DropoutMasks<f64> = sample_masks(&[1000, 10, 1], 0.5, &mut rng);
        assert_eq!(m.layers.len(), 2);
        let kept = m.layers[0].iter().filter(|&&v| v == 2.0).count();
        assert!(m.layers[0].iter().all(|&v| v == 0.0 || v == 2.0));
        assert!((400..600).contains(&kept));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mlp::<f64>::new(4, &[5, 3], &mut rng);
        let batch: Vec<(Vec<f64>, bool)> =
            (0..3).map(|n| ((0..4).map(|_| rng.random_range(-1.0..1.0)).collect(), n % 2 == 0)).collect();
        let masks: Vec<DropoutMasks<f64>> = (0..3).map(|_| sample_masks(m.sizes(), 0.5, &mut rng)).collect();
        let (_, g) = m.loss_and_grad(&batch, Some(&masks));
        let p = m.params();
        let eps = 1e-5;
        for k in 0..p.len() {
            let mut a = m.clone();
            let mut q = p.clone();
            q[k] += eps;
            a.set_params(&q);
            let up = a.loss(&batch, Some(&masks));
            q[k] -= 2.0 * eps;
            a.set_params(&q);
            let down = a.loss(&batch, Some(&masks));
            let fd = (up - down) / (2.0 * eps);
            let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-6);
            assert!(rel <= 1e-4, "param {k}: analytic {} vs numeric {fd}", g[k]);
        }
    }

    fn separable(n: usize, seed: u64) -> (Embeddings<f64>, Vec<PairExample>) {
        // mention i sits on one of two far-apart directions; pairs are
        // positive exactly when both sit on the same one
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let c = if i % 2 == 0 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
                c.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect()
            })
            .collect();
        let emb = Embeddings::from_rows(&rows).unwrap();
        let mut pairs = Vec::new();
        for i in 1..n {
            for j in i.saturating_sub(6)..i {
                pairs.push(PairExample { mention_i: i, mention_j: j, surface_match: false, label: i % 2 == j % 2 });
            }
        }
        (emb, pairs)
    }

    #[test]
    fn learns_separable_pairs() {
        let (emb, pairs) = separable(120, 9);
        let (tr, dev) = pairs.split_at(pairs.len() * 3 / 4);
        let cfg = TrainConfig { hidden: vec![16, 16, 16], epochs: 60, patience: 60, batch_size: 16, learning_rate: 1e-2, ..Default::default() };
        let before = emb.clone();
        let (m, rep) = train(tr, dev, &emb, &cfg).unwrap();
        assert_eq!(emb, before);
        assert!(rep.best_epoch >= 1);
        let correct = dev.iter().filter(|p| (m.score(&p.features(&emb)).unwrap() > 0.5) == p.label).count();
        assert!(correct as f64 >= 0.99 * dev.len() as f64, "{correct}/{}", dev.len());
    }

    #[test]
    fn training_is_deterministic() {
        let (emb, pairs) = separable(30, 1);
        let cfg = TrainConfig { hidden: vec![8, 8, 8], epochs: 3, ..Default::default() };
        let (a, _) = train(&pairs, &[], &emb, &cfg).unwrap();
        let (b, _) = train(&pairs, &[], &emb, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_an_error() {
        let (emb, pairs) = separable(10, 1);
        let pos: Vec<PairExample> = pairs.into_iter().filter(|p| p.label).collect();
        assert!(matches!(train(&pos, &[], &emb, &TrainConfig::default()), Err(Error::Training(_))));
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = TrainConfig { dropout: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
