//! Accuracy predictor: a three-transform fully connected regressor
//! `affine -> relu -> affine -> relu -> affine` over encoded policies, with
//! hand-written reverse mode for both parameter and input gradients.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::SampleRecord;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;
use crate::searchspace::{sample_indices, SearchSpace};

const STREAM_INIT: u64 = 0x1;
const STREAM_SPLIT: u64 = 0x2;
const STREAM_SHUFFLE: u64 = 0x3;
const STREAM_PERTURB: u64 = 0x4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictor<T> {
    /// `[input, hidden1, hidden2, 1]`.
    layer_dims: [usize; 4],
    /// Row-major `out x in` matrices of the three transforms.
    weights: [Vec<T>; 3],
    biases: [Vec<T>; 3],
}

struct Activations<T> {
    z1: Vec<T>,
    h1: Vec<T>,
    z2: Vec<T>,
    h2: Vec<T>,
    y: T,
}

fn affine<T: Scalar>(w: &[T], b: &[T], x: &[T]) -> Vec<T> {
    let n_in = x.len();
    b.iter()
        .zip(w.chunks_exact(n_in))
        .map(|(&bias, row)| row.iter().zip(x).fold(bias, |acc, (&wij, &xj)| acc + wij * xj))
        .collect()
}

fn relu<T: Scalar>(z: &[T]) -> Vec<T> {
    z.iter().map(|&v| v.max(T::zero())).collect()
}

impl<T: Scalar> Predictor<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn new(input: usize, hidden: [usize; 2], seed: u64) -> Self {
        let dims = [input, hidden[0], hidden[1], 1];
        let mut r = rng::rng_from(rng::derive(seed, STREAM_INIT));
        let weights = std::array::from_fn(|k| {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..fan_in * fan_out).map(|_| T::of(r.gen_range(-limit..=limit))).collect()
        });
        let biases = std::array::from_fn(|k| vec![T::zero(); dims[k + 1]]);
        Self { layer_dims: dims, weights, biases }
    }

    /// All weights zero; the output is the final bias everywhere.
    pub fn constant(input: usize, hidden: [usize; 2], value: T) -> Self {
        let dims = [input, hidden[0], hidden[1], 1];
        let weights = std::array::from_fn(|k| vec![T::zero(); dims[k] * dims[k + 1]]);
        let mut biases: [Vec<T>; 3] = std::array::from_fn(|k| vec![T::zero(); dims[k + 1]]);
        biases[2][0] = value;
        Self { layer_dims: dims, weights, biases }
    }

    /// Random hidden layers with a zero output layer and output bias `value`:
    /// a constant function with live hidden features.
    pub fn centered(input: usize, hidden: [usize; 2], seed: u64, value: T) -> Self {
        let mut p = Self::new(input, hidden, seed);
        p.weights[2].iter_mut().for_each(|w| *w = T::zero());
        p.biases[2][0] = value;
        p
    }

    pub fn from_parts(layer_dims: [usize; 4], weights: [Vec<T>; 3], biases: [Vec<T>; 3]) -> Result<Self> {
        if layer_dims[3] != 1 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig(format!("bad predictor dims {layer_dims:?}")));
        }
        for k in 0..3 {
            let want_w = layer_dims[k] * layer_dims[k + 1];
            if weights[k].len() != want_w {
                return Err(Error::DimensionMismatch { expected: want_w, actual: weights[k].len() });
            }
            if biases[k].len() != layer_dims[k + 1] {
                return Err(Error::DimensionMismatch { expected: layer_dims[k + 1], actual: biases[k].len() });
            }
        }
        let p = Self { layer_dims, weights, biases };
        if p.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite predictor parameter".into()));
        }
        Ok(p)
    }

    pub fn layer_dims(&self) -> [usize; 4] {
        self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn weights(&self) -> &[Vec<T>; 3] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<T>; 3] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<T>; 3] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<T>; 3] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        (0..3).map(|k| self.weights[k].len() + self.biases[k].len()).sum()
    }

    /// Flat parameters: `W1, b1, W2, b2, W3, b3`.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for k in 0..3 {
            out.extend_from_slice(&self.weights[k]);
            out.extend_from_slice(&self.biases[k]);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch { expected: self.num_params(), actual: flat.len() });
        }
        let mut at = 0;
        for k in 0..3 {
            for buf in [&mut self.weights[k], &mut self.biases[k]] {
                let n = buf.len();
                buf.copy_from_slice(&flat[at..at + n]);
                at += n;
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.layer_dims[0] {
            return Err(Error::DimensionMismatch { expected: self.layer_dims[0], actual: x.len() });
        }
        if let Some(dim) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { dim });
        }
        Ok(())
    }

    fn activations(&self, x: &[T]) -> Activations<T> {
        let z1 = affine(&self.weights[0], &self.biases[0], x);
        let h1 = relu(&z1);
        let z2 = affine(&self.weights[1], &self.biases[1], &h1);
        let h2 = relu(&z2);
        let y = affine(&self.weights[2], &self.biases[2], &h2)[0];
        Activations { z1, h1, z2, h2, y }
    }

    pub(crate) fn forward_unchecked(&self, x: &[T]) -> T {
        self.activations(x).y
    }

    /// Predicted accuracy (unbounded) for an encoded policy.
    pub fn forward(&self, x: &[T]) -> Result<T> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    /// Backpropagates `dy` to the second hidden pre-activation and first
    /// hidden pre-activation. A non-positive pre-activation passes no gradient.
    fn hidden_deltas(&self, act: &Activations<T>, dy: T) -> (Vec<T>, Vec<T>) {
        let [_, h1, h2, _] = self.layer_dims;
        let d2: Vec<T> =
            (0..h2).map(|j| if act.z2[j] > T::zero() { dy * self.weights[2][j] } else { T::zero() }).collect();
        let mut d1 = vec![T::zero(); h1];
        for (j, &dj) in d2.iter().enumerate() {
            if dj == T::zero() {
                continue;
            }
            let row = &self.weights[1][j * h1..(j + 1) * h1];
            for (acc, &w) in d1.iter_mut().zip(row) {
                *acc += dj * w;
            }
        }
        for (d, &z) in d1.iter_mut().zip(&act.z1) {
            if !(z > T::zero()) {
                *d = T::zero();
            }
        }
        (d1, d2)
    }

    pub(crate) fn input_gradient_unchecked(&self, x: &[T]) -> Vec<T> {
        let act = self.activations(x);
        let (d1, _) = self.hidden_deltas(&act, T::one());
        let n_in = self.layer_dims[0];
        let mut g = vec![T::zero(); n_in];
        for (j, &dj) in d1.iter().enumerate() {
            if dj == T::zero() {
                continue;
            }
            let row = &self.weights[0][j * n_in..(j + 1) * n_in];
            for (acc, &w) in g.iter_mut().zip(row) {
                *acc += dj * w;
            }
        }
        g
    }

    /// `df/dx` at an encoded policy.
    pub fn input_gradient(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        Ok(self.input_gradient_unchecked(x))
    }

    /// Adds `dy * df/dtheta` into `grad` (flat layout of [`params`](Self::params))
    /// and returns the forward value.
    pub(crate) fn accumulate_param_gradient(&self, x: &[T], dy: T, grad: &mut [T]) -> T {
        let act = self.activations(x);
        let (d1, d2) = self.hidden_deltas(&act, dy);
        let [n_in, h1, h2, _] = self.layer_dims;
        let mut at = 0;
        // W1, b1
        for (j, &dj) in d1.iter().enumerate() {
            if dj != T::zero() {
                for (g, &xi) in grad[at + j * n_in..at + (j + 1) * n_in].iter_mut().zip(x) {
                    *g += dj * xi;
                }
            }
        }
        at += n_in * h1;
        for (g, &dj) in grad[at..at + h1].iter_mut().zip(&d1) {
            *g += dj;
        }
        at += h1;
        // W2, b2
        for (j, &dj) in d2.iter().enumerate() {
            if dj != T::zero() {
                for (g, &hi) in grad[at + j * h1..at + (j + 1) * h1].iter_mut().zip(&act.h1) {
                    *g += dj * hi;
                }
            }
        }
        at += h1 * h2;
        for (g, &dj) in grad[at..at + h2].iter_mut().zip(&d2) {
            *g += dj;
        }
        at += h2;
        // W3, b3
        for (g, &hi) in grad[at..at + h2].iter_mut().zip(&act.h2) {
            *g += dy * hi;
        }
        at += h2;
        grad[at] += dy;
        act.y
    }

    /// Plain mean squared error over `data`.
    pub fn mse(&self, space: &SearchSpace<T>, data: &[SampleRecord<T>]) -> Result<T> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let mut total = T::zero();
        for r in data {
            let e = self.forward(&space.encode(&r.policy)?)? - r.accuracy;
            total += e * e;
        }
        Ok(total / T::of_usize(data.len()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Self = serde_json::from_str(text)?;
        Self::from_parts(raw.layer_dims, raw.weights, raw.biases)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Importance {
    /// Squared prediction change under capacity-consistent perturbations.
    Perturbation,
    /// Every sample weighted 1: plain MSE regression.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: T,
    /// Perturbation complexity change in G.
    pub b0: T,
    /// Perturbations per sample; `None` means `ceil(L / 2)`.
    pub perturbs_per_sample: Option<usize>,
    pub seed: u64,
    pub validation_fraction: f64,
    pub hidden: [usize; 2],
    pub method: GradientMethod,
    pub importance: Importance,
    /// Re-draw perturbations every epoch (otherwise drawn once per call).
    pub resample_perturbations: bool,
    /// Lower bound on the mean-normalized importance weight.
    pub weight_floor: T,
    /// Fit standardized labels by rescaling the output layer during training.
    pub standardize: bool,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            learning_rate: T::of(0.01),
            b0: T::of(0.005),
            perturbs_per_sample: None,
            seed: 0,
            validation_fraction: 0.0,
            hidden: [64, 64],
            method: GradientMethod::Adam,
            importance: Importance::Perturbation,
            resample_perturbations: true,
            weight_floor: T::of(1e-4),
            standardize: true,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.b0 > T::zero()) {
            return Err(Error::InvalidConfig("b0 must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig("validation_fraction must lie in [0, 1)".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) || self.perturbs_per_sample == Some(0) {
            return Err(Error::InvalidConfig("hidden widths and perturbation counts must be positive".into()));
        }
        Ok(())
    }

    pub fn perturbs_for(&self, space: &SearchSpace<T>) -> usize {
        self.perturbs_per_sample.unwrap_or_else(|| space.half_layers())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats<T> {
    pub epoch: usize,
    pub train_mse: T,
    pub val_mse: Option<T>,
    /// Mean importance-weighted loss seen during the epoch.
    pub weighted_loss: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory<T> {
    /// State before the first update (`epoch == 0`).
    pub initial: EpochStats<T>,
    pub epochs: Vec<EpochStats<T>>,
}

impl<T: Scalar> TrainHistory<T> {
    pub fn last(&self) -> &EpochStats<T> {
        self.epochs.last().unwrap_or(&self.initial)
    }
}

/// Raw importance factors `sum_ŝ (f(s) - f(ŝ))^2` for each record.
///
/// Perturbations come from a stream seeded by `(seed, index)`; policies with
/// no usable perturbation get a zero factor.
pub fn importance_factors<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    data: &[SampleRecord<T>],
    b0: T,
    count: usize,
    seed: u64,
) -> Result<Vec<T>> {
    let probes = PerturbationProbes::new(space, data, b0)?;
    Ok(probes.factors(pred, count, seed))
}

/// Encoded inputs of every sample and all of its perturbation candidates;
/// these depend only on the policies, not on the predictor.
struct PerturbationProbes<T> {
    inputs: Vec<Vec<T>>,
    candidates: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> PerturbationProbes<T> {
    fn new(space: &SearchSpace<T>, data: &[SampleRecord<T>], b0: T) -> Result<Self> {
        let mut inputs = Vec::with_capacity(data.len());
        let mut candidates = Vec::with_capacity(data.len());
        for r in data {
            inputs.push(space.encode(&r.policy)?);
            let c = space.perturbation_candidates(&r.policy, b0)?;
            candidates.push(c.iter().map(|q| space.encode_unchecked(q.policy.values())).collect());
        }
        Ok(Self { inputs, candidates })
    }

    /// `sum (f(s) - f(s_hat))^2` over a seeded draw of `count` candidates per
    /// sample (stream `i` for sample `i`).
    fn factors(&self, pred: &Predictor<T>, count: usize, seed: u64) -> Vec<T> {
        self.inputs
            .iter()
            .zip(&self.candidates)
            .enumerate()
            .map(|(i, (x, cands))| {
                let base = pred.forward_unchecked(x);
                sample_indices(cands.len(), count, rng::derive(seed, i as u64)).into_iter().fold(T::zero(), |acc, k| {
                    let d = base - pred.forward_unchecked(&cands[k]);
                    acc + d * d
                })
            })
            .collect()
    }
}

/// Scales factors to mean one and applies the floor; all-zero factors give
/// uniform weights.
pub fn normalize_weights<T: Scalar>(factors: &[T], floor: T) -> Vec<T> {
    if factors.is_empty() {
        return Vec::new();
    }
    let mean = factors.iter().copied().sum::<T>() / T::of_usize(factors.len());
    if !(mean > T::zero()) {
        return vec![T::one(); factors.len()];
    }
    factors.iter().map(|&w| (w / mean).max(floor)).collect()
}

/// `sum_i w_i (f(s_i) - a_i)^2 / n` with the weights held fixed.
pub fn weighted_loss<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    data: &[SampleRecord<T>],
    weights: &[T],
) -> Result<T> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut total = T::zero();
    for (r, &w) in data.iter().zip(weights) {
        let e = pred.forward(&space.encode(&r.policy)?)? - r.accuracy;
        total += w * e * e;
    }
    Ok(total / T::of_usize(data.len()))
}

/// Parameter gradient of [`weighted_loss`]; returns `(loss, gradient)`.
pub fn weighted_loss_gradient<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    data: &[SampleRecord<T>],
    weights: &[T],
) -> Result<(T, Vec<T>)> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let n = T::of_usize(data.len());
    let xs: Vec<Vec<T>> = data.iter().map(|r| space.encode(&r.policy)).collect::<Result<_>>()?;
    let mut grad = vec![T::zero(); pred.num_params()];
    let mut loss = T::zero();
    for ((x, r), &w) in xs.iter().zip(data).zip(weights) {
        pred.check_input(x)?;
        let e = pred.forward_unchecked(x) - r.accuracy;
        loss += w * e * e / n;
        pred.accumulate_param_gradient(x, T::of(2.0) * w * e / n, &mut grad);
    }
    Ok((loss, grad))
}

struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

fn apply_update<T: Scalar>(params: &mut [T], grad: &[T], lr: T, method: GradientMethod, adam: &mut AdamState<T>) {
    match method {
        GradientMethod::Sgd => {
            for (p, &g) in params.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        GradientMethod::Adam => {
            let (b1, b2, eps) = (T::of(0.9), T::of(0.999), T::of(1e-8));
            adam.t += 1;
            let c1 = T::one() - b1.powi(adam.t);
            let c2 = T::one() - b2.powi(adam.t);
            for i in 0..params.len() {
                adam.m[i] = b1 * adam.m[i] + (T::one() - b1) * grad[i];
                adam.v[i] = b2 * adam.v[i] + (T::one() - b2) * grad[i] * grad[i];
                let mh = adam.m[i] / c1;
                let vh = adam.v[i] / c2;
                params[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Deterministic train/validation split by seeded shuffle.
fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut r = rng::rng_from(rng::derive(seed, STREAM_SPLIT));
    idx.shuffle(&mut r);
    let mut n_val = (n as f64 * fraction).floor() as usize;
    if n_val >= n {
        n_val = 0;
    }
    let val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    train.sort_unstable();
    (train, val)
}

fn epoch_rng(seed: u64, epoch: usize) -> Rng {
    rng::rng_from(rng::derive(rng::derive(seed, STREAM_SHUFFLE), epoch as u64))
}

/// Minimizes the importance-weighted squared error
/// `sum_i w_i (f(s_i) - a_i)^2` by mini-batch descent.
///
/// Weights are recomputed from the current predictor at the start of each
/// epoch and treated as constants when differentiating. Returns the trained
/// copy and per-epoch plain-MSE history.
pub fn train<T: Scalar>(
    pred: &Predictor<T>,
    data: &[SampleRecord<T>],
    space: &SearchSpace<T>,
    cfg: &TrainConfig<T>,
) -> Result<(Predictor<T>, TrainHistory<T>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if pred.input_dim() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), actual: pred.input_dim() });
    }
    for r in data {
        space.check_dim(&r.policy)?;
    }
    let (train_idx, val_idx) = split_indices(data.len(), cfg.validation_fraction, cfg.seed);
    let (shift, scale) = if cfg.standardize { label_moments(&train_idx, data) } else { (T::zero(), T::one()) };
    let rescaled = |idx: &[usize]| -> Vec<SampleRecord<T>> {
        idx.iter().map(|&i| SampleRecord { accuracy: (data[i].accuracy - shift) / scale, ..data[i].clone() }).collect()
    };
    let train_set = rescaled(&train_idx);
    let val_set = rescaled(&val_idx);
    let xs: Vec<Vec<T>> = train_set.iter().map(|r| space.encode_unchecked(r.policy.values())).collect();

    let mut model = pred.clone();
    rescale_output(&mut model, T::one() / scale, -shift / scale);
    let mut params = model.params();
    let mut adam = AdamState { m: vec![T::zero(); params.len()], v: vec![T::zero(); params.len()], t: 0 };
    let count = cfg.perturbs_for(space);
    let probes = match cfg.importance {
        Importance::Perturbation => Some(PerturbationProbes::new(space, &train_set, cfg.b0)?),
        Importance::Uniform => None,
    };
    let stats = |m: &Predictor<T>, epoch: usize, weighted_loss: T| -> Result<EpochStats<T>> {
        let sq = scale * scale;
        let train_mse = m.mse(space, &train_set)? * sq;
        let val_mse = if val_set.is_empty() { None } else { Some(m.mse(space, &val_set)? * sq) };
        if !train_mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        Ok(EpochStats { epoch, train_mse, val_mse, weighted_loss })
    };
    let initial = stats(&model, 0, T::nan())?;
    let mut history = TrainHistory { initial, epochs: Vec::with_capacity(cfg.epochs) };
    let mut grad = vec![T::zero(); params.len()];

    for epoch in 1..=cfg.epochs {
        let weights = match &probes {
            None => vec![T::one(); train_set.len()],
            Some(probes) => {
                let stream = if cfg.resample_perturbations { epoch as u64 } else { 0 };
                let seed = rng::derive(rng::derive(cfg.seed, STREAM_PERTURB), stream);
                normalize_weights(&probes.factors(&model, count, seed), cfg.weight_floor)
            }
        };
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut epoch_rng(cfg.seed, epoch));
        let mut epoch_loss = T::zero();
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let nb = T::of_usize(batch.len());
            for &i in batch {
                let y = model.forward_unchecked(&xs[i]);
                let e = y - train_set[i].accuracy;
                epoch_loss += weights[i] * e * e;
                model.accumulate_param_gradient(&xs[i], T::of(2.0) * weights[i] * e / nb, &mut grad);
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            apply_update(&mut params, &grad, cfg.learning_rate, cfg.method, &mut adam);
            model.set_params(&params)?;
        }
        let mean_loss = epoch_loss / T::of_usize(train_set.len());
        if !mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.epochs.push(stats(&model, epoch, mean_loss * scale * scale)?);
    }
    rescale_output(&mut model, scale, shift);
    Ok((model, history))
}

/// Mean and standard deviation of the selected labels (scale 1 when flat).
fn label_moments<T: Scalar>(idx: &[usize], data: &[SampleRecord<T>]) -> (T, T) {
    let n = T::of_usize(idx.len());
    let mean = idx.iter().map(|&i| data[i].accuracy).sum::<T>() / n;
    let var = idx.iter().map(|&i| (data[i].accuracy - mean).powi(2)).sum::<T>() / n;
    let sd = var.sqrt();
    (mean, if sd > T::of(1e-12) { sd } else { T::one() })
}

/// Maps the output `y` to `scale * y + shift` in place.
fn rescale_output<T: Scalar>(model: &mut Predictor<T>, scale: T, shift: T) {
    model.weights[2].iter_mut().for_each(|w| *w *= scale);
    model.biases[2][0] = model.biases[2][0] * scale + shift;
}
