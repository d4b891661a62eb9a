//! Policy coordinates, the bit-operation (BOPs) complexity model, grid
//! rounding, predictor-input encoding and capacity-consistent perturbations.
//!
//! A policy over an `L`-layer network is a `3L` vector laid out as
//! `[p_1, w_1, a_1, ..., p_L, w_L, a_L]`: per-layer channel pruning ratio,
//! weight bitwidth and activation bitwidth. Bitwidths are stored in raw bits.
//!
//! Complexity of layer `i` is
//! `w_i * a_i / 32^2 * (1 - p_{i-1}) * (1 - p_i) * base_i`
//! with `p_0 = 0`, where `base_i` is the layer's full-precision BOPs in G.

use std::fmt;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

/// Bitwidth of the uncompressed network.
pub const FULL_PRECISION_BITS: u32 = 32;

const SENSITIVITY_FLOOR: f64 = 1e-12;

/// Which of the three per-layer knobs a policy dimension controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    Prune,
    WeightBits,
    ActBits,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Prune, Component::WeightBits, Component::ActBits];

    pub fn offset(self) -> usize {
        match self {
            Component::Prune => 0,
            Component::WeightBits => 1,
            Component::ActBits => 2,
        }
    }

    /// `(layer, component)` for a flat policy dimension.
    pub fn of_dim(dim: usize) -> (usize, Component) {
        (dim / 3, Component::ALL[dim % 3])
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Component::Prune => "sp",
            Component::WeightBits => "sw",
            Component::ActBits => "sa",
        }
    }

    pub fn is_bits(self) -> bool {
        self != Component::Prune
    }
}

/// One compressible layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec<T> {
    /// 1-based position in the network.
    pub index: usize,
    /// Full-precision BOPs of the layer in G (already includes the 32x32 bit factor).
    pub base_bops: T,
    pub prune_grid: Vec<T>,
    pub wbit_grid: Vec<T>,
    pub abit_grid: Vec<T>,
    pub frozen_prune: Option<T>,
    pub frozen_wbit: Option<T>,
    pub frozen_abit: Option<T>,
}

impl<T: Scalar> LayerSpec<T> {
    pub fn new(base_bops: T, prune_grid: Vec<T>, wbit_grid: Vec<T>, abit_grid: Vec<T>) -> Self {
        Self {
            index: 0,
            base_bops,
            prune_grid,
            wbit_grid,
            abit_grid,
            frozen_prune: None,
            frozen_wbit: None,
            frozen_abit: None,
        }
    }

    pub fn with_frozen(mut self, component: Component, value: T) -> Self {
        *self.frozen_mut(component) = Some(value);
        self
    }

    pub fn grid(&self, component: Component) -> &[T] {
        match component {
            Component::Prune => &self.prune_grid,
            Component::WeightBits => &self.wbit_grid,
            Component::ActBits => &self.abit_grid,
        }
    }

    fn grid_mut(&mut self, component: Component) -> &mut Vec<T> {
        match component {
            Component::Prune => &mut self.prune_grid,
            Component::WeightBits => &mut self.wbit_grid,
            Component::ActBits => &mut self.abit_grid,
        }
    }

    pub fn frozen(&self, component: Component) -> Option<T> {
        match component {
            Component::Prune => self.frozen_prune,
            Component::WeightBits => self.frozen_wbit,
            Component::ActBits => self.frozen_abit,
        }
    }

    fn frozen_mut(&mut self, component: Component) -> &mut Option<T> {
        match component {
            Component::Prune => &mut self.frozen_prune,
            Component::WeightBits => &mut self.frozen_wbit,
            Component::ActBits => &mut self.frozen_abit,
        }
    }
}

/// Full-precision BOPs (in G) of a convolution or linear layer from its geometry.
///
/// `h`, `w` are the output feature map size; a fully connected layer is a
/// `1x1x1x1` convolution. Depthwise layers use `groups == cin`.
pub fn conv_base_bops(h: usize, w: usize, kh: usize, kw: usize, cin: usize, cout: usize, groups: usize) -> f64 {
    let groups = groups.max(1);
    let macs = (h * w * kh * kw) as f64 * (cin / groups) as f64 * cout as f64;
    let bits = f64::from(FULL_PRECISION_BITS * FULL_PRECISION_BITS);
    macs * bits / 1e9
}

/// A compression policy: `3L` real values in `[p, w, a]` per-layer order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy<T>(Vec<T>);

impl<T: Scalar> Policy<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn num_layers(&self) -> usize {
        self.0.len() / 3
    }

    pub fn get(&self, layer: usize, component: Component) -> T {
        self.0[3 * layer + component.offset()]
    }

    pub fn set(&mut self, layer: usize, component: Component, value: T) {
        self.0[3 * layer + component.offset()] = value;
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.as_f64()).collect()
    }
}

impl<T: Scalar> fmt::Display for Policy<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (layer, chunk) in self.0.chunks(3).enumerate() {
            if layer > 0 {
                write!(f, " | ")?;
            }
            write!(f, "{}/{}/{}", chunk[0], chunk[1], chunk[2])?;
        }
        Ok(())
    }
}

/// Exact identity of an on-grid policy: the grid index of every dimension.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridKey(pub Vec<u16>);

impl GridKey {
    pub fn hash64(&self) -> u64 {
        rng::hash_words(self.0.iter().map(|&i| u64::from(i)))
    }
}

/// A capacity-consistent single-element perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation<T> {
    pub dim: usize,
    /// Signed shift actually applied after clipping.
    pub shift: T,
    pub policy: Policy<T>,
}

/// The per-layer grids and complexity model of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace<T> {
    name: String,
    layers: Vec<LayerSpec<T>>,
    s_w_max: T,
    s_a_max: T,
}

impl<T: Scalar> SearchSpace<T> {
    /// Validates the layers, appends frozen values to their grids, pins
    /// single-value grids and assigns 1-based layer indices.
    pub fn new(name: impl Into<String>, mut layers: Vec<LayerSpec<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidSpace("a space needs at least one layer".into()));
        }
        let one = T::one();
        let bit_lo = T::one();
        let bit_hi = T::of(f64::from(FULL_PRECISION_BITS));
        for (i, layer) in layers.iter_mut().enumerate() {
            layer.index = i + 1;
            if !(layer.base_bops > T::zero()) || !layer.base_bops.is_finite() {
                return Err(Error::InvalidSpace(format!(
                    "layer {} base_bops must be positive, got {}",
                    i + 1,
                    layer.base_bops
                )));
            }
            for c in Component::ALL {
                if let Some(v) = layer.frozen(c) {
                    let grid = layer.grid_mut(c);
                    if !grid.iter().any(|&g| g == v) {
                        grid.push(v);
                        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
                    }
                }
                let grid = layer.grid(c);
                if grid.is_empty() {
                    return Err(Error::InvalidSpace(format!("layer {} has an empty {} grid", i + 1, c.short_name())));
                }
                if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidSpace(format!(
                        "layer {} {} grid must be finite and strictly increasing",
                        i + 1,
                        c.short_name()
                    )));
                }
                let (lo, hi) = (grid[0], grid[grid.len() - 1]);
                let ok = match c {
                    Component::Prune => lo >= T::zero() && hi < one,
                    _ => lo >= bit_lo && hi <= bit_hi,
                };
                if !ok {
                    return Err(Error::InvalidSpace(format!(
                        "layer {} {} grid [{}, {}] out of range",
                        i + 1,
                        c.short_name(),
                        lo,
                        hi
                    )));
                }
                if grid.len() > usize::from(u16::MAX) {
                    return Err(Error::InvalidSpace("grid too large".into()));
                }
                // a single admissible value pins the dimension
                if grid.len() == 1 && layer.frozen(c).is_none() {
                    let v = grid[0];
                    *layer.frozen_mut(c) = Some(v);
                }
            }
        }
        let max_of =
            |c: Component| layers.iter().flat_map(|l| l.grid(c).iter().copied()).fold(T::neg_infinity(), T::max);
        let s_w_max = max_of(Component::WeightBits);
        let s_a_max = max_of(Component::ActBits);
        Ok(Self { name: name.into(), layers, s_w_max, s_a_max })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[LayerSpec<T>] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Policy dimension `3L`.
    pub fn dim(&self) -> usize {
        3 * self.layers.len()
    }

    pub fn s_w_max(&self) -> T {
        self.s_w_max
    }

    pub fn s_a_max(&self) -> T {
        self.s_a_max
    }

    pub fn full_precision_bits(&self) -> u32 {
        FULL_PRECISION_BITS
    }

    pub fn grid(&self, dim: usize) -> &[T] {
        let (layer, c) = Component::of_dim(dim);
        self.layers[layer].grid(c)
    }

    pub fn frozen(&self, dim: usize) -> Option<T> {
        let (layer, c) = Component::of_dim(dim);
        self.layers[layer].frozen(c)
    }

    pub fn is_frozen(&self, dim: usize) -> bool {
        self.frozen(dim).is_some()
    }

    /// Continuous box of a dimension; a frozen dimension collapses to its pin.
    pub fn bounds(&self, dim: usize) -> (T, T) {
        if let Some(v) = self.frozen(dim) {
            return (v, v);
        }
        let g = self.grid(dim);
        (g[0], g[g.len() - 1])
    }

    /// Number of non-frozen dimensions.
    pub fn free_dims(&self) -> usize {
        (0..self.dim()).filter(|&d| !self.is_frozen(d)).count()
    }

    /// Default number of perturbations per policy: `ceil(L / 2)`.
    pub fn half_layers(&self) -> usize {
        self.layers.len().div_ceil(2)
    }

    pub fn check_dim(&self, policy: &Policy<T>) -> Result<()> {
        if policy.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: policy.len() });
        }
        Ok(())
    }

    /// Checks dimension, finiteness and the continuous box (frozen pins included).
    pub fn check_bounds(&self, policy: &Policy<T>) -> Result<()> {
        self.check_dim(policy)?;
        for (d, &v) in policy.values().iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { dim: d });
            }
            let (lo, hi) = self.bounds(d);
            if v < lo || v > hi {
                return Err(Error::OutOfBounds { dim: d, value: v.as_f64(), lo: lo.as_f64(), hi: hi.as_f64() });
            }
        }
        Ok(())
    }

    /// Validates `values` as an in-box policy for this space.
    pub fn policy(&self, values: Vec<T>) -> Result<Policy<T>> {
        let p = Policy::new(values);
        self.check_bounds(&p)?;
        Ok(p)
    }

    /// Grid key of an on-grid policy (frozen pins must hold).
    pub fn grid_key(&self, policy: &Policy<T>) -> Result<GridKey> {
        self.check_dim(policy)?;
        let mut key = Vec::with_capacity(policy.len());
        for (d, &v) in policy.values().iter().enumerate() {
            let grid = self.grid(d);
            let tol = T::of(1e-9) * T::one().max(v.abs());
            let idx =
                grid.iter().position(|&g| (g - v).abs() <= tol).ok_or(Error::OffGrid { dim: d, value: v.as_f64() })?;
            if let Some(f) = self.frozen(d) {
                if grid[idx] != f {
                    return Err(Error::OffGrid { dim: d, value: v.as_f64() });
                }
            }
            key.push(idx as u16);
        }
        Ok(GridKey(key))
    }

    pub fn is_on_grid(&self, policy: &Policy<T>) -> bool {
        self.grid_key(policy).is_ok()
    }

    pub fn policy_from_key(&self, key: &GridKey) -> Policy<T> {
        Policy::new(key.0.iter().enumerate().map(|(d, &i)| self.grid(d)[usize::from(i)]).collect())
    }

    /// Uniform random grid policy; frozen dimensions take their pins.
    pub fn random_grid_policy(&self, rng: &mut Rng) -> Policy<T> {
        let values = (0..self.dim())
            .map(|d| match self.frozen(d) {
                Some(v) => v,
                None => {
                    let g = self.grid(d);
                    g[rng.gen_range(0..g.len())]
                }
            })
            .collect();
        Policy::new(values)
    }

    /// Grid point with the lowest complexity: maximal pruning, minimal bits.
    pub fn min_capacity_policy(&self) -> Policy<T> {
        self.corner(false)
    }

    /// Grid point with the highest complexity: minimal pruning, maximal bits.
    pub fn max_capacity_policy(&self) -> Policy<T> {
        self.corner(true)
    }

    /// Smallest complexity reachable on the grid.
    pub fn min_complexity(&self) -> T {
        self.bops_unchecked(self.min_capacity_policy().values())
    }

    /// Fails with [`Error::InfeasibleBudget`] when no grid policy fits `budget`.
    pub fn check_budget(&self, budget: T) -> Result<()> {
        let min_c = self.min_complexity();
        if min_c > budget {
            return Err(Error::InfeasibleBudget { budget: budget.as_f64(), min_complexity: min_c.as_f64() });
        }
        Ok(())
    }

    fn corner(&self, high_capacity: bool) -> Policy<T> {
        let values = (0..self.dim())
            .map(|d| {
                if let Some(v) = self.frozen(d) {
                    return v;
                }
                let g = self.grid(d);
                let (_, c) = Component::of_dim(d);
                let take_max = c.is_bits() == high_capacity;
                if take_max {
                    g[g.len() - 1]
                } else {
                    g[0]
                }
            })
            .collect();
        Policy::new(values)
    }

    /// Number of distinct grid policies (saturating).
    pub fn grid_size(&self) -> u128 {
        (0..self.dim())
            .map(|d| if self.is_frozen(d) { 1u128 } else { self.grid(d).len() as u128 })
            .fold(1u128, |acc, n| acc.saturating_mul(n))
    }

    /// Every grid policy in lexicographic key order. Only sensible for small spaces.
    pub fn enumerate_grid(&self) -> Vec<Policy<T>> {
        let choices: Vec<Vec<T>> = (0..self.dim())
            .map(|d| match self.frozen(d) {
                Some(v) => vec![v],
                None => self.grid(d).to_vec(),
            })
            .collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; choices.len()];
        loop {
            out.push(Policy::new(idx.iter().enumerate().map(|(d, &i)| choices[d][i]).collect()));
            let mut d = choices.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < choices[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    fn check_bits(&self, policy: &Policy<T>) -> Result<()> {
        for (d, &v) in policy.values().iter().enumerate() {
            if d % 3 != 0 && !(v > T::zero()) {
                return Err(Error::NonPositiveBitwidth { dim: d, value: v.as_f64() });
            }
        }
        Ok(())
    }

    /// Bit-operation complexity of a policy in G.
    pub fn bops(&self, policy: &Policy<T>) -> Result<T> {
        self.check_dim(policy)?;
        self.check_bits(policy)?;
        Ok(self.bops_unchecked(policy.values()))
    }

    pub(crate) fn bops_unchecked(&self, s: &[T]) -> T {
        let norm = T::of(f64::from(FULL_PRECISION_BITS * FULL_PRECISION_BITS));
        let mut prev_keep = T::one();
        let mut total = T::zero();
        for (layer, chunk) in self.layers.iter().zip(s.chunks_exact(3)) {
            let keep = T::one() - chunk[0];
            total += chunk[1] * chunk[2] / norm * prev_keep * keep * layer.base_bops;
            prev_keep = keep;
        }
        total
    }

    /// Exact partial derivatives of [`bops`](Self::bops) in policy coordinates.
    ///
    /// A pruning ratio scales both its own layer and the next layer's input
    /// channels, so it collects two contributions. Frozen dimensions are not
    /// masked.
    pub fn bops_gradient(&self, policy: &Policy<T>) -> Result<Vec<T>> {
        self.check_dim(policy)?;
        Ok(self.bops_gradient_unchecked(policy.values()))
    }

    pub(crate) fn bops_gradient_unchecked(&self, s: &[T]) -> Vec<T> {
        let norm = T::of(f64::from(FULL_PRECISION_BITS * FULL_PRECISION_BITS));
        let n = self.layers.len();
        let mut grad = vec![T::zero(); 3 * n];
        let mut prev_keep = T::one();
        for i in 0..n {
            let (p, w, a) = (s[3 * i], s[3 * i + 1], s[3 * i + 2]);
            let keep = T::one() - p;
            let base = self.layers[i].base_bops / norm;
            grad[3 * i + 1] = a * prev_keep * keep * base;
            grad[3 * i + 2] = w * prev_keep * keep * base;
            // own layer output channels
            grad[3 * i] -= w * a * prev_keep * base;
            // next layer input channels
            if i + 1 < n {
                let (wn, an) = (s[3 * i + 4], s[3 * i + 5]);
                let keep_next = T::one() - s[3 * i + 3];
                let base_next = self.layers[i + 1].base_bops / norm;
                grad[3 * i] -= wn * an * keep_next * base_next;
            }
            prev_keep = keep;
        }
        grad
    }

    /// Snaps every non-frozen entry to its nearest grid value; exact midpoints
    /// go to the larger value.
    pub fn round_to_grid(&self, policy: &Policy<T>) -> Result<Policy<T>> {
        self.check_dim(policy)?;
        let values = policy
            .values()
            .iter()
            .enumerate()
            .map(|(d, &v)| match self.frozen(d) {
                Some(_) => v,
                None => nearest_on_grid(self.grid(d), v),
            })
            .collect();
        Ok(Policy::new(values))
    }

    /// Per-dimension factors mapping policy coordinates to predictor inputs.
    pub fn encode_scales(&self) -> Vec<T> {
        (0..self.dim())
            .map(|d| match Component::of_dim(d).1 {
                Component::Prune => T::one(),
                Component::WeightBits => T::one() / self.s_w_max,
                Component::ActBits => T::one() / self.s_a_max,
            })
            .collect()
    }

    /// Predictor input: pruning ratios verbatim, bitwidths divided by the
    /// largest weight / activation bitwidth of the space.
    pub fn encode(&self, policy: &Policy<T>) -> Result<Vec<T>> {
        self.check_dim(policy)?;
        Ok(self.encode_unchecked(policy.values()))
    }

    pub(crate) fn encode_unchecked(&self, s: &[T]) -> Vec<T> {
        let (w, a) = (T::one() / self.s_w_max, T::one() / self.s_a_max);
        s.iter()
            .enumerate()
            .map(|(d, &v)| match d % 3 {
                0 => v,
                1 => v * w,
                _ => v * a,
            })
            .collect()
    }

    /// Inverse of [`encode`](Self::encode).
    pub fn decode(&self, x: &[T]) -> Result<Policy<T>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }
        let values = x
            .iter()
            .enumerate()
            .map(|(d, &v)| match d % 3 {
                0 => v,
                1 => v * self.s_w_max,
                _ => v * self.s_a_max,
            })
            .collect();
        Ok(Policy::new(values))
    }

    /// Every usable single-element perturbation of `policy`, in dimension
    /// order with the `+` shift before the `-` shift.
    ///
    /// Element `m` moves by `b0 / (dC/ds_m)` in both directions so each
    /// candidate changes complexity by `b0` to first order. Dimensions whose
    /// sensitivity is below `1e-12 * C` are skipped; shifted values are
    /// clipped to the box and zero-length shifts dropped.
    pub fn perturbation_candidates(&self, policy: &Policy<T>, b0: T) -> Result<Vec<Perturbation<T>>> {
        self.check_dim(policy)?;
        if !(b0 > T::zero()) {
            return Err(Error::NonPositiveB0(b0.as_f64()));
        }
        let s = policy.values();
        let total = self.bops_unchecked(s);
        let grad = self.bops_gradient_unchecked(s);
        let floor = T::of(SENSITIVITY_FLOOR) * total;
        let mut out = Vec::new();
        for (m, &g) in grad.iter().enumerate() {
            if self.is_frozen(m) || !(g.abs() >= floor) || g == T::zero() {
                continue;
            }
            let alpha = b0 / g.abs();
            let (lo, hi) = self.bounds(m);
            for sign in [T::one(), -T::one()] {
                let moved = (s[m] + sign * alpha).max(lo).min(hi);
                let shift = moved - s[m];
                if shift == T::zero() {
                    continue;
                }
                let mut values = s.to_vec();
                values[m] = moved;
                out.push(Perturbation { dim: m, shift, policy: Policy::new(values) });
            }
        }
        Ok(out)
    }

    /// `count` perturbations drawn uniformly without replacement from
    /// [`perturbation_candidates`](Self::perturbation_candidates).
    pub fn perturbations(&self, policy: &Policy<T>, b0: T, count: usize, seed: u64) -> Result<Vec<Policy<T>>> {
        let candidates = self.perturbation_candidates(policy, b0)?;
        if count > candidates.len() {
            return Err(Error::TooFewPerturbations { requested: count, available: candidates.len() });
        }
        Ok(sample_perturbations(candidates, count, seed))
    }
}

/// Picks `count` of the candidates (all of them if fewer) with a seeded draw;
/// returned in candidate order.
pub(crate) fn sample_perturbations<T: Scalar>(
    candidates: Vec<Perturbation<T>>,
    count: usize,
    seed: u64,
) -> Vec<Policy<T>> {
    let keep = sample_indices(candidates.len(), count, seed);
    let mut it = keep.into_iter().peekable();
    candidates.into_iter().enumerate().filter(|(i, _)| it.next_if_eq(i).is_some()).map(|(_, p)| p.policy).collect()
}

/// Sorted seeded draw of `min(count, n)` distinct indices below `n`.
pub(crate) fn sample_indices(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut picked = index::sample(&mut rng::rng_from(seed), n, count.min(n)).into_vec();
    picked.sort_unstable();
    picked
}

/// Nearest grid value; ties resolve to the larger neighbour.
pub fn nearest_on_grid<T: Scalar>(grid: &[T], v: T) -> T {
    let hi = grid.partition_point(|&g| g < v);
    if hi == 0 {
        return grid[0];
    }
    if hi == grid.len() {
        return grid[grid.len() - 1];
    }
    let (a, b) = (grid[hi - 1], grid[hi]);
    if b - v <= v - a {
        b
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn bits() -> Vec<f64> {
        vec![2.0, 4.0, 6.0, 8.0]
    }

    /// One layer of 1024 bit-ops at full precision.
    fn toy1() -> SearchSpace<f64> {
        let layer = LayerSpec::new(1024.0e-9, vec![0.0, 0.25, 0.5, 0.75], bits(), bits());
        SearchSpace::new("toy1", vec![layer]).unwrap()
    }

    fn two_layer() -> SearchSpace<f64> {
        let l1 = LayerSpec::new(2.0, vec![0.0, 0.5], bits(), bits());
        let l2 = LayerSpec::new(3.0, vec![0.0, 0.5], bits(), bits());
        SearchSpace::new("two", vec![l1, l2]).unwrap()
    }

    #[test]
    fn single_term_bops() {
        let s = toy1();
        let c = s.bops(&Policy::new(vec![0.0, 2.0, 4.0])).unwrap();
        assert!((c * 1e9 - 8.0).abs() < 1e-9);
    }

    #[test]
    fn single_term_gradient() {
        let s = toy1();
        let g = s.bops_gradient(&Policy::new(vec![0.0, 2.0, 4.0])).unwrap();
        // dC/dw = a / 1024 * base = 4 bit-ops per bit
        assert!((g[1] * 1e9 - 4.0).abs() < 1e-12);
        assert!((g[2] * 1e9 - 2.0).abs() < 1e-12);
        assert!((g[0] * 1e9 + 8.0).abs() < 1e-12);
    }

    #[test]
    fn fully_pruned_neighbourhood_kills_bit_gradient() {
        let s = two_layer();
        let g = s.bops_gradient(&Policy::new(vec![1.0, 4.0, 4.0, 1.0, 6.0, 6.0])).unwrap();
        assert_eq!(g[4], 0.0);
        assert_eq!(g[5], 0.0);
    }

    #[test]
    fn pruning_gradient_spans_two_layers() {
        let s = two_layer();
        let p = Policy::new(vec![0.5, 4.0, 6.0, 0.0, 8.0, 2.0]);
        let g = s.bops_gradient(&p).unwrap();
        let own = 4.0 * 6.0 / 1024.0 * 2.0;
        let next = 8.0 * 2.0 / 1024.0 * 3.0;
        assert!((g[0] + own + next).abs() < 1e-15);
    }

    #[test]
    fn dimension_and_bit_errors() {
        let s = toy1();
        assert!(matches!(s.bops(&Policy::new(vec![0.0, 2.0])), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(s.bops(&Policy::new(vec![0.0, 0.0, 2.0])), Err(Error::NonPositiveBitwidth { dim: 1, .. })));
    }

    #[test]
    fn rounding_examples() {
        let grid = [0.25, 0.5, 0.75];
        assert_eq!(nearest_on_grid(&grid, 0.6), 0.5);
        assert_eq!(nearest_on_grid(&bits(), 5.0), 6.0);
        assert_eq!(nearest_on_grid(&bits(), 4.9), 4.0);
        assert_eq!(nearest_on_grid(&bits(), 1.0), 2.0);
        assert_eq!(nearest_on_grid(&bits(), 9.0), 8.0);
        let s = toy1();
        let p = Policy::new(vec![0.25, 4.0, 8.0]);
        assert_eq!(s.round_to_grid(&p).unwrap(), p);
    }

    #[test]
    fn rounding_leaves_frozen_untouched() {
        let layer = LayerSpec::new(1.0, vec![0.0, 0.5], bits(), bits()).with_frozen(Component::WeightBits, 8.0);
        let s = SearchSpace::new("f", vec![layer]).unwrap();
        let r = s.round_to_grid(&Policy::new(vec![0.3, 8.0, 3.0])).unwrap();
        assert_eq!(r.values(), &[0.5, 8.0, 4.0]);
    }

    #[test]
    fn encode_examples() {
        let s = toy1();
        let x = s.encode(&Policy::new(vec![0.75, 8.0, 4.0])).unwrap();
        assert_eq!(x, vec![0.75, 1.0, 0.5]);
        assert_eq!(s.encode_scales(), vec![1.0, 0.125, 0.125]);
        assert_eq!(s.decode(&x).unwrap().values(), &[0.75, 8.0, 4.0]);
    }

    #[test]
    fn frozen_value_is_appended_to_grid() {
        let layer =
            LayerSpec::new(1.0, vec![0.25, 0.5], vec![2.0, 4.0], bits()).with_frozen(Component::WeightBits, 8.0);
        let last = LayerSpec::new(1.0, vec![0.25, 0.5], bits(), bits()).with_frozen(Component::Prune, 0.0);
        let s = SearchSpace::new("f", vec![layer, last]).unwrap();
        assert_eq!(s.layers()[0].wbit_grid, vec![2.0, 4.0, 8.0]);
        assert_eq!(s.layers()[1].prune_grid, vec![0.0, 0.25, 0.5]);
        assert_eq!(s.bounds(1), (8.0, 8.0));
        assert_eq!(s.bounds(3), (0.0, 0.0));
        assert_eq!(s.s_w_max(), 8.0);
        assert_eq!(s.free_dims(), 4);
    }

    #[test]
    fn invalid_spaces_are_rejected() {
        assert!(SearchSpace::<f64>::new("e", vec![]).is_err());
        let bad_base = LayerSpec::new(0.0, vec![0.0], bits(), bits());
        assert!(SearchSpace::new("b", vec![bad_base]).is_err());
        let unsorted = LayerSpec::new(1.0, vec![0.5, 0.25], bits(), bits());
        assert!(SearchSpace::new("u", vec![unsorted]).is_err());
        let full_prune = LayerSpec::new(1.0, vec![0.0, 1.0], bits(), bits());
        assert!(SearchSpace::new("p", vec![full_prune]).is_err());
        let wide = LayerSpec::new(1.0, vec![0.0], vec![2.0, 64.0], bits());
        assert!(SearchSpace::new("w", vec![wide]).is_err());
    }

    #[test]
    fn toy_perturbation_scale() {
        let s = toy1();
        let p = Policy::new(vec![0.0, 2.0, 4.0]);
        let cands = s.perturbation_candidates(&p, 2.0e-9).unwrap();
        // alpha_w = b0 / 4 bit-ops per bit = 0.5: 2.5 survives, 1.5 clips to the grid floor (zero shift)
        let w: Vec<_> = cands.iter().filter(|c| c.dim == 1).collect();
        assert_eq!(w.len(), 1);
        assert!((w[0].policy.values()[1] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn fully_frozen_space_has_no_perturbations() {
        let layer = LayerSpec::new(1.0, vec![0.5], vec![4.0], vec![4.0])
            .with_frozen(Component::Prune, 0.5)
            .with_frozen(Component::WeightBits, 4.0)
            .with_frozen(Component::ActBits, 4.0);
        let s = SearchSpace::new("frozen", vec![layer]).unwrap();
        let p = Policy::new(vec![0.5, 4.0, 4.0]);
        assert!(s.perturbation_candidates(&p, 0.1).unwrap().is_empty());
        assert!(matches!(s.perturbations(&p, 0.1, 1, 0), Err(Error::TooFewPerturbations { .. })));
        assert!(matches!(s.perturbations(&p, 0.0, 0, 0), Err(Error::NonPositiveB0(_))));
    }

    #[test]
    fn grid_enumeration_and_keys() {
        let s = two_layer();
        let all = s.enumerate_grid();
        assert_eq!(all.len() as u128, s.grid_size());
        assert_eq!(all.len(), 2 * 4 * 4 * 2 * 4 * 4);
        let keys: HashSet<_> = all.iter().map(|p| s.grid_key(p).unwrap()).collect();
        assert_eq!(keys.len(), all.len());
        let p = &all[77];
        assert_eq!(&s.policy_from_key(&s.grid_key(p).unwrap()), p);
        assert!(s.grid_key(&Policy::new(vec![0.1, 4.0, 4.0, 0.0, 4.0, 4.0])).is_err());
    }

    #[test]
    fn corners_bracket_every_grid_point() {
        let s = two_layer();
        let lo = s.bops(&s.min_capacity_policy()).unwrap();
        let hi = s.bops(&s.max_capacity_policy()).unwrap();
        for p in s.enumerate_grid() {
            let c = s.bops(&p).unwrap();
            assert!(c >= lo && c <= hi);
        }
    }

    #[test]
    fn geometry_helper() {
        // 3x3 conv, 16 -> 16 channels at 32x32
        let g = conv_base_bops(32, 32, 3, 3, 16, 16, 1);
        assert!((g - 2_359_296.0 * 1024.0 / 1e9).abs() < 1e-12);
        let dw = conv_base_bops(8, 8, 3, 3, 32, 32, 32);
        assert!((dw - (64 * 9 * 32) as f64 * 1024.0 / 1e9).abs() < 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let layer = LayerSpec::<f32>::new(1.0, vec![0.0, 0.5], vec![2.0, 4.0, 8.0], vec![2.0, 4.0, 8.0]);
        let s = SearchSpace::new("f32", vec![layer]).unwrap();
        let c = s.bops(&Policy::new(vec![0.5f32, 4.0, 8.0])).unwrap();
        assert!((c - 32.0 / 1024.0 * 0.5).abs() < 1e-7);
    }
}
