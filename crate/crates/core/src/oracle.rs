//! Ground-truth accuracy sources standing in for fine-tuning compressed models.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng as _;

use crate::dataset::{self, SampleRecord};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::searchspace::{GridKey, Policy, SearchSpace, FULL_PRECISION_BITS};

/// Anything that can label a discrete policy with an accuracy in `[0, 1]`.
pub trait AccuracyOracle<T: Scalar>: Sync {
    fn accuracy(&self, space: &SearchSpace<T>, policy: &Policy<T>) -> Result<T>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleCoefficients<T> {
    pub cw: T,
    pub ca: T,
    pub cp: T,
}

/// Deterministic saturating accuracy model.
///
/// `D = sum_i cw_i g(w_i) + ca_i g(a_i) + cp_i p_i^2` with `g(b) = (8/b - 1)/3`,
/// and accuracy `a_max - depth * D / (1 + D)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticOracle<T> {
    coeffs: Vec<OracleCoefficients<T>>,
    a_max: T,
    depth: T,
    noise: Option<(T, u64)>,
}

pub const DEFAULT_A_MAX: f64 = 0.93;
pub const DEFAULT_DEPTH: f64 = 0.35;

impl<T: Scalar> SyntheticOracle<T> {
    pub fn new(coeffs: Vec<OracleCoefficients<T>>, a_max: T, depth: T) -> Result<Self> {
        let in_range = |v: T, lo: f64, hi: f64| v >= T::of(lo) && v <= T::of(hi);
        for (i, c) in coeffs.iter().enumerate() {
            if !in_range(c.cw, 0.2, 1.0) || !in_range(c.ca, 0.2, 1.0) || !in_range(c.cp, 0.5, 2.0) {
                return Err(Error::InvalidSpace(format!("oracle coefficients of layer {} out of range", i + 1)));
            }
        }
        if !(depth > T::zero()) || !(a_max - depth >= T::zero()) || a_max > T::one() {
            return Err(Error::InvalidSpace("oracle needs 0 < depth <= a_max <= 1".into()));
        }
        Ok(Self { coeffs, a_max, depth, noise: None })
    }

    /// Fresh coefficients drawn uniformly from their ranges.
    pub fn generate(num_layers: usize, seed: u64) -> Self {
        let mut r = rng::rng_from(seed);
        let coeffs = (0..num_layers)
            .map(|_| OracleCoefficients {
                cw: T::of(round4(r.gen_range(0.2..=1.0))),
                ca: T::of(round4(r.gen_range(0.2..=1.0))),
                cp: T::of(round4(r.gen_range(0.5..=2.0))),
            })
            .collect();
        Self { coeffs, a_max: T::of(DEFAULT_A_MAX), depth: T::of(DEFAULT_DEPTH), noise: None }
    }

    /// Adds uniform `+-sigma` label noise keyed on the policy.
    pub fn with_noise(mut self, sigma: T, seed: u64) -> Self {
        self.noise = (sigma > T::zero()).then_some((sigma, seed));
        self
    }

    pub fn coefficients(&self) -> &[OracleCoefficients<T>] {
        &self.coeffs
    }

    pub fn a_max(&self) -> T {
        self.a_max
    }

    pub fn depth(&self) -> T {
        self.depth
    }

    pub fn noise(&self) -> Option<(T, u64)> {
        self.noise
    }

    /// Degradation `D` of a policy; no grid check.
    pub fn degradation(&self, policy: &Policy<T>) -> T {
        let g = |b: T| (T::of(8.0) / b - T::one()) / T::of(3.0);
        self.coeffs
            .iter()
            .zip(policy.values().chunks_exact(3))
            .fold(T::zero(), |acc, (c, s)| acc + c.cw * g(s[1]) + c.ca * g(s[2]) + c.cp * s[0] * s[0])
    }

    pub fn synth_accuracy(&self, space: &SearchSpace<T>, policy: &Policy<T>) -> Result<T> {
        if self.coeffs.len() != space.num_layers() {
            return Err(Error::DimensionMismatch { expected: self.coeffs.len() * 3, actual: space.dim() });
        }
        let key = space.grid_key(policy)?;
        let max_bits = T::of(f64::from(FULL_PRECISION_BITS));
        for (d, &v) in policy.values().iter().enumerate() {
            if d % 3 != 0 && (!(v > T::zero()) || v > max_bits) {
                return Err(Error::BitwidthOutOfRange { dim: d, value: v.as_f64() });
            }
        }
        let d = self.degradation(policy);
        let mut acc = self.a_max - self.depth * d / (T::one() + d);
        if let Some((sigma, seed)) = self.noise {
            let u: f64 = rng::rng_from(rng::derive(seed, key.hash64())).gen_range(-1.0..=1.0);
            acc += sigma * T::of(u);
        }
        Ok(acc)
    }
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

impl<T: Scalar> AccuracyOracle<T> for SyntheticOracle<T> {
    fn accuracy(&self, space: &SearchSpace<T>, policy: &Policy<T>) -> Result<T> {
        self.synth_accuracy(space, policy)
    }
}

/// Exact lookup over previously recorded labels.
#[derive(Clone, Debug, Default)]
pub struct ReplayOracle<T> {
    table: HashMap<GridKey, T>,
}

impl<T: Scalar> ReplayOracle<T> {
    pub fn from_records(space: &SearchSpace<T>, records: &[SampleRecord<T>]) -> Result<Self> {
        let mut table = HashMap::with_capacity(records.len());
        for (row, r) in records.iter().enumerate() {
            let key = space.grid_key(&r.policy)?;
            match table.get(&key) {
                Some(&prev) if prev != r.accuracy => return Err(Error::ConflictingLabel { row: row + 1 }),
                Some(_) => {}
                None => {
                    table.insert(key, r.accuracy);
                }
            }
        }
        Ok(Self { table })
    }

    pub fn load(space: &SearchSpace<T>, path: impl AsRef<Path>) -> Result<Self> {
        let records = dataset::read_csv(space, path)?;
        Self::from_records(space, &records)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn replay_accuracy(&self, space: &SearchSpace<T>, policy: &Policy<T>) -> Result<T> {
        let key = space.grid_key(policy)?;
        self.table.get(&key).copied().ok_or(Error::UnknownPolicy)
    }
}

impl<T: Scalar> AccuracyOracle<T> for ReplayOracle<T> {
    fn accuracy(&self, space: &SearchSpace<T>, policy: &Policy<T>) -> Result<T> {
        self.replay_accuracy(space, policy)
    }
}
