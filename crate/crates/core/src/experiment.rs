//! Multi-seed experiment cells: optimizer ablations and one-axis sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active::{active_learn, EvoConfig};
use crate::error::Result;
use crate::optimizer::{init_policy, optimize, OptConfig, Optimized};
use crate::oracle::AccuracyOracle;
use crate::predictor::{Predictor, TrainConfig};
use crate::rng;
use crate::scalar::Scalar;
use crate::searchspace::{Policy, SearchSpace};

const STREAM_INIT: u64 = 0x20;

/// Checks the budget, draws the seeded initial policy and optimizes from it.
pub fn seeded_optimize<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    cfg: &OptConfig<T>,
    seed: u64,
) -> Result<Optimized<T>> {
    space.check_budget(cfg.budget)?;
    let cfg = OptConfig { seed, ..cfg.clone() };
    let init = init_policy(space, &cfg, rng::derive(seed, STREAM_INIT))?;
    optimize(pred, space, &cfg, &init)
}

/// Result of one optimizer run evaluated by the oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedOutcome<T> {
    pub seed: u64,
    pub deployed: Policy<T>,
    pub complexity: T,
    pub predicted: T,
    pub accuracy: T,
}

/// Seeded init, optimize, then label the deployed policy with the oracle.
pub fn run_seed<T: Scalar, O: AccuracyOracle<T> + ?Sized>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    oracle: &O,
    cfg: &OptConfig<T>,
    seed: u64,
) -> Result<SeedOutcome<T>> {
    let out = seeded_optimize(pred, space, cfg, seed)?;
    let complexity = space.bops(&out.deployed)?;
    let predicted = pred.forward(&space.encode(&out.deployed)?)?;
    let accuracy = oracle.accuracy(space, &out.deployed)?;
    Ok(SeedOutcome { seed, deployed: out.deployed, complexity, predicted, accuracy })
}

/// Runs every seed (in parallel) and returns outcomes in seed order.
pub fn run_seeds<T: Scalar, O: AccuracyOracle<T> + ?Sized>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    oracle: &O,
    cfg: &OptConfig<T>,
    seeds: &[u64],
) -> Result<Vec<SeedOutcome<T>>> {
    seeds.par_iter().map(|&s| run_seed(pred, space, oracle, cfg, s)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Summary {
    pub fn of<T: Scalar>(values: &[T]) -> Self {
        let v: Vec<f64> = values.iter().map(|x| x.as_f64()).collect();
        Self { mean: mean(&v), std: std_dev(&v), median: median(&v) }
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// One cell of the objective/update ablation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub use_barrier: bool,
    pub use_gap: bool,
    pub use_adaptive_step: bool,
    pub use_momentum: bool,
}

impl Variant {
    pub const FULL: Variant = Variant { use_barrier: true, use_gap: true, use_adaptive_step: true, use_momentum: true };

    /// `F\M`, `F&M`, `A\M` or `A&M`: fixed/adaptive step without/with momentum.
    pub fn update_label(&self) -> &'static str {
        match (self.use_adaptive_step, self.use_momentum) {
            (false, false) => "F\\M",
            (false, true) => "F&M",
            (true, false) => "A\\M",
            (true, true) => "A&M",
        }
    }

    pub fn apply<T: Scalar>(&self, base: &OptConfig<T>) -> OptConfig<T> {
        OptConfig {
            use_barrier: self.use_barrier,
            use_gap: self.use_gap,
            use_adaptive_step: self.use_adaptive_step,
            use_momentum: self.use_momentum,
            ..base.clone()
        }
    }

    /// The four variants with exactly one flag of the full configuration off.
    pub fn single_disabled() -> [Variant; 4] {
        let f = Self::FULL;
        [
            Variant { use_barrier: false, ..f },
            Variant { use_gap: false, ..f },
            Variant { use_adaptive_step: false, ..f },
            Variant { use_momentum: false, ..f },
        ]
    }
}

/// All 16 combinations, barrier-major then gap then update rule.
pub fn ablation_grid() -> Vec<Variant> {
    let mut out = Vec::with_capacity(16);
    for use_barrier in [false, true] {
        for use_gap in [false, true] {
            for (use_adaptive_step, use_momentum) in [(false, false), (false, true), (true, false), (true, true)] {
                out.push(Variant { use_barrier, use_gap, use_adaptive_step, use_momentum });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub complexity: Summary,
    pub accuracy: Summary,
    pub predicted: Summary,
}

pub fn ablation_row<T: Scalar, O: AccuracyOracle<T> + ?Sized>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    oracle: &O,
    base: &OptConfig<T>,
    variant: Variant,
    seeds: &[u64],
) -> Result<AblationRow> {
    let runs = run_seeds(pred, space, oracle, &variant.apply(base), seeds)?;
    let col = |f: fn(&SeedOutcome<T>) -> T| runs.iter().map(f).collect::<Vec<T>>();
    Ok(AblationRow {
        variant,
        complexity: Summary::of(&col(|r| r.complexity)),
        accuracy: Summary::of(&col(|r| r.accuracy)),
        predicted: Summary::of(&col(|r| r.predicted)),
    })
}

pub fn ablation<T: Scalar, O: AccuracyOracle<T> + ?Sized>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    oracle: &O,
    base: &OptConfig<T>,
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    ablation_grid().into_iter().map(|v| ablation_row(pred, space, oracle, base, v, seeds)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Initial complexity as a fraction of the budget.
    InitComplexity,
    Eta,
    /// Perturbation magnitude for predictor learning.
    B0,
    /// Budget in G.
    Budget,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "init_complexity" | "init-complexity" => Some(Self::InitComplexity),
            "eta" => Some(Self::Eta),
            "b0" => Some(Self::B0),
            "budget" => Some(Self::Budget),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::InitComplexity => "init_complexity",
            Self::Eta => "eta",
            Self::B0 => "b0",
            Self::Budget => "budget",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// Oracle accuracy of deployed policies (optimizer axes).
    pub accuracy: Option<Summary>,
    pub complexity: Option<Summary>,
    /// Final held-out predictor MSE (b0 axis).
    pub mse: Option<Summary>,
}

/// Sweeps an optimizer hyperparameter; each value runs every seed.
pub fn sweep_optimizer<T: Scalar, O: AccuracyOracle<T> + ?Sized>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    oracle: &O,
    base: &OptConfig<T>,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::InitComplexity => cfg.init_fraction = T::of(v),
                SweepAxis::Eta => cfg.eta = T::of(v),
                SweepAxis::Budget => cfg.budget = T::of(v),
                SweepAxis::B0 => {
                    return Err(crate::Error::InvalidConfig("b0 is a predictor-learning axis".into()));
                }
            }
            let runs = run_seeds(pred, space, oracle, &cfg, seeds)?;
            let acc: Vec<T> = runs.iter().map(|r| r.accuracy).collect();
            let cx: Vec<T> = runs.iter().map(|r| r.complexity).collect();
            Ok(SweepRow { value: v, accuracy: Some(Summary::of(&acc)), complexity: Some(Summary::of(&cx)), mse: None })
        })
        .collect()
}

/// Sweeps the perturbation magnitude used by both the uncertainty search and
/// the importance weights, reporting final held-out MSE of active learning.
pub fn sweep_b0<T: Scalar, O: AccuracyOracle<T> + ?Sized>(
    space: &SearchSpace<T>,
    oracle: &O,
    evo: &EvoConfig<T>,
    tcfg: &TrainConfig<T>,
    values: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&v| {
            let mses: Vec<T> = seeds
                .par_iter()
                .map(|&seed| {
                    let e = EvoConfig { b0: T::of(v), seed, ..evo.clone() };
                    let t = TrainConfig { b0: T::of(v), seed, ..tcfg.clone() };
                    let run = active_learn(space, oracle, &e, &t)?;
                    Ok(*run.mse_curve.last().expect("at least one round"))
                })
                .collect::<Result<_>>()?;
            Ok(SweepRow { value: v, accuracy: None, complexity: None, mse: Some(Summary::of(&mses)) })
        })
        .collect()
}
