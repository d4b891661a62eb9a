//! Budget-constrained policy ascent on a trained predictor.
//!
//! The objective is
//! `J(s) = f(encode(s)) - l1 * Omega(C(s)) - l2 * |s - round(s)|^2`
//! with the log barrier `Omega = -log(1 - C/C0)`. Iterates follow
//! normalized-gradient momentum with a stepsize that shrinks as the
//! complexity approaches the budget; the last feasible iterate is rounded to
//! the grid and repaired into the budget.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::policy_columns;
use crate::error::{Error, Result};
use crate::predictor::Predictor;
use crate::rng;
use crate::scalar::{norm, sq_dist, Scalar};
use crate::searchspace::{Component, Policy, SearchSpace};

const ZERO_NORM: f64 = 1e-12;
const INIT_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierForm {
    /// `-log(1 - C/C0)`: unit free.
    Normalized,
    /// `-log(C0 - C)`.
    Raw,
}

/// Coordinates in which the normalized ascent step is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSpace {
    /// Predictor inputs: bitwidths divided by their grid maximum.
    Encoded,
    /// Raw policy coordinates.
    Policy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig<T> {
    /// Complexity budget `C0` in G.
    pub budget: T,
    pub lambda_barrier: T,
    pub lambda_gap: T,
    pub momentum: T,
    pub eta: T,
    pub max_iter: usize,
    pub use_barrier: bool,
    pub use_gap: bool,
    pub use_momentum: bool,
    pub use_adaptive_step: bool,
    /// Stepsize when `use_adaptive_step` is off.
    pub fixed_step: T,
    /// Soft complexity penalty `f - lambda * C`, only used with the barrier off.
    pub soft_lambda: Option<T>,
    pub barrier_form: BarrierForm,
    /// Step along the accumulated gradient from before this iteration's update.
    pub step_with_previous_momentum: bool,
    pub step_space: StepSpace,
    /// Initial complexity as a fraction of the budget.
    pub init_fraction: T,
    pub seed: u64,
}

impl<T: Scalar> Default for OptConfig<T> {
    fn default() -> Self {
        Self {
            budget: T::of(0.2),
            lambda_barrier: T::of(0.1),
            lambda_gap: T::of(0.005),
            momentum: T::of(0.9),
            eta: T::of(0.05),
            max_iter: 30,
            use_barrier: true,
            use_gap: true,
            use_momentum: true,
            use_adaptive_step: true,
            fixed_step: T::of(0.025),
            soft_lambda: None,
            barrier_form: BarrierForm::Normalized,
            step_with_previous_momentum: false,
            step_space: StepSpace::Encoded,
            init_fraction: T::of(0.5),
            seed: 0,
        }
    }
}

impl<T: Scalar> OptConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.budget > T::zero()) {
            return bad("budget must be positive");
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.eta > T::zero()) || !(self.fixed_step > T::zero()) {
            return bad("eta and fixed_step must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if !(self.init_fraction > T::zero() && self.init_fraction < T::one()) {
            return bad("init_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Individual objective terms (unweighted).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms<T> {
    pub predicted: T,
    pub complexity: T,
    /// `Omega(C)`, zero when the barrier is disabled.
    pub barrier: T,
    /// `|s - round(s)|^2`, zero when the gap term is disabled.
    pub gap: T,
    /// Soft Lagrangian penalty `C`, zero unless active.
    pub penalty: T,
}

fn evaluate_terms<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    policy: &Policy<T>,
    cfg: &OptConfig<T>,
) -> Result<(T, ObjectiveTerms<T>)> {
    space.check_dim(policy)?;
    let x = space.encode(policy)?;
    let predicted = pred.forward(&x)?;
    let complexity = space.bops(policy)?;
    let mut j = predicted;
    let mut terms = ObjectiveTerms { predicted, complexity, barrier: T::zero(), gap: T::zero(), penalty: T::zero() };
    if cfg.use_barrier {
        if complexity >= cfg.budget {
            return Err(Error::Infeasible { complexity: complexity.as_f64(), budget: cfg.budget.as_f64() });
        }
        terms.barrier = match cfg.barrier_form {
            BarrierForm::Normalized => -(T::one() - complexity / cfg.budget).ln(),
            BarrierForm::Raw => -(cfg.budget - complexity).ln(),
        };
        j -= cfg.lambda_barrier * terms.barrier;
    } else if let Some(lambda) = cfg.soft_lambda {
        terms.penalty = complexity;
        j -= lambda * complexity;
    }
    if cfg.use_gap {
        let rounded = space.round_to_grid(policy)?;
        terms.gap = sq_dist(policy.values(), rounded.values());
        j -= cfg.lambda_gap * terms.gap;
    }
    Ok((j, terms))
}

/// Objective value and its terms at `policy`.
pub fn objective<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    policy: &Policy<T>,
    cfg: &OptConfig<T>,
) -> Result<(T, ObjectiveTerms<T>)> {
    evaluate_terms(pred, space, policy, cfg)
}

/// Gradient of [`objective`] in policy coordinates. The rounding target is
/// held constant and frozen dimensions are zeroed.
pub fn objective_gradient<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    policy: &Policy<T>,
    cfg: &OptConfig<T>,
) -> Result<Vec<T>> {
    space.check_dim(policy)?;
    let s = policy.values();
    let x = space.encode(policy)?;
    let df = pred.input_gradient(&x)?;
    let mut grad: Vec<T> = df.iter().zip(space.encode_scales()).map(|(&g, k)| g * k).collect();
    let complexity = space.bops(policy)?;
    let dc = || space.bops_gradient_unchecked(s);
    if cfg.use_barrier {
        if complexity >= cfg.budget {
            return Err(Error::Infeasible { complexity: complexity.as_f64(), budget: cfg.budget.as_f64() });
        }
        // both barrier forms differentiate to dC / (C0 - C)
        let k = cfg.lambda_barrier / (cfg.budget - complexity);
        for (g, d) in grad.iter_mut().zip(dc()) {
            *g -= k * d;
        }
    } else if let Some(lambda) = cfg.soft_lambda {
        for (g, d) in grad.iter_mut().zip(dc()) {
            *g -= lambda * d;
        }
    }
    if cfg.use_gap {
        let rounded = space.round_to_grid(policy)?;
        let two = T::of(2.0);
        for ((g, &v), &r) in grad.iter_mut().zip(s).zip(rounded.values()) {
            *g -= two * cfg.lambda_gap * (v - r);
        }
    }
    for (d, g) in grad.iter_mut().enumerate() {
        if space.is_frozen(d) {
            *g = T::zero();
        }
    }
    Ok(grad)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    BudgetHit,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep<T> {
    pub step: usize,
    pub policy: Policy<T>,
    pub predicted: T,
    pub complexity: T,
    pub barrier: T,
    pub gap: T,
    /// Stepsize that produced this iterate (0 for the initial point).
    pub stepsize: T,
    /// Normalized objective gradient read at the previous iterate, in the
    /// configured step coordinates.
    pub direction: Vec<T>,
    /// Accumulated gradient after this step's update.
    pub momentum: Vec<T>,
    pub momentum_norm: T,
}

/// Accepted iterates of one optimization run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub steps: Vec<TrajectoryStep<T>>,
    pub status: Termination,
    /// Complexity of the rejected iterate when the run stopped on the budget.
    pub rejected_complexity: Option<T>,
}

impl<T: Scalar> Trajectory<T> {
    /// Last accepted iterate: the continuous optimum.
    pub fn optimum(&self) -> &Policy<T> {
        &self.steps.last().expect("trajectory has the initial point").policy
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let num_layers = self.steps.first().map_or(0, |s| s.policy.num_layers());
        let mut header: Vec<String> =
            ["step", "complexity_g", "predicted_acc", "barrier", "gap", "stepsize"].map(String::from).to_vec();
        header.extend(policy_columns(num_layers));
        w.write_record(&header)?;
        for s in &self.steps {
            let mut row = vec![
                s.step.to_string(),
                s.complexity.to_string(),
                s.predicted.to_string(),
                s.barrier.to_string(),
                s.gap.to_string(),
                s.stepsize.to_string(),
            ];
            row.extend(s.policy.values().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimized<T> {
    /// Grid-rounded, budget-repaired policy.
    pub deployed: Policy<T>,
    pub trajectory: Trajectory<T>,
}

fn clip_to_box<T: Scalar>(space: &SearchSpace<T>, values: &mut [T]) {
    for (d, v) in values.iter_mut().enumerate() {
        let (lo, hi) = space.bounds(d);
        *v = v.max(lo).min(hi);
    }
}

/// Runs the constrained ascent from `init` and deploys the result.
pub fn optimize<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    cfg: &OptConfig<T>,
    init: &Policy<T>,
) -> Result<Optimized<T>> {
    cfg.validate()?;
    space.check_bounds(init)?;
    let c0 = space.bops(init)?;
    if c0 >= cfg.budget {
        return Err(Error::InfeasibleInit { complexity: c0.as_f64(), budget: cfg.budget.as_f64() });
    }
    let n = space.dim();
    let mu = if cfg.use_momentum { cfg.momentum } else { T::zero() };
    let tiny = T::of(ZERO_NORM);
    let scales = space.encode_scales();
    // policy-coordinate length of one encoded unit
    let unit: Vec<T> = match cfg.step_space {
        StepSpace::Encoded => scales.iter().map(|&k| T::one() / k).collect(),
        StepSpace::Policy => vec![T::one(); n],
    };

    let (_, terms) = evaluate_terms(pred, space, init, cfg)?;
    let mut steps = vec![TrajectoryStep {
        step: 0,
        policy: init.clone(),
        predicted: terms.predicted,
        complexity: terms.complexity,
        barrier: terms.barrier,
        gap: terms.gap,
        stepsize: T::zero(),
        direction: vec![T::zero(); n],
        momentum: vec![T::zero(); n],
        momentum_norm: T::zero(),
    }];
    let mut status = Termination::MaxIter;
    let mut rejected_complexity = None;

    for t in 1..=cfg.max_iter {
        let current = steps.last().expect("non-empty");
        let mut grad = objective_gradient(pred, space, &current.policy, cfg)?;
        if cfg.step_space == StepSpace::Encoded {
            for (g, k) in grad.iter_mut().zip(&scales) {
                *g /= *k;
            }
        }
        let gn = norm(&grad);
        let direction: Vec<T> = if gn < tiny { vec![T::zero(); n] } else { grad.iter().map(|&g| g / gn).collect() };
        let momentum: Vec<T> =
            current.momentum.iter().zip(&direction).map(|(&g, &d)| mu * g + (T::one() - mu) * d).collect();
        let step_vec = if cfg.step_with_previous_momentum && current.momentum_norm >= tiny {
            &current.momentum
        } else {
            &momentum
        };
        let sn = norm(step_vec);
        if sn < tiny {
            break;
        }
        let stepsize =
            if cfg.use_adaptive_step { cfg.eta * (T::one() - current.complexity / cfg.budget) } else { cfg.fixed_step };
        let mut next: Vec<T> = current
            .policy
            .values()
            .iter()
            .zip(step_vec)
            .zip(&unit)
            .map(|((&v, &g), &u)| v + stepsize * g / sn * u)
            .collect();
        clip_to_box(space, &mut next);
        let next = Policy::new(next);
        let complexity = space.bops(&next)?;
        if complexity >= cfg.budget {
            status = Termination::BudgetHit;
            rejected_complexity = Some(complexity);
            break;
        }
        let (_, terms) = evaluate_terms(pred, space, &next, cfg)?;
        let momentum_norm = norm(&momentum);
        steps.push(TrajectoryStep {
            step: t,
            policy: next,
            predicted: terms.predicted,
            complexity: terms.complexity,
            barrier: terms.barrier,
            gap: terms.gap,
            stepsize,
            direction,
            momentum,
            momentum_norm,
        });
    }
    let trajectory = Trajectory { steps, status, rejected_complexity };
    let rounded = space.round_to_grid(trajectory.optimum())?;
    let deployed = repair_rounding(space, &rounded, cfg.budget)?;
    Ok(Optimized { deployed, trajectory })
}

/// Lowers capacity one grid notch at a time until `bops <= budget`.
///
/// Each move takes the entry whose one-notch decrease (a higher pruning
/// ratio or a lower bitwidth) removes the most complexity; ties go to the
/// lowest dimension index.
pub fn repair_rounding<T: Scalar>(space: &SearchSpace<T>, rounded: &Policy<T>, budget: T) -> Result<Policy<T>> {
    let key = space.grid_key(rounded)?;
    space.check_budget(budget)?;
    let mut idx: Vec<usize> = key.0.iter().map(|&i| usize::from(i)).collect();
    let mut policy = rounded.clone();
    let mut current = space.bops(&policy)?;
    while current > budget {
        let mut best: Option<(usize, usize, T)> = None;
        for d in 0..space.dim() {
            if space.is_frozen(d) {
                continue;
            }
            let grid = space.grid(d);
            let target = match Component::of_dim(d).1 {
                Component::Prune if idx[d] + 1 < grid.len() => idx[d] + 1,
                Component::WeightBits | Component::ActBits if idx[d] > 0 => idx[d] - 1,
                _ => continue,
            };
            let old = policy.values()[d];
            policy.values_mut()[d] = grid[target];
            let reduction = current - space.bops_unchecked(policy.values());
            policy.values_mut()[d] = old;
            if best.map_or(true, |(_, _, r)| reduction > r) {
                best = Some((d, target, reduction));
            }
        }
        let Some((d, target, _)) = best else {
            return Err(Error::InfeasibleBudget {
                budget: budget.as_f64(),
                min_complexity: space.min_complexity().as_f64(),
            });
        };
        idx[d] = target;
        policy.values_mut()[d] = space.grid(d)[target];
        current = space.bops_unchecked(policy.values());
    }
    Ok(policy)
}

/// Random starting point with complexity near `init_fraction * budget`.
///
/// Rejection-samples grid policies inside `[0.8, 1.2] * init_fraction * C0`;
/// after 10^4 misses it bisects along the segment from the minimum-capacity
/// corner toward a random policy (or the maximum-capacity corner) to hit the
/// band centre.
pub fn init_policy<T: Scalar>(space: &SearchSpace<T>, cfg: &OptConfig<T>, seed: u64) -> Result<Policy<T>> {
    cfg.validate()?;
    let target = cfg.init_fraction * cfg.budget;
    let (lo, hi) = (T::of(0.8) * target, T::of(1.2) * target);
    let band_err = || Error::InfeasibleBand { lo: lo.as_f64(), hi: hi.as_f64() };
    let floor = space.min_capacity_policy();
    let ceil = space.max_capacity_policy();
    if space.bops(&floor)? > hi || space.bops(&ceil)? < lo {
        return Err(band_err());
    }
    let mut r = rng::rng_from(seed);
    for _ in 0..INIT_ATTEMPTS {
        let p = space.random_grid_policy(&mut r);
        let c = space.bops_unchecked(p.values());
        if c >= lo && c <= hi && c < cfg.budget {
            return Ok(p);
        }
    }
    let random = space.random_grid_policy(&mut r);
    let end = if space.bops_unchecked(random.values()) >= target { random } else { ceil };
    let along = |lambda: T| -> Policy<T> {
        Policy::new(floor.values().iter().zip(end.values()).map(|(&a, &b)| a + lambda * (b - a)).collect())
    };
    if space.bops_unchecked(floor.values()) >= target {
        return Ok(floor);
    }
    let (mut a, mut b) = (T::zero(), T::one());
    for _ in 0..200 {
        let m = (a + b) / T::of(2.0);
        if space.bops_unchecked(along(m).values()) < target {
            a = m;
        } else {
            b = m;
        }
    }
    let p = along(a);
    let c = space.bops_unchecked(p.values());
    if c < lo || c > hi || c >= cfg.budget {
        return Err(band_err());
    }
    Ok(p)
}
