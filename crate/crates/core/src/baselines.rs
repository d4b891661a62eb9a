//! Comparison searchers: best-of-k random feasible policies and an
//! evolutionary search that maximizes predicted accuracy under the budget.

use std::collections::HashSet;

use crate::active::{evolve, random_distinct, ConstraintMode, EvoConfig};
use crate::error::{Error, Result};
use crate::predictor::Predictor;
use crate::rng;
use crate::scalar::Scalar;
use crate::searchspace::{Policy, SearchSpace};

/// Default number of random candidates.
pub const DEFAULT_RANDOM_K: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct RandomSelection<T> {
    pub best: Policy<T>,
    pub best_score: T,
    /// Every sampled policy with its score, in sampling order.
    pub evaluations: Vec<(Policy<T>, T)>,
}

/// Scores `k` distinct feasible random grid policies and keeps the best
/// (first sampled wins ties).
pub fn random_select<T: Scalar>(
    evaluate: &(dyn Fn(&Policy<T>) -> Result<T> + Sync),
    space: &SearchSpace<T>,
    budget: T,
    k: usize,
    seed: u64,
) -> Result<RandomSelection<T>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    space.check_budget(budget)?;
    let feasible = |p: &Policy<T>| space.bops_unchecked(p.values()) <= budget;
    let picked = random_distinct(space, k, &HashSet::new(), &feasible, &mut rng::rng_from(seed));
    if picked.len() < k {
        return Err(Error::SpaceExhausted { requested: k, available: picked.len() });
    }
    let mut evaluations = Vec::with_capacity(k);
    for p in picked {
        let score = evaluate(&p)?;
        evaluations.push((p, score));
    }
    let (best, best_score) = evaluations
        .iter()
        .fold(None::<&(Policy<T>, T)>, |acc, e| match acc {
            Some(b) if b.1 >= e.1 => Some(b),
            _ => Some(e),
        })
        .map(|(p, s)| (p.clone(), *s))
        .expect("k >= 1");
    Ok(RandomSelection { best, best_score, evaluations })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedSearch<T> {
    pub best: Policy<T>,
    pub best_predicted: T,
    /// Best fitness after each generation.
    pub history: Vec<T>,
}

/// Evolutionary maximization of `f(encode(s))` subject to `bops(s) <= budget`.
pub fn evo_search_constrained<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    budget: T,
    evo: &EvoConfig<T>,
) -> Result<ConstrainedSearch<T>> {
    evo.validate()?;
    space.check_budget(budget)?;
    let feasible = |p: &Policy<T>| space.bops_unchecked(p.values()) <= budget;
    let predicted = |p: &Policy<T>| pred.forward(&space.encode(p)?);
    let out = match evo.constraint {
        ConstraintMode::Discard => evolve(space, evo, &HashSet::new(), &feasible, &predicted, 1, evo.seed)?,
        ConstraintMode::Penalty => {
            let penalized = |p: &Policy<T>| {
                let over = (space.bops_unchecked(p.values()) / budget - T::one()).max(T::zero());
                Ok(predicted(p)? - evo.penalty * over)
            };
            evolve(space, evo, &HashSet::new(), &|_| true, &penalized, evo.population, evo.seed)?
        }
    };
    let best = out
        .leaders
        .into_iter()
        .find(|s| feasible(&s.policy))
        .ok_or_else(|| Error::InvalidConfig("no feasible candidate could be generated".into()))?;
    let best_predicted = predicted(&best.policy)?;
    Ok(ConstrainedSearch { best: best.policy, best_predicted, history: out.history })
}
