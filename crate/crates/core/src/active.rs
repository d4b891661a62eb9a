//! Active predictor learning: evolutionary search for the policies the
//! predictor is least sure about, round-based labeling and retraining, and
//! the random-sampling learner it is compared with.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SampleRecord;
use crate::error::{Error, Result};
use crate::oracle::AccuracyOracle;
use crate::predictor::{train, Predictor, TrainConfig};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;
use crate::searchspace::{sample_perturbations, GridKey, Policy, SearchSpace};

const STREAM_HOLDOUT: u64 = 0x10;
const STREAM_ROUND: u64 = 0x11;
const STREAM_FITNESS: u64 = 0x12;
const STREAM_EVOLVE: u64 = 0x13;
const STREAM_PREDICTOR: u64 = 0x14;
const SAMPLE_ATTEMPTS_PER_POLICY: usize = 200;
const CHILD_ATTEMPTS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationMode {
    /// A firing layer re-rolls its whole `(p, w, a)` triple.
    Layer,
    /// Each element fires independently.
    Element,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// Over-budget children are never admitted.
    Discard,
    /// Over-budget children are admitted with a fitness penalty.
    Penalty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvoConfig<T> {
    pub population: usize,
    pub top_k: usize,
    pub n_mutate: usize,
    pub mutation_rate: f64,
    pub n_crossover: usize,
    pub evo_iters: usize,
    pub rounds: usize,
    pub samples_per_round: usize,
    /// Perturbation complexity change in G for the uncertainty score.
    pub b0: T,
    /// `None` means `ceil(L / 2)`.
    pub perturbs_per_candidate: Option<usize>,
    pub mutation: MutationMode,
    pub constraint: ConstraintMode,
    /// Fitness penalty per unit of relative budget overshoot (penalty mode).
    pub penalty: T,
    /// Retrain from the current parameters instead of a fresh init.
    pub warm_start: bool,
    /// Size of the randomly drawn held-out set.
    pub holdout: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for EvoConfig<T> {
    fn default() -> Self {
        Self {
            population: 100,
            top_k: 25,
            n_mutate: 50,
            mutation_rate: 0.1,
            n_crossover: 50,
            evo_iters: 500,
            rounds: 16,
            samples_per_round: 50,
            b0: T::of(0.005),
            perturbs_per_candidate: None,
            mutation: MutationMode::Layer,
            constraint: ConstraintMode::Discard,
            penalty: T::of(10.0),
            warm_start: true,
            holdout: 50,
            seed: 0,
        }
    }
}

impl<T: Scalar> EvoConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.population == 0 || self.top_k == 0 || self.rounds == 0 || self.samples_per_round == 0 {
            return bad("population, top_k, rounds and samples_per_round must be positive");
        }
        if self.top_k > self.population {
            return bad("top_k must not exceed population");
        }
        if self.n_mutate + self.n_crossover == 0 {
            return bad("n_mutate + n_crossover must be positive");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation_rate must lie in [0, 1]");
        }
        if !(self.b0 > T::zero()) {
            return bad("b0 must be positive");
        }
        if self.perturbs_per_candidate == Some(0) {
            return bad("perturbs_per_candidate must be positive");
        }
        Ok(())
    }

    pub fn perturbs_for(&self, space: &SearchSpace<T>) -> usize {
        self.perturbs_per_candidate.unwrap_or_else(|| space.half_layers())
    }
}

/// Prediction sensitivity of a grid policy:
/// `sum_ŝ |f(s) - f(ŝ)|` over `n_perturb` capacity-consistent perturbations.
pub fn fitness<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    policy: &Policy<T>,
    b0: T,
    n_perturb: usize,
    seed: u64,
) -> Result<T> {
    space.grid_key(policy)?;
    let candidates = space.perturbation_candidates(policy, b0)?;
    if candidates.is_empty() {
        return Err(Error::NoPerturbations);
    }
    let base = pred.forward(&space.encode(policy)?)?;
    let picked = sample_perturbations(candidates, n_perturb, seed);
    Ok(picked
        .iter()
        .fold(T::zero(), |acc, q| acc + (base - pred.forward_unchecked(&space.encode_unchecked(q.values()))).abs()))
}

/// Perturbation seed of a candidate: a pure function of the search seed and
/// the policy, so scores do not depend on evaluation order.
pub fn candidate_seed(seed: u64, key: &GridKey) -> u64 {
    rng::derive(rng::derive(seed, STREAM_FITNESS), key.hash64())
}

/// The fitness [`evolve_uncertain`] assigns to `policy`; zero when nothing
/// is perturbable.
pub fn uncertainty<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    policy: &Policy<T>,
    evo: &EvoConfig<T>,
) -> Result<T> {
    let key = space.grid_key(policy)?;
    match fitness(pred, space, policy, evo.b0, evo.perturbs_for(space), candidate_seed(evo.seed, &key)) {
        Err(Error::NoPerturbations) => Ok(T::zero()),
        other => other,
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Scored<T> {
    pub policy: Policy<T>,
    pub score: T,
    order: usize,
}

fn rank<T: Scalar>(a: &Scored<T>, b: &Scored<T>) -> Ordering {
    b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then(a.order.cmp(&b.order))
}

pub(crate) struct EvolutionOutcome<T> {
    /// Best distinct candidates, best first.
    pub leaders: Vec<Scored<T>>,
    /// Best score after each generation.
    pub history: Vec<T>,
}

/// Distinct uniform grid policies outside `exclude` that pass `admissible`.
pub(crate) fn random_distinct<T: Scalar>(
    space: &SearchSpace<T>,
    count: usize,
    exclude: &HashSet<GridKey>,
    admissible: &(dyn Fn(&Policy<T>) -> bool + Sync),
    r: &mut Rng,
) -> Vec<Policy<T>> {
    let small = space.grid_size() <= (4 * count.max(64)) as u128;
    if small {
        let mut all: Vec<Policy<T>> = space
            .enumerate_grid()
            .into_iter()
            .filter(|p| !exclude.contains(&space.grid_key(p).expect("grid point")) && admissible(p))
            .collect();
        all.shuffle(r);
        all.truncate(count);
        return all;
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count * SAMPLE_ATTEMPTS_PER_POLICY {
        if out.len() == count {
            break;
        }
        let p = space.random_grid_policy(r);
        let key = space.grid_key(&p).expect("grid point");
        if exclude.contains(&key) || seen.contains(&key) || !admissible(&p) {
            continue;
        }
        seen.insert(key);
        out.push(p);
    }
    out
}

fn mutate<T: Scalar>(
    space: &SearchSpace<T>,
    parent: &Policy<T>,
    cfg_rate: f64,
    mode: MutationMode,
    r: &mut Rng,
) -> Policy<T> {
    let mut child = parent.clone();
    let reroll = |d: usize, child: &mut Policy<T>, r: &mut Rng| {
        if !space.is_frozen(d) {
            let g = space.grid(d);
            child.values_mut()[d] = g[r.gen_range(0..g.len())];
        }
    };
    for layer in 0..space.num_layers() {
        match mode {
            MutationMode::Layer => {
                if r.gen_bool(cfg_rate) {
                    for d in 3 * layer..3 * layer + 3 {
                        reroll(d, &mut child, r);
                    }
                }
            }
            MutationMode::Element => {
                for d in 3 * layer..3 * layer + 3 {
                    if r.gen_bool(cfg_rate) {
                        reroll(d, &mut child, r);
                    }
                }
            }
        }
    }
    child
}

fn crossover<T: Scalar>(a: &Policy<T>, b: &Policy<T>, r: &mut Rng) -> Policy<T> {
    let mut child = a.clone();
    for layer in 0..a.num_layers() {
        if r.gen_bool(0.5) {
            child.values_mut()[3 * layer..3 * layer + 3].copy_from_slice(&b.values()[3 * layer..3 * layer + 3]);
        }
    }
    child
}

/// Elitist evolutionary maximization over grid policies.
///
/// Each generation breeds `n_mutate` mutants and `n_crossover` per-layer
/// recombinations from the current top-`k`, admitting only unseen,
/// non-excluded, admissible children. Ties rank by first appearance.
pub(crate) fn evolve<T: Scalar>(
    space: &SearchSpace<T>,
    cfg: &EvoConfig<T>,
    exclude: &HashSet<GridKey>,
    admissible: &(dyn Fn(&Policy<T>) -> bool + Sync),
    score: &(dyn Fn(&Policy<T>) -> Result<T> + Sync),
    keep: usize,
    seed: u64,
) -> Result<EvolutionOutcome<T>> {
    let mut r = rng::rng_from(rng::derive(seed, STREAM_EVOLVE));
    let mut seen: HashSet<GridKey> = HashSet::new();
    let keep = keep.max(cfg.top_k);
    let mut order = 0usize;

    let mut admit = |batch: Vec<Policy<T>>, leaders: &mut Vec<Scored<T>>| -> Result<()> {
        let scores: Vec<T> = batch.par_iter().map(score).collect::<Result<_>>()?;
        for (policy, score) in batch.into_iter().zip(scores) {
            leaders.push(Scored { policy, score, order });
            order += 1;
        }
        leaders.sort_by(rank);
        leaders.truncate(keep);
        Ok(())
    };

    let initial = random_distinct(space, cfg.population, exclude, admissible, &mut r);
    for p in &initial {
        seen.insert(space.grid_key(p)?);
    }
    let mut leaders = Vec::new();
    admit(initial, &mut leaders)?;
    let mut history = Vec::with_capacity(cfg.evo_iters);
    if leaders.is_empty() {
        return Ok(EvolutionOutcome { leaders, history });
    }

    let mut idle_generations = 0;
    for _ in 0..cfg.evo_iters {
        let parents: Vec<Policy<T>> = leaders.iter().take(cfg.top_k).map(|s| s.policy.clone()).collect();
        let mut children = Vec::with_capacity(cfg.n_mutate + cfg.n_crossover);
        let mut breed =
            |make: &mut dyn FnMut(&mut Rng) -> Policy<T>, count: usize, r: &mut Rng, children: &mut Vec<Policy<T>>| {
                let mut made = 0;
                for _ in 0..count * CHILD_ATTEMPTS {
                    if made == count {
                        break;
                    }
                    let child = make(r);
                    let key = space.grid_key(&child).expect("children stay on the grid");
                    if exclude.contains(&key) || seen.contains(&key) || !admissible(&child) {
                        continue;
                    }
                    seen.insert(key);
                    children.push(child);
                    made += 1;
                }
            };
        breed(
            &mut |r: &mut Rng| {
                let parent = &parents[r.gen_range(0..parents.len())];
                mutate(space, parent, cfg.mutation_rate, cfg.mutation, r)
            },
            cfg.n_mutate,
            &mut r,
            &mut children,
        );
        breed(
            &mut |r: &mut Rng| {
                let a = &parents[r.gen_range(0..parents.len())];
                let b = &parents[r.gen_range(0..parents.len())];
                crossover(a, b, r)
            },
            cfg.n_crossover,
            &mut r,
            &mut children,
        );
        if children.is_empty() {
            idle_generations += 1;
        } else {
            idle_generations = 0;
            admit(children, &mut leaders)?;
        }
        history.push(leaders[0].score);
        if idle_generations >= 3 {
            break;
        }
    }
    Ok(EvolutionOutcome { leaders, history })
}

/// The `samples_per_round` most uncertain distinct grid policies found by
/// evolutionary search, skipping `exclude`.
///
/// Returns every admissible policy when the space holds fewer than requested.
pub fn evolve_uncertain<T: Scalar>(
    pred: &Predictor<T>,
    space: &SearchSpace<T>,
    evo: &EvoConfig<T>,
    exclude: &HashSet<GridKey>,
) -> Result<Vec<Policy<T>>> {
    evo.validate()?;
    let score = |p: &Policy<T>| uncertainty(pred, space, p, evo);
    let out = evolve(space, evo, exclude, &|_| true, &score, evo.samples_per_round, evo.seed)?;
    if out.leaders.is_empty() {
        return Err(Error::SpaceExhausted { requested: evo.samples_per_round, available: 0 });
    }
    Ok(out.leaders.into_iter().take(evo.samples_per_round).map(|s| s.policy).collect())
}

/// Output of a predictor-learning run.
#[derive(Clone, Debug)]
pub struct LearnRun<T> {
    pub predictor: Predictor<T>,
    /// Every labeled training record, in labeling order.
    pub dataset: Vec<SampleRecord<T>>,
    /// Held-out MSE after each round.
    pub mse_curve: Vec<T>,
    pub holdout: Vec<SampleRecord<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sampler {
    Active,
    Random,
}

fn label<T: Scalar, O: AccuracyOracle<T> + ?Sized>(
    space: &SearchSpace<T>,
    oracle: &O,
    policies: Vec<Policy<T>>,
) -> Result<Vec<SampleRecord<T>>> {
    policies
        .into_par_iter()
        .map(|p| match oracle.accuracy(space, &p) {
            Ok(a) => Ok(SampleRecord::new(p, a)),
            Err(e) => Err(Error::Oracle { policy: p.to_f64(), source: Box::new(e) }),
        })
        .collect()
}

fn learn<T: Scalar, O: AccuracyOracle<T> + ?Sized>(
    space: &SearchSpace<T>,
    oracle: &O,
    evo: &EvoConfig<T>,
    tcfg: &TrainConfig<T>,
    rounds: usize,
    per_round: &dyn Fn(usize) -> usize,
    sampler: Sampler,
) -> Result<LearnRun<T>> {
    evo.validate()?;
    tcfg.validate()?;
    let mut exclude = HashSet::new();
    let mut r = rng::rng_from(rng::derive(evo.seed, STREAM_HOLDOUT));
    let holdout_policies = random_distinct(space, evo.holdout, &exclude, &|_| true, &mut r);
    let holdout = label(space, oracle, holdout_policies)?;
    for h in &holdout {
        exclude.insert(space.grid_key(&h.policy)?);
    }

    let fresh = |data: &[SampleRecord<T>]| {
        let mean = data.iter().map(|r| r.accuracy).sum::<T>() / T::of_usize(data.len());
        Predictor::centered(space.dim(), tcfg.hidden, rng::derive(tcfg.seed, STREAM_PREDICTOR), mean)
    };
    let mut predictor: Option<Predictor<T>> = None;
    let mut dataset: Vec<SampleRecord<T>> = Vec::new();
    let mut mse_curve = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let want = per_round(round);
        let round_seed = rng::derive(rng::derive(evo.seed, STREAM_ROUND), round as u64);
        let batch = if round == 0 || sampler == Sampler::Random {
            random_distinct(space, want, &exclude, &|_| true, &mut rng::rng_from(round_seed))
        } else {
            let cfg = EvoConfig { samples_per_round: want, seed: round_seed, ..evo.clone() };
            evolve_uncertain(predictor.as_ref().expect("trained in round 0"), space, &cfg, &exclude)?
        };
        if batch.is_empty() {
            return Err(Error::SpaceExhausted { requested: want, available: 0 });
        }
        let labeled = label(space, oracle, batch)?;
        for rec in &labeled {
            exclude.insert(space.grid_key(&rec.policy)?);
        }
        dataset.extend(labeled);
        let start = match predictor {
            Some(p) if evo.warm_start => p,
            _ => fresh(&dataset),
        };
        let round_cfg = TrainConfig { seed: rng::derive(tcfg.seed, round as u64), ..tcfg.clone() };
        let trained = train(&start, &dataset, space, &round_cfg)?.0;
        mse_curve.push(if holdout.is_empty() { T::nan() } else { trained.mse(space, &holdout)? });
        predictor = Some(trained);
    }
    let predictor = predictor.expect("at least one round");
    Ok(LearnRun { predictor, dataset, mse_curve, holdout })
}

/// Round-based active learning: a random first round, then each round labels
/// the most uncertain policies and retrains on everything labeled so far.
pub fn active_learn<T: Scalar, O: AccuracyOracle<T> + ?Sized>(
    space: &SearchSpace<T>,
    oracle: &O,
    evo: &EvoConfig<T>,
    tcfg: &TrainConfig<T>,
) -> Result<LearnRun<T>> {
    let per = evo.samples_per_round;
    learn(space, oracle, evo, tcfg, evo.rounds, &|_| per, Sampler::Active)
}

/// The same round structure as [`active_learn`] with uniform random sampling
/// in every round; `k` policies in total.
pub fn random_learn<T: Scalar, O: AccuracyOracle<T> + ?Sized>(
    space: &SearchSpace<T>,
    oracle: &O,
    k: usize,
    evo: &EvoConfig<T>,
    tcfg: &TrainConfig<T>,
) -> Result<LearnRun<T>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let per = evo.samples_per_round;
    let rounds = k.div_ceil(per);
    learn(space, oracle, evo, tcfg, rounds, &|round| per.min(k - round * per), Sampler::Random)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searchspace::LayerSpec;

    fn space() -> SearchSpace<f64> {
        let bits = vec![2.0, 4.0, 8.0];
        let l = LayerSpec::new(1.0, vec![0.0, 0.5], bits.clone(), bits);
        SearchSpace::new("s", vec![l.clone(), l.clone(), l]).unwrap()
    }

    #[test]
    fn constant_predictor_has_zero_fitness() {
        let s = space();
        let p = Predictor::constant(9, [3, 3], 0.6);
        let q = s.min_capacity_policy();
        assert_eq!(fitness(&p, &s, &q, 0.01, 2, 0).unwrap(), 0.0);
    }

    #[test]
    fn fitness_is_deterministic_and_requires_grid() {
        let s = space();
        let p = Predictor::new(9, [5, 5], 2);
        let q = Policy::new(vec![0.5, 4.0, 2.0, 0.0, 8.0, 4.0, 0.5, 2.0, 8.0]);
        assert_eq!(fitness(&p, &s, &q, 0.01, 2, 7).unwrap(), fitness(&p, &s, &q, 0.01, 2, 7).unwrap());
        let off = Policy::new(vec![0.3, 4.0, 2.0, 0.0, 8.0, 4.0, 0.5, 2.0, 8.0]);
        assert!(fitness(&p, &s, &off, 0.01, 2, 7).is_err());
    }

    #[test]
    fn mutation_respects_frozen_entries() {
        let bits = vec![2.0, 4.0, 8.0];
        let l = LayerSpec::new(1.0, vec![0.0, 0.5], bits.clone(), bits).with_frozen(crate::Component::WeightBits, 8.0);
        let s = SearchSpace::new("f", vec![l.clone(), l]).unwrap();
        let mut r = rng::rng_from(1);
        let p = s.random_grid_policy(&mut r);
        for _ in 0..50 {
            let c = mutate(&s, &p, 1.0, MutationMode::Layer, &mut r);
            assert_eq!(c.values()[1], 8.0);
            assert_eq!(c.values()[4], 8.0);
            assert!(s.is_on_grid(&c));
        }
    }

    #[test]
    fn crossover_takes_whole_layers() {
        let a = Policy::new(vec![0.0, 2.0, 2.0, 0.0, 2.0, 2.0]);
        let b = Policy::new(vec![0.5, 8.0, 8.0, 0.5, 8.0, 8.0]);
        let mut r = rng::rng_from(3);
        for _ in 0..20 {
            let c = crossover(&a, &b, &mut r);
            for chunk in c.values().chunks(3) {
                assert!(chunk == &a.values()[..3] || chunk == &b.values()[..3]);
            }
        }
    }

    #[test]
    fn random_distinct_honours_exclusion() {
        let s = space();
        let all = s.enumerate_grid();
        let exclude: HashSet<GridKey> = all[..200].iter().map(|p| s.grid_key(p).unwrap()).collect();
        let got = random_distinct(&s, all.len(), &exclude, &|_| true, &mut rng::rng_from(0));
        assert_eq!(got.len(), all.len() - 200);
        let keys: HashSet<GridKey> = got.iter().map(|p| s.grid_key(p).unwrap()).collect();
        assert_eq!(keys.len(), got.len());
        assert!(keys.is_disjoint(&exclude));
    }

    #[test]
    fn invalid_evo_configs() {
        let mut c = EvoConfig::<f64>::default();
        c.top_k = 200;
        assert!(c.validate().is_err());
        let c = EvoConfig::<f64> { n_mutate: 0, n_crossover: 0, ..EvoConfig::default() };
        assert!(c.validate().is_err());
        let c = EvoConfig::<f64> { mutation_rate: 1.5, ..EvoConfig::default() };
        assert!(c.validate().is_err());
    }
}
