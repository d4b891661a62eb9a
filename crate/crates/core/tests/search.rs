mod common;

use std::collections::HashSet;

use common::*;
use seerpol::active::uncertainty;
use seerpol::experiment::median;
use seerpol::{
    active_learn, evo_search_constrained, evolve_uncertain, fitness, random_learn, random_select, Component,
    EvoConfig64, LayerSpec, Policy, Predictor64, SearchSpace, TrainConfig64,
};

/// A deliberately small evolution budget so the search does not simply
/// enumerate the toy grid.
fn lean_evo(seed: u64) -> EvoConfig64 {
    EvoConfig64 {
        population: 16,
        top_k: 4,
        n_mutate: 8,
        n_crossover: 8,
        evo_iters: 10,
        samples_per_round: 8,
        b0: 0.01,
        seed,
        ..Default::default()
    }
}

#[test]
fn uncertainty_search_matches_enumeration() {
    let s = space("toy4");
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let pred = Predictor64::new(s.dim(), [32, 32], 100 + seed);
        let evo = lean_evo(seed);
        let best = evolve_uncertain(&pred, &s, &evo, &HashSet::new()).unwrap();
        let found = uncertainty(&pred, &s, &best[0], &evo).unwrap();
        let exact = s
            .enumerate_grid()
            .iter()
            .map(|p| uncertainty(&pred, &s, p, &evo).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        ratios.push(found / exact);
    }
    assert!(median(&ratios) >= 0.95, "{ratios:?}");
}

#[test]
fn constrained_search_matches_enumeration() {
    let s = space("toy4");
    let max_c = s.bops(&s.max_capacity_policy()).unwrap();
    for budget in [2.0 * max_c, 0.3 * max_c] {
        let mut ratios = Vec::new();
        for seed in 0..5 {
            let pred = linear_net(&(0..s.dim()).map(|d| ((d * 7 % 5) as f64 - 2.0) * 0.1).collect::<Vec<_>>(), 0.8);
            let out = evo_search_constrained(&pred, &s, budget, &lean_evo(seed)).unwrap();
            assert!(s.bops(&out.best).unwrap() <= budget);
            let exact = s
                .enumerate_grid()
                .iter()
                .filter(|p| s.bops(p).unwrap() <= budget)
                .map(|p| pred.forward(&s.encode(p).unwrap()).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            ratios.push(out.best_predicted / exact);
            assert!(out.history.windows(2).all(|w| w[1] >= w[0]));
        }
        assert!(median(&ratios) >= 0.95, "{ratios:?}");
    }
}

#[test]
fn planted_uncertain_region_is_found() {
    let s = space("toy4");
    // steep only when layers 2 and 3 are both heavily pruned
    let n = s.dim();
    let mut w1 = vec![0.0; n];
    for d in 0..n {
        w1[d] = if d == 3 || d == 6 { 5.0 } else { 0.2 };
    }
    let offset = -4.5 - 0.2 * (n - 2) as f64;
    let pred = Predictor64::from_parts([n, 1, 1, 1], [w1, vec![1.0], vec![1.0]], [vec![offset], vec![0.0], vec![0.5]])
        .unwrap();
    let evo = EvoConfig64 { samples_per_round: 20, b0: 0.005, ..lean_evo(3) };
    let all = s.enumerate_grid();
    let hot: Vec<_> = all.iter().filter(|p| uncertainty(&pred, &s, p, &evo).unwrap() > 0.0).collect();
    let region: HashSet<_> = hot.iter().map(|p| s.grid_key(p).unwrap()).collect();
    assert!(region.len() >= 20 && region.len() * 5 < all.len(), "{} of {}", region.len(), all.len());
    for p in &hot {
        assert!(p.values()[3] + p.values()[6] >= 0.5, "{p}");
    }
    let picked = evolve_uncertain(&pred, &s, &evo, &HashSet::new()).unwrap();
    assert_eq!(picked.len(), 20);
    let hits = picked.iter().filter(|p| region.contains(&s.grid_key(p).unwrap())).count();
    assert!(hits * 5 >= picked.len() * 4, "{hits}/20");
}

#[test]
fn tiny_space_is_exhausted() {
    let l = LayerSpec::new(1.0, vec![0.0, 0.5], vec![4.0, 8.0], vec![8.0]);
    let s = SearchSpace::new("tiny", vec![l]).unwrap();
    let pred = Predictor64::new(3, [4, 4], 1);
    let mut exclude = HashSet::new();
    exclude.insert(s.grid_key(&s.min_capacity_policy()).unwrap());
    let evo = EvoConfig64 { samples_per_round: 10, ..lean_evo(0) };
    let got = evolve_uncertain(&pred, &s, &evo, &exclude).unwrap();
    assert_eq!(got.len(), 3);
    let keys: HashSet<_> = got.iter().map(|p| s.grid_key(p).unwrap()).collect();
    assert_eq!(keys.len(), 3);
    assert!(keys.is_disjoint(&exclude));
}

#[test]
fn constant_predictor_still_yields_distinct_policies() {
    let s = space("toy4");
    let pred = Predictor64::constant(s.dim(), [4, 4], 0.7);
    let got = evolve_uncertain(&pred, &s, &lean_evo(1), &HashSet::new()).unwrap();
    let keys: HashSet<_> = got.iter().map(|p| s.grid_key(p).unwrap()).collect();
    assert_eq!(keys.len(), got.len());
    assert_eq!(got.len(), 8);
}

#[test]
fn fitness_of_a_linear_predictor() {
    let l = LayerSpec::new(1.0, vec![0.0, 0.25, 0.5, 0.75], vec![8.0], vec![8.0]);
    let s = SearchSpace::new("one", vec![l]).unwrap();
    let c = 0.4;
    let pred = linear_net(&[c, 0.0, 0.0], 0.5);
    let p = Policy::new(vec![0.25, 8.0, 8.0]);
    let b0 = 0.01;
    // dC/dp = -w a / 1024 * base
    let alpha = b0 / (64.0 / 1024.0);
    let got = fitness(&pred, &s, &p, b0, 2, 9).unwrap();
    assert!(rel_err(got, 2.0 * c * alpha) < 1e-9, "{got}");
    assert_eq!(got, fitness(&pred, &s, &p, b0, 2, 9).unwrap());
}

#[test]
fn one_round_of_active_learning_is_random_learning() {
    let s = space("toy4");
    let o = oracle("toy4");
    let evo = EvoConfig64 { rounds: 1, samples_per_round: 30, holdout: 20, seed: 4, ..Default::default() };
    let tcfg = TrainConfig64 { epochs: 20, ..Default::default() };
    let a = active_learn(&s, &o, &evo, &tcfg).unwrap();
    let r = random_learn(&s, &o, 30, &evo, &tcfg).unwrap();
    assert_eq!(a.dataset, r.dataset);
    assert_eq!(a.predictor, r.predictor);
    assert_eq!(a.mse_curve, r.mse_curve);
}

#[test]
fn active_learning_on_toy4_fits_and_never_relabels() {
    let s = space("toy4");
    let o = oracle("toy4");
    let evo = EvoConfig64 { rounds: 4, samples_per_round: 50, evo_iters: 50, seed: 1, ..Default::default() };
    let run = active_learn(&s, &o, &evo, &TrainConfig64::default()).unwrap();
    assert_eq!(run.dataset.len(), 200);
    assert_eq!(run.mse_curve.len(), 4);
    assert!(*run.mse_curve.last().unwrap() < 5e-4, "{:?}", run.mse_curve);
    let mut keys = HashSet::new();
    for r in run.dataset.iter().chain(&run.holdout) {
        assert!(s.is_on_grid(&r.policy));
        for d in 0..s.dim() {
            if let Some(v) = s.frozen(d) {
                assert_eq!(r.policy.values()[d], v);
            }
        }
        assert!(keys.insert(s.grid_key(&r.policy).unwrap()), "relabelled {}", r.policy);
    }
}

#[test]
fn random_learning_curve_has_one_entry_per_round() {
    let s = space("toy4");
    let o = oracle("toy4");
    let evo = EvoConfig64 { samples_per_round: 25, holdout: 10, ..Default::default() };
    let tcfg = TrainConfig64 { epochs: 5, ..Default::default() };
    let run = random_learn(&s, &o, 60, &evo, &tcfg).unwrap();
    assert_eq!(run.dataset.len(), 60);
    assert_eq!(run.mse_curve.len(), 3);
}

#[test]
fn random_selection_keeps_the_best_feasible_sample() {
    let s = space("toy4");
    let o = oracle("toy4");
    let budget = 0.4 * s.bops(&s.max_capacity_policy()).unwrap();
    let eval = |p: &Policy<f64>| o.synth_accuracy(&s, p);
    let one = random_select(&eval, &s, budget, 1, 2).unwrap();
    assert_eq!(one.evaluations.len(), 1);
    assert_eq!(one.best, one.evaluations[0].0);
    let five = random_select(&eval, &s, budget, 5, 2).unwrap();
    let max = five.evaluations.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(five.best_score, max);
    for (p, _) in &five.evaluations {
        assert!(s.bops(p).unwrap() <= budget);
    }
    assert!(random_select(&eval, &s, 0.5 * s.min_complexity(), 1, 0).is_err());
}

#[test]
fn single_point_space_is_returned() {
    let l = LayerSpec::new(1.0, vec![0.5], vec![4.0], vec![4.0]).with_frozen(Component::Prune, 0.5);
    let s = SearchSpace::new("point", vec![l]).unwrap();
    let pred = Predictor64::new(3, [4, 4], 0);
    let out = evo_search_constrained(&pred, &s, 1.0, &lean_evo(0)).unwrap();
    assert_eq!(out.best, s.min_capacity_policy());
}
