#![allow(dead_code)]

use rand::Rng as _;
use seerpol::rng::{rng_from, Rng};
use seerpol::{Fixture, Policy, Predictor64, SearchSpace, SyntheticOracle};

pub fn fixture(name: &str) -> Fixture {
    Fixture::load(format!("{}/fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

pub fn space(name: &str) -> SearchSpace<f64> {
    fixture(name).space().unwrap()
}

pub fn oracle(name: &str) -> SyntheticOracle<f64> {
    fixture(name).oracle().unwrap().unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Worst relative error between two vectors, normalized by the larger norm.
pub fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b)).max(1e-12);
    diff / scale
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central differences of `f` along every coordinate of `x`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Uniform continuous policy inside the box, frozen entries pinned, shrunk
/// by `margin` from each bound.
pub fn random_continuous(space: &SearchSpace<f64>, r: &mut Rng, margin: f64) -> Policy<f64> {
    let v = (0..space.dim())
        .map(|d| {
            let (lo, hi) = space.bounds(d);
            match space.frozen(d) {
                Some(f) => f,
                None if hi > lo => {
                    let m = margin * (hi - lo);
                    r.gen_range(lo + m..=hi - m)
                }
                None => lo,
            }
        })
        .collect();
    Policy::new(v)
}

/// Continuous policies strictly below `budget`, drawn by rejection.
pub fn feasible_points(space: &SearchSpace<f64>, budget: f64, n: usize, seed: u64) -> Vec<Policy<f64>> {
    let mut r = rng_from(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = random_continuous(space, &mut r, 0.02);
        if space.bops(&p).unwrap() < budget {
            out.push(p);
        }
    }
    out
}

/// `f(x) = c + w.x` on the unit box, built from rectifiers that never switch off.
pub fn linear_net(w: &[f64], c: f64) -> Predictor64 {
    let n = w.len();
    let mut w1 = vec![0.0; n * n];
    for j in 0..n {
        w1[j * n + j] = 1.0;
    }
    let b1 = vec![1.0; n];
    let shift = 2.0 * w.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
    let out_bias = c - shift - w.iter().sum::<f64>();
    Predictor64::from_parts([n, n, 1, 1], [w1, w.to_vec(), vec![1.0]], [b1, vec![shift], vec![out_bias]]).unwrap()
}
