//! Independent oracles shared by the integration tests. Nothing here calls the
//! estimators under test.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if got == want {
        0.0
    } else {
        (got - want).abs() / want.abs()
    }
}

/// `(1/N) Σ_{i=1}^N Ŷ_i + (1/n) Σ_{i=1}^n (Y_i - Ŷ_i)`, summed left to right.
pub fn literal_ppi(pool_predictions: &[f64], labeled: &[(f64, f64)]) -> f64 {
    let big_n = pool_predictions.len() as f64;
    let n = labeled.len() as f64;
    let mut prediction_total = 0.0;
    for &p in pool_predictions {
        prediction_total += p;
    }
    let mut rectifier_total = 0.0;
    for &(y, p) in labeled {
        rectifier_total += y - p;
    }
    prediction_total / big_n + rectifier_total / n
}

/// `(1/n) Σ Y_i + β (1/N Σ Ŷ_i - 1/n Σ Ŷ_i)`.
pub fn literal_greg(pool_predictions: &[f64], labeled: &[(f64, f64)], beta: f64) -> f64 {
    let big_n = pool_predictions.len() as f64;
    let n = labeled.len() as f64;
    let mut pool_total = 0.0;
    for &p in pool_predictions {
        pool_total += p;
    }
    let (mut y_total, mut p_total) = (0.0, 0.0);
    for &(y, p) in labeled {
        y_total += y;
        p_total += p;
    }
    y_total / n + beta * (pool_total / big_n - p_total / n)
}

/// Least-squares slope of `y` on `x` with an intercept.
pub fn ols_slope(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let xbar = pairs.iter().map(|&(_, x)| x).sum::<f64>() / n;
    let ybar = pairs.iter().map(|&(y, _)| y).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|&(y, x)| (x - xbar) * (y - ybar)).sum();
    let sxx: f64 = pairs.iter().map(|&(_, x)| (x - xbar) * (x - xbar)).sum();
    sxy / sxx
}

/// Finite-population variance with divisor `N - 1`.
pub fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
}

/// Variance of a list of estimates with divisor equal to its length.
pub fn enumeration_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

/// Every `k`-subset of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// A random population: outcomes, predictions.
pub struct Population {
    pub y: Vec<f64>,
    pub yhat: Vec<f64>,
}

/// Outcomes around `center`, predictions with a random slope, offset and noise.
pub fn random_population(rng: &mut impl Rng, size: usize, center: f64) -> Population {
    let slope: f64 = rng.random_range(-0.5..1.5);
    let offset: f64 = rng.random_range(-2.0..2.0);
    let noise: f64 = rng.random_range(0.05..3.0);
    let spread: f64 = rng.random_range(0.5..5.0);
    let mut y = Vec::with_capacity(size);
    let mut yhat = Vec::with_capacity(size);
    for _ in 0..size {
        let z: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let v = center + spread * z;
        y.push(v);
        yhat.push(offset + slope * v + noise * e);
    }
    Population { y, yhat }
}

pub fn random_subset(rng: &mut impl Rng, size: usize, n: usize) -> Vec<usize> {
    let mut idx = sample(rng, size, n).into_vec();
    idx.sort_unstable();
    idx
}

/// `Σ_h W_h² (1 - n_h/N_h) s_h² / n_h` written out directly.
pub fn stratified_objective(pool_sizes: &[usize], dispersions: &[f64], allocation: &[usize]) -> f64 {
    let total = pool_sizes.iter().sum::<usize>() as f64;
    let mut v = 0.0;
    for h in 0..pool_sizes.len() {
        let w = pool_sizes[h] as f64 / total;
        let fpc = 1.0 - allocation[h] as f64 / pool_sizes[h] as f64;
        v += w * w * fpc * dispersions[h] * dispersions[h] / allocation[h] as f64;
    }
    v
}

/// Every feasible integer allocation (`min ≤ n_h ≤ N_h`, `Σ n_h = budget`)
/// with the optimal objective value, by exhaustive search.
pub fn exhaustive_allocations(
    pool_sizes: &[usize],
    dispersions: &[f64],
    budget: usize,
    min: usize,
) -> (f64, Vec<Vec<usize>>) {
    fn go(h: usize, left: usize, sizes: &[usize], min: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if h + 1 == sizes.len() {
            if left >= min && left <= sizes[h] {
                cur.push(left);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        for n in min..=sizes[h].min(left) {
            cur.push(n);
            go(h + 1, left - n, sizes, min, cur, out);
            cur.pop();
        }
    }
    let mut all = Vec::new();
    go(0, budget, pool_sizes, min, &mut Vec::new(), &mut all);
    let values: Vec<f64> = all.iter().map(|a| stratified_objective(pool_sizes, dispersions, a)).collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let optimal = all
        .into_iter()
        .zip(values)
        .filter(|(_, v)| *v <= best * (1.0 + 1e-12) + 1e-300)
        .map(|(a, _)| a)
        .collect();
    (best, optimal)
}

/// Runs the `rectify` binary and returns `(exit code, stdout, stderr)`.
pub fn run_cli(args: &[&str], env: &[(&str, &str)]) -> (i32, String, String) {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_rectify"));
    cmd.args(args).env_remove("RECTIFY_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).expect("utf-8 stdout"),
        String::from_utf8(out.stderr).expect("utf-8 stderr"),
    )
}

/// CLI invocations whose output is pinned in `tests/golden`.
pub fn golden_cases() -> Vec<(&'static str, Vec<String>)> {
    let f = |name: &str| fixture(name).to_string_lossy().into_owned();
    let s = |v: &str| v.to_string();
    vec![
        ("estimate_d1.json", vec![s("estimate"), f("d1.csv"), s("--method"), s("ppi"), s("--variance"), s("design")]),
        ("estimate_d1_ppipp.json", vec![s("estimate"), f("d1.csv"), s("--method"), s("ppipp")]),
        ("ate_two_arm.json", vec![s("ate"), f("two_arm.csv"), s("--method"), s("armwise")]),
        ("ate_pooled.json", vec![s("ate"), f("negative_control.csv"), s("--method"), s("pooled")]),
        ("stratified.json", vec![s("stratified"), f("strata.csv")]),
        ("allocate.json", vec![s("allocate"), f("strata.csv"), s("--budget"), s("24")]),
        (
            "diagnose.json",
            vec![s("diagnose"), f("strata.csv"), s("--negative-control"), f("negative_control.csv")],
        ),
        ("simulate_two_arm.json", vec![s("simulate"), s("--config"), f("sim_two_arm.toml")]),
        ("simulate_lambda.json", vec![s("simulate"), s("--config"), f("sim_lambda.toml")]),
    ]
}
