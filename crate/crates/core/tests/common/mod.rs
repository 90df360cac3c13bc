#![allow(dead_code)]

use causal_testbed::estimators::{EstimatorInput, EstimatorOptions};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

pub fn normals(r: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| normal(r))
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn bernoulli(r: &mut ChaCha8Rng, p: f64) -> bool {
    r.random::<f64>() < p
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Monte Carlo standard error of the mean.
pub fn mc_se(v: &[f64]) -> f64 {
    sd(v) / (v.len() as f64).sqrt()
}

pub fn quick(bootstrap: usize, seed: u64) -> EstimatorOptions {
    EstimatorOptions {
        bootstrap,
        seed,
        ..EstimatorOptions::default()
    }
}

/// A simulated dataset with its true individual effects.
pub struct Sim {
    pub input: EstimatorInput,
    pub tau: Vec<f64>,
    pub e: Vec<f64>,
}

impl Sim {
    pub fn satt(&self) -> f64 {
        let t: Vec<f64> = (0..self.tau.len())
            .filter(|&i| self.input.z[i])
            .map(|i| self.tau[i])
            .collect();
        mean(&t)
    }
}

/// `n` rows, `p` standard normal covariates, propensity `sigmoid(logit(x))`,
/// outcome `mu0(x) + z tau(x) + noise * N(0,1)`.
pub fn simulate(
    seed: u64,
    n: usize,
    p: usize,
    logit: impl Fn(&[f64]) -> f64,
    mu0: impl Fn(&[f64]) -> f64,
    tau: impl Fn(&[f64]) -> f64,
    noise: f64,
) -> Sim {
    let mut r = rng(seed);
    let x = normals(&mut r, n, p);
    let mut z: Vec<bool> = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut taus = Vec::with_capacity(n);
    let mut es = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let e = sigmoid(logit(&row));
        let t = bernoulli(&mut r, e);
        let tv = tau(&row);
        let eps = noise * normal(&mut r);
        z.push(t);
        y.push(mu0(&row) + if t { tv } else { 0.0 } + eps);
        taus.push(tv);
        es.push(e);
    }
    Sim {
        input: EstimatorInput::new(x, z, y).expect("valid input"),
        tau: taus,
        e: es,
    }
}

/// Rows of the canonical setting table: index and the six knob names.
pub fn setting_table() -> Vec<(usize, Vec<String>)> {
    include_str!("../fixtures/setting_table.txt")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace();
            let id = it.next().unwrap().parse().unwrap();
            (id, it.map(str::to_owned).collect())
        })
        .collect()
}

/// Minimum-cost perfect assignment (Hungarian algorithm with potentials).
pub fn hungarian(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let (mut p, mut way) = (vec![0usize; n + 1], vec![0usize; n + 1]);
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let (mut delta, mut j1) = (f64::INFINITY, 0);
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum::<f64>() / n as f64
}

pub fn sq_cost(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..b.nrows()).map(|j| (a.row(i) - b.row(j)).norm_squared()).collect())
        .collect()
}
