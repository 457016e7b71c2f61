//! Independent reference computations used by the integration tests.
//! Nothing here calls into the solver paths it is used to check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Every subset of `0..l` as a bitmask.
fn masks(l: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..(1 << l)).map(move |m| (0..l).filter(|&i| m & (1 << i) != 0).collect())
}

/// `argmin ‖u - z‖²` over `{z >= 0, p <= 1ᵀz <= q}` by enumerating the
/// candidate KKT points: a free set `F` (the rest pinned at zero) and the sum
/// constraint inactive, at `p`, or at `q`. Returns the best feasible candidate.
pub fn qp_box_sum(u: &[f64], p: f64, q: f64) -> Vec<f64> {
    let l = u.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for free in masks(l) {
        let mut candidates = Vec::new();
        let mut z = vec![0.0; l];
        for &i in &free {
            z[i] = u[i];
        }
        candidates.push(z);
        for c in [p, q] {
            let mut z = vec![0.0; l];
            if free.is_empty() {
                if c == 0.0 {
                    candidates.push(z);
                }
                continue;
            }
            let s: f64 = free.iter().map(|&i| u[i]).sum();
            let theta = (s - c) / free.len() as f64;
            for &i in &free {
                z[i] = u[i] - theta;
            }
            candidates.push(z);
        }
        for z in candidates {
            let sum: f64 = z.iter().sum();
            if z.iter().any(|&v| v < -1e-13) || sum < p - 1e-12 || sum > q + 1e-12 {
                continue;
            }
            let d = sq_dist(u, &z);
            if best.as_ref().is_none_or(|(b, _)| d < *b) {
                best = Some((d, z));
            }
        }
    }
    best.expect("feasible set is nonempty").1
}

/// Combinations of `0..l` of size `k`.
pub fn combinations(l: usize, k: usize) -> Vec<Vec<usize>> {
    masks(l).filter(|s| s.len() == k).collect()
}

/// Best projection onto `{z >= 0, p <= 1ᵀz <= q, ‖z‖₀ <= k}` over every
/// size-k support, each solved by [`qp_box_sum`]. Returns the squared distance.
pub fn group_projection_oracle(y: &[f64], k: usize, p: f64, q: f64) -> f64 {
    combinations(y.len(), k)
        .into_iter()
        .map(|support| {
            let sub: Vec<f64> = support.iter().map(|&i| y[i]).collect();
            let z = qp_box_sum(&sub, p, q);
            let mut full = vec![0.0; y.len()];
            for (&i, v) in support.iter().zip(z) {
                full[i] = v;
            }
            sq_dist(y, &full)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `min wᵀAw - γμᵀw` over the unit simplex by enumerating free sets and
/// solving the equality-constrained KKT system on each.
pub fn simplex_qp_oracle(a: &DMatrix<f64>, mu: &[f64], gamma: f64) -> (Vec<f64>, f64) {
    let n = mu.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for free in masks(n).filter(|s| !s.is_empty()) {
        let m = free.len();
        let mut kkt = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                kkt[(r, c)] = 2.0 * a[(i, j)];
            }
            kkt[(r, m)] = 1.0;
            kkt[(m, r)] = 1.0;
            rhs[r] = gamma * mu[i];
        }
        rhs[m] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        if (0..m).any(|r| sol[r] < -1e-12) {
            continue;
        }
        let mut w = vec![0.0; n];
        for (r, &i) in free.iter().enumerate() {
            w[i] = sol[r].max(0.0);
        }
        let val = naive_markowitz(&w, a, mu, gamma);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, w));
        }
    }
    let (v, w) = best.expect("some vertex is feasible");
    (w, v)
}

/// Plain double loop `wᵀAw - γμᵀw`.
pub fn naive_markowitz(w: &[f64], a: &DMatrix<f64>, mu: &[f64], gamma: f64) -> f64 {
    let n = w.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += w[i] * a[(i, j)] * w[j];
        }
    }
    quad - gamma * (0..n).map(|i| mu[i] * w[i]).sum::<f64>()
}

/// Two-pass mean and population covariance.
pub fn two_pass_moments(r: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (big_n, n) = r.shape();
    let mut mu = vec![0.0; n];
    for j in 0..big_n {
        for i in 0..n {
            mu[i] += r[(j, i)];
        }
    }
    mu.iter_mut().for_each(|m| *m /= big_n as f64);
    let mut s = DMatrix::zeros(n, n);
    for j in 0..big_n {
        for a in 0..n {
            for b in 0..n {
                s[(a, b)] += (r[(j, a)] - mu[a]) * (r[(j, b)] - mu[b]);
            }
        }
    }
    (mu, s / big_n as f64)
}

/// `F_β(α)` for a loss sample.
pub fn f_beta(losses: &[f64], alpha: f64, beta: f64) -> f64 {
    let c = 1.0 / (losses.len() as f64 * (1.0 - beta));
    alpha + c * losses.iter().map(|&l| (l - alpha).max(0.0)).sum::<f64>()
}

/// Dense grid search of `min_α F_β(α)` over `[lo, hi]`, refined around the best cell.
pub fn cvar_grid(losses: &[f64], beta: f64) -> f64 {
    let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut a = lo;
    let mut b = hi;
    let mut best = f_beta(losses, lo, beta);
    for _ in 0..6 {
        let steps = 2000;
        let h = (b - a) / steps as f64;
        let mut arg = a;
        for s in 0..=steps {
            let x = a + s as f64 * h;
            let v = f_beta(losses, x, beta);
            if v < best {
                best = v;
                arg = x;
            }
        }
        a = arg - h;
        b = arg + h;
    }
    best
}

/// Central differences of a scalar function.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let fp = f(&xp);
            xp[i] = orig - h;
            let fm = f(&xp);
            xp[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Max over components of `|a - b| / max(1, |b|)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}
