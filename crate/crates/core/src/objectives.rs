//! Mean-variance and CVaR objectives, their relaxed forms, gradients of the
//! smooth parts and the hinge proximal operator.
//!
//! The relaxed CVaR objective replaces the hinge argument `-Rw - α` by a free
//! auxiliary vector `u`, couples the two with `(ρ/2)‖Rw + α1 + u‖²` and
//! eliminates `α` in closed form. What is left is
//!
//! ```text
//! g̃(w, u, v) = α*(u, w) + c Σ [u_j]₊ + (ν/2)‖w - v‖² + (ρ/2)‖M(Rw + u) - 1/(ρN)‖²
//! ```
//!
//! with `c = 1/(N(1-β))` and the centering matrix `M = I - 11ᵀ/N`, which is
//! applied by subtracting the mean and never formed.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Moments;
use crate::error::{Error, Result};
use crate::linalg::{center_in_place, dot, matvec, matvec_t};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MarkowitzParams {
    /// Weight on expected return.
    pub gamma_return: f64,
    /// Ridge added to the covariance diagonal.
    #[serde(default)]
    pub lambda_ridge: f64,
}

impl MarkowitzParams {
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if !(self.gamma_return >= 0.0) {
            v.push(format!("gamma_return must be >= 0, got {}", self.gamma_return));
        }
        if !(self.lambda_ridge >= 0.0) {
            v.push(format!("lambda_ridge must be >= 0, got {}", self.lambda_ridge));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvarParams {
    /// Quantile level in (0, 1).
    pub beta: f64,
    /// Penalty coupling `u` to `-Rw - α`.
    #[serde(default = "CvarParams::default_rho")]
    pub rho_relax: f64,
}

impl CvarParams {
    pub const DEFAULT_RHO: f64 = 100.0;

    fn default_rho() -> f64 {
        Self::DEFAULT_RHO
    }

    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            rho_relax: Self::DEFAULT_RHO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if !(self.beta > 0.0 && self.beta < 1.0) {
            v.push(format!("beta must be in (0, 1), got {}", self.beta));
        }
        if !(self.rho_relax > 0.0 && self.rho_relax.is_finite()) {
            v.push(format!("rho_relax must be > 0, got {}", self.rho_relax));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Hinge weight `1/(N(1-β))`.
    pub fn hinge_weight(&self, n_samples: usize) -> f64 {
        1.0 / (n_samples as f64 * (1.0 - self.beta))
    }
}

/// Iterate of the relaxed problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioState {
    /// Simplex-feasible weights.
    pub w: Vec<f64>,
    /// Sparse auxiliary weights in `Ω`.
    pub v: Vec<f64>,
    /// Hinge auxiliary (CVaR only).
    pub u: Option<Vec<f64>>,
    /// VaR level recovered from `u` and `w` (CVaR only).
    pub alpha: Option<f64>,
}

fn quad_form(sigma: &DMatrix<f64>, w: &[f64]) -> f64 {
    let mut sw = vec![0.0; w.len()];
    matvec(sigma, w, &mut sw);
    dot(w, &sw)
}

/// `wᵀ(Σ + λI)w - γμᵀw`
pub fn markowitz_value(w: &[f64], moments: &Moments, params: &MarkowitzParams) -> f64 {
    quad_form(&moments.sigma, w) + params.lambda_ridge * dot(w, w)
        - params.gamma_return * dot(&moments.mu, w)
}

/// Markowitz objective plus `(ν/2)‖w - v‖²`.
pub fn markowitz_relaxed_value(
    w: &[f64],
    v: &[f64],
    moments: &Moments,
    params: &MarkowitzParams,
    nu: f64,
) -> f64 {
    markowitz_value(w, moments, params) + 0.5 * nu * sq_dist(w, v)
}

/// `2(Σ + λI)w - γμ + ν(w - v)`
pub fn markowitz_grad(
    w: &[f64],
    v: &[f64],
    moments: &Moments,
    params: &MarkowitzParams,
    nu: f64,
) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    matvec(&moments.sigma, w, &mut g);
    for i in 0..w.len() {
        g[i] = 2.0 * (g[i] + params.lambda_ridge * w[i]) - params.gamma_return * moments.mu[i]
            + nu * (w[i] - v[i]);
    }
    g
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Portfolio losses `ℓ_j = -wᵀr_j`.
pub fn losses(w: &[f64], returns: &DMatrix<f64>) -> Vec<f64> {
    let mut l = vec![0.0; returns.nrows()];
    matvec(returns, w, &mut l);
    l.iter_mut().for_each(|v| *v = -*v);
    l
}

/// Empirical superquantile and VaR: `(min_α F_β(w, α), argmin)` with
/// `F_β(w, α) = α + 1/(N(1-β)) Σ [ℓ_j - α]₊`.
///
/// `F_β` is piecewise linear with breakpoints at the losses, so the minimum
/// is found by evaluating it at every sorted loss. Ties pick the smallest α.
pub fn cvar_exact(w: &[f64], returns: &DMatrix<f64>, beta: f64) -> (f64, f64) {
    let mut l = losses(w, returns);
    cvar_of_losses(&mut l, beta)
}

/// As [`cvar_exact`], on a precomputed loss vector (reordered in place).
pub fn cvar_of_losses(l: &mut [f64], beta: f64) -> (f64, f64) {
    let n = l.len();
    debug_assert!(n > 0);
    l.sort_by(f64::total_cmp);
    let c = 1.0 / (n as f64 * (1.0 - beta));
    let mut suffix = 0.0;
    let mut best = (f64::INFINITY, f64::NAN);
    // walk from the largest loss down so the suffix sum is cheap
    for i in (0..n).rev() {
        let a = l[i];
        let above = (n - 1 - i) as f64;
        let val = a + c * (suffix - above * a);
        if val <= best.0 {
            best = (val, a);
        }
        suffix += a;
    }
    best
}

fn coupling_residual(w: &[f64], u: &[f64], returns: &DMatrix<f64>) -> Vec<f64> {
    let mut z = vec![0.0; returns.nrows()];
    matvec(returns, w, &mut z);
    for (zj, uj) in z.iter_mut().zip(u) {
        *zj += uj;
    }
    z
}

/// Closed-form minimizer in α of the coupled objective:
/// `-(1 + ρ1ᵀ(Rw + u)) / (ρN)`.
pub fn alpha_star(w: &[f64], u: &[f64], returns: &DMatrix<f64>, rho: f64) -> f64 {
    let z = coupling_residual(w, u, returns);
    alpha_from_residual(&z, rho)
}

fn alpha_from_residual(z: &[f64], rho: f64) -> f64 {
    let n = z.len() as f64;
    -(1.0 + rho * z.iter().sum::<f64>()) / (rho * n)
}

/// Everything in `g̃` except the hinge sum.
pub fn cvar_smooth_value(
    w: &[f64],
    u: &[f64],
    v: &[f64],
    returns: &DMatrix<f64>,
    params: &CvarParams,
    nu: f64,
) -> f64 {
    let rho = params.rho_relax;
    let mut z = coupling_residual(w, u, returns);
    let alpha = alpha_from_residual(&z, rho);
    center_in_place(&mut z);
    let shift = 1.0 / (rho * z.len() as f64);
    let coupling: f64 = z.iter().map(|&m| (m - shift) * (m - shift)).sum();
    alpha + 0.5 * nu * sq_dist(w, v) + 0.5 * rho * coupling
}

/// `c Σ [u_j]₊`
pub fn hinge_sum(u: &[f64], params: &CvarParams) -> f64 {
    params.hinge_weight(u.len()) * u.iter().map(|&x| x.max(0.0)).sum::<f64>()
}

/// The relaxed CVaR objective `g̃(w, u, v)`.
pub fn cvar_relaxed_value(
    w: &[f64],
    u: &[f64],
    v: &[f64],
    returns: &DMatrix<f64>,
    params: &CvarParams,
    nu: f64,
) -> f64 {
    cvar_smooth_value(w, u, v, returns, params, nu) + hinge_sum(u, params)
}

/// Gradient of the smooth part in `w`: `-(1/N)Rᵀ1 + ρRᵀM(Rw + u) + ν(w - v)`.
pub fn cvar_grad_w(
    w: &[f64],
    u: &[f64],
    v: &[f64],
    returns: &DMatrix<f64>,
    params: &CvarParams,
    nu: f64,
) -> Vec<f64> {
    let n_samples = returns.nrows() as f64;
    let mut z = coupling_residual(w, u, returns);
    center_in_place(&mut z);
    let rho = params.rho_relax;
    z.iter_mut().for_each(|m| *m = rho * *m - 1.0 / n_samples);
    let mut g = vec![0.0; w.len()];
    matvec_t(returns, &z, &mut g);
    for i in 0..w.len() {
        g[i] += nu * (w[i] - v[i]);
    }
    g
}

/// Gradient of the smooth part in `u`: `-(1/N)1 + ρM(Rw + u)`.
pub fn cvar_grad_u(w: &[f64], u: &[f64], returns: &DMatrix<f64>, params: &CvarParams) -> Vec<f64> {
    let n_samples = returns.nrows() as f64;
    let mut z = coupling_residual(w, u, returns);
    center_in_place(&mut z);
    let rho = params.rho_relax;
    z.iter_mut().for_each(|m| *m = rho * *m - 1.0 / n_samples);
    z
}

/// Proximal operator of `t · [x]₊ / (N(1-β))`, componentwise.
pub fn hinge_prox(x: &[f64], t: f64, beta: f64, n_samples: usize) -> Vec<f64> {
    let tau = t / (n_samples as f64 * (1.0 - beta));
    x.iter()
        .map(|&v| {
            if v > tau {
                v - tau
            } else if v >= 0.0 {
                0.0
            } else {
                v
            }
        })
        .collect()
}
