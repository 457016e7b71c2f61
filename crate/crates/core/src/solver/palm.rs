use std::time::Instant;

use nalgebra::DMatrix;

use super::fista::{fista_update, FistaState};
use super::lipschitz::estimate_lipschitz;
use super::restricted::restricted_solve;
use super::{Model, NuScaling, Problem, SolveReport, SolverConfig, StepMode};
use crate::error::{Error, Result};
use crate::linalg::{dist2, dist_inf, matvec};
use crate::objectives::{
    alpha_star, cvar_exact, cvar_grad_u, cvar_grad_w, cvar_relaxed_value, hinge_prox,
    markowitz_grad, markowitz_relaxed_value, CvarParams, PortfolioState,
};
use crate::projection::{project_omega, project_simplex, project_sparse_simplex, top_k_indices};

/// Absolute slack allowed in the per-iteration descent check.
const DESCENT_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Path {
    /// Relaxed problem over `(w, v[, u])` with the `Ω` projection on `v`.
    Palm,
    /// Unrelaxed: `w` projected straight onto `Δ₁ ∩ {‖w‖₀ <= k}`.
    GlobalK(usize),
}

impl Path {
    fn project_w(self, z: &[f64]) -> Vec<f64> {
        match self {
            Path::Palm => project_simplex(z, 1.0),
            Path::GlobalK(k) => project_sparse_simplex(z, k),
        }
    }
}

/// Which fixed-point map [`stationarity_residual`] measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualKind {
    /// The `w`-block of the relaxed problem at penalty `nu`.
    Relaxed { nu: f64 },
    /// Projected gradient onto `Δ₁ ∩ {‖w‖₀ <= k}`.
    GlobalK { k: usize },
}

/// `‖w - P(w - δ∇)‖∞`; zero exactly at fixed points of the method.
pub fn stationarity_residual(
    state: &PortfolioState,
    problem: &Problem,
    delta: f64,
    kind: ResidualKind,
) -> f64 {
    let (nu, path) = match kind {
        ResidualKind::Relaxed { nu } => (nu, Path::Palm),
        ResidualKind::GlobalK { k } => (0.0, Path::GlobalK(k)),
    };
    let w = &state.w;
    let v = if path == Path::Palm { &state.v } else { w };
    let g = match &problem.model {
        Model::Markowitz { moments, params } => markowitz_grad(w, v, moments, params, nu),
        Model::Cvar {
            returns, params, ..
        } => {
            let fallback;
            let u = match &state.u {
                Some(u) => u,
                None => {
                    fallback = initial_u(w, returns, params);
                    &fallback
                }
            };
            cvar_grad_w(w, u, v, returns, params, nu)
        }
    };
    let z: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - delta * b).collect();
    dist_inf(w, &path.project_w(&z))
}

/// `λ_max(Σ)` by power iteration; second value is the fallback flag.
pub(crate) fn sigma_lambda_max(sigma: &DMatrix<f64>, seed: u64) -> (f64, bool) {
    let n = sigma.nrows();
    let est = estimate_lipschitz(
        |x| {
            let mut y = vec![0.0; n];
            matvec(sigma, x, &mut y);
            y
        },
        n,
        seed,
    );
    (est.value, !est.converged)
}

/// Lipschitz constant of the smooth part's `w`-gradient, without the penalty.
pub(crate) fn smooth_lipschitz(model: &Model, seed: u64) -> (f64, bool) {
    let (l, flag) = match model {
        Model::Markowitz { moments, params } => {
            let (lam, flag) = sigma_lambda_max(&moments.sigma, seed);
            (2.0 * (lam + params.lambda_ridge), flag)
        }
        // RᵀMR = N·Σ for the population covariance
        Model::Cvar {
            returns,
            sigma,
            params,
        } => {
            let (lam, flag) = sigma_lambda_max(sigma, seed);
            (params.rho_relax * returns.nrows() as f64 * lam, flag)
        }
    };
    (l.max(1e-12), flag)
}

/// `u⁰ = -Rw - α̂` with α̂ the exact VaR at `w`.
pub(crate) fn initial_u(w: &[f64], returns: &DMatrix<f64>, params: &CvarParams) -> Vec<f64> {
    let (_, alpha) = cvar_exact(w, returns, params.beta);
    let mut rw = vec![0.0; returns.nrows()];
    matvec(returns, w, &mut rw);
    rw.into_iter().map(|x| -x - alpha).collect()
}

/// Solve with the PALM variant matching the model.
pub fn solve(problem: &Problem, config: &SolverConfig) -> Result<SolveReport> {
    solve_from(problem, config, None)
}

pub fn solve_from(
    problem: &Problem,
    config: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<SolveReport> {
    run(problem, config, start, Path::Palm)
}

/// PALM for the relaxed mean-variance problem:
/// `w ← P_Δ(w - δ(∇f(w) + ν(w - v)))`, then `v_i ← P_{V_i}(w_i)` per group.
pub fn palm_markowitz(problem: &Problem, config: &SolverConfig) -> Result<SolveReport> {
    palm_markowitz_from(problem, config, None)
}

pub fn palm_markowitz_from(
    problem: &Problem,
    config: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<SolveReport> {
    if !matches!(problem.model, Model::Markowitz { .. }) {
        return Err(Error::validation("palm_markowitz needs a mean-variance model"));
    }
    run(problem, config, start, Path::Palm)
}

/// PALM for the relaxed CVaR problem: a (momentum) step on `w`, one on `u`,
/// then the group projection for `v`.
pub fn palm_cvar(problem: &Problem, config: &SolverConfig) -> Result<SolveReport> {
    palm_cvar_from(problem, config, None)
}

pub fn palm_cvar_from(
    problem: &Problem,
    config: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<SolveReport> {
    if !matches!(problem.model, Model::Cvar { .. }) {
        return Err(Error::validation("palm_cvar needs a CVaR model"));
    }
    run(problem, config, start, Path::Palm)
}

/// Projected gradient on `Δ₁ ∩ {‖w‖₀ <= k}` with no `v` relaxation. Requires
/// a single group spanning every asset with budget `[0, 1]`.
pub fn prox_grad_global_k(problem: &Problem, config: &SolverConfig) -> Result<SolveReport> {
    prox_grad_global_k_from(problem, config, None)
}

pub fn prox_grad_global_k_from(
    problem: &Problem,
    config: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<SolveReport> {
    if !problem.partition.is_global() {
        return Err(Error::validation(
            "the global-k path needs one group of all assets with budget [0, 1]",
        ));
    }
    let k = problem.partition.groups()[0].k;
    run(problem, config, start, Path::GlobalK(k))
}

struct Trace {
    values: Vec<f64>,
    stage_ends: Vec<usize>,
    stage_gaps: Vec<f64>,
}

fn run(
    problem: &Problem,
    config: &SolverConfig,
    start: Option<&[f64]>,
    path: Path,
) -> Result<SolveReport> {
    config.validate()?;
    let clock = Instant::now();
    let n = problem.n_assets();
    let w0 = match start {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: w.len(),
                });
            }
            path.project_w(w)
        }
        None => path.project_w(&config.initial_weights(n)),
    };
    let (lf, fallback) = smooth_lipschitz(&problem.model, config.seed);
    let stages: Vec<f64> = match path {
        Path::GlobalK(_) => vec![0.0],
        Path::Palm => config
            .nu_schedule
            .iter()
            .map(|&nu| match config.nu_scaling {
                NuScaling::Relative => nu * lf,
                NuScaling::Absolute => nu,
            })
            .collect(),
    };
    let step_for = |nu: f64| match config.step_mode {
        StepMode::InverseLipschitz => 1.0 / (lf + nu),
        StepMode::Fixed(d) => d,
    };

    let mut trace = Trace {
        values: Vec::new(),
        stage_ends: Vec::new(),
        stage_gaps: Vec::new(),
    };
    let (state, converged) = match &problem.model {
        Model::Markowitz { moments, params } => {
            let omega = |w: &[f64]| match path {
                Path::Palm => project_omega(w, &problem.partition),
                Path::GlobalK(_) => w.to_vec(),
            };
            let mut w = w0;
            let mut v = omega(&w);
            let mut converged = false;
            for (stage, &nu) in stages.iter().enumerate() {
                let step = step_for(nu);
                let mut fw = FistaState::new(w.clone());
                let mut prev = markowitz_relaxed_value(&w, &v, moments, params, nu);
                converged = false;
                for it in 0..config.max_iters {
                    let v_cur = &v;
                    fw = fista_update(fw, config.accelerate, config.momentum, |y| {
                        let g = markowitz_grad(y, v_cur, moments, params, nu);
                        let z: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                        path.project_w(&z)
                    });
                    let v_new = omega(&fw.x);
                    let obj = markowitz_relaxed_value(&fw.x, &v_new, moments, params, nu);
                    trace.values.push(obj);
                    guard(config, &mut [&mut fw], stage, it, prev, obj)?;
                    let moved = dist_inf(&fw.x, &w).max(dist_inf(&v_new, &v));
                    w.clone_from(&fw.x);
                    v = v_new;
                    prev = obj;
                    if moved <= config.tol {
                        converged = true;
                        break;
                    }
                }
                trace.stage_ends.push(trace.values.len());
                trace.stage_gaps.push(dist2(&w, &v));
            }
            (
                PortfolioState {
                    w,
                    v,
                    u: None,
                    alpha: None,
                },
                converged,
            )
        }
        Model::Cvar {
            returns, params, ..
        } => {
            let omega = |w: &[f64]| match path {
                Path::Palm => project_omega(w, &problem.partition),
                Path::GlobalK(_) => w.to_vec(),
            };
            let n_samples = returns.nrows();
            let step_u = 1.0 / params.rho_relax;
            let mut w = w0;
            let mut u = initial_u(&w, returns, params);
            let mut v = omega(&w);
            let mut converged = false;
            for (stage, &nu) in stages.iter().enumerate() {
                let step_w = step_for(nu);
                let mut fw = FistaState::new(w.clone());
                let mut fu = FistaState::new(u.clone());
                let mut prev = cvar_relaxed_value(&w, &u, &v, returns, params, nu);
                converged = false;
                for it in 0..config.max_iters {
                    let v_cur = &v;
                    let u_cur = &fu.x;
                    fw = fista_update(fw, config.accelerate, config.momentum, |y| {
                        let g = cvar_grad_w(y, u_cur, v_cur, returns, params, nu);
                        let z: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step_w * b).collect();
                        path.project_w(&z)
                    });
                    let w_cur = &fw.x;
                    fu = fista_update(fu, config.accelerate, config.momentum, |y| {
                        let g = cvar_grad_u(w_cur, y, returns, params);
                        let z: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step_u * b).collect();
                        hinge_prox(&z, step_u, params.beta, n_samples)
                    });
                    let v_new = omega(&fw.x);
                    let obj = cvar_relaxed_value(&fw.x, &fu.x, &v_new, returns, params, nu);
                    trace.values.push(obj);
                    guard(config, &mut [&mut fw, &mut fu], stage, it, prev, obj)?;
                    let moved = dist_inf(&fw.x, &w).max(dist_inf(&v_new, &v));
                    w.clone_from(&fw.x);
                    u.clone_from(&fu.x);
                    v = v_new;
                    prev = obj;
                    if moved <= config.tol {
                        converged = true;
                        break;
                    }
                }
                trace.stage_ends.push(trace.values.len());
                trace.stage_gaps.push(dist2(&w, &v));
            }
            let alpha = alpha_star(&w, &u, returns, params.rho_relax);
            (
                PortfolioState {
                    w,
                    v,
                    u: Some(u),
                    alpha: Some(alpha),
                },
                converged,
            )
        }
    };

    let last_nu = *stages.last().expect("nonempty schedule");
    let kind = match path {
        Path::Palm => ResidualKind::Relaxed { nu: last_nu },
        Path::GlobalK(k) => ResidualKind::GlobalK { k },
    };
    let residual = stationarity_residual(&state, problem, step_for(last_nu), kind);
    let (weights, support, objective) = readout(problem, &state, path)?;
    let var_alpha = match &problem.model {
        Model::Cvar {
            returns, params, ..
        } => Some(cvar_exact(&weights, returns, params.beta).1),
        Model::Markowitz { .. } => None,
    };
    Ok(SolveReport {
        relax_gap: *trace.stage_gaps.last().expect("at least one stage"),
        iterations: trace.values.len(),
        objective_trace: trace.values,
        stage_ends: trace.stage_ends,
        stage_gaps: trace.stage_gaps,
        state,
        weights,
        support,
        objective,
        var_alpha,
        converged,
        stationarity_residual: residual,
        lipschitz_fallback: fallback,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

/// Descent check for plain runs, objective-increase restart for accelerated ones.
fn guard(
    config: &SolverConfig,
    blocks: &mut [&mut FistaState],
    stage: usize,
    iteration: usize,
    prev: f64,
    obj: f64,
) -> Result<()> {
    if config.accelerate {
        if config.restart && obj > prev {
            blocks.iter_mut().for_each(|b| b.restart());
        }
        Ok(())
    } else if obj > prev + DESCENT_SLACK + 1e-14 * prev.abs() {
        Err(Error::DescentViolation {
            stage,
            iteration,
            before: prev,
            after: obj,
        })
    } else {
        Ok(())
    }
}

fn nonzeros(x: &[f64]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Re-solve on the support of the sparse iterate so the returned portfolio is
/// exactly feasible. On the global-k path the iterate itself is feasible and
/// is kept when it is at least as good.
fn readout(problem: &Problem, state: &PortfolioState, path: Path) -> Result<(Vec<f64>, Vec<usize>, f64)> {
    let sparse = match path {
        Path::Palm => &state.v,
        Path::GlobalK(_) => &state.w,
    };
    let mut support = nonzeros(sparse);
    if support.is_empty() {
        // every budget-carrying group came out empty; fall back to the
        // heaviest admissible assets of each group
        for g in problem.partition.groups().iter().filter(|g| g.q > 0.0) {
            let sub: Vec<f64> = g.indices.iter().map(|&i| state.w[i]).collect();
            support.extend(top_k_indices(&sub, g.k).into_iter().map(|j| g.indices[j]));
        }
        support.sort_unstable();
    }
    let (weights, value) = restricted_solve(problem, &support)?;
    if let Path::GlobalK(_) = path {
        let at_iterate = problem.objective(&state.w);
        if at_iterate < value {
            return Ok((state.w.clone(), nonzeros(&state.w), at_iterate));
        }
    }
    let nz = nonzeros_or(&support, &weights);
    Ok((weights, nz, value))
}

fn nonzeros_or(support: &[usize], weights: &[f64]) -> Vec<usize> {
    let nz: Vec<usize> = support.iter().copied().filter(|&i| weights[i] != 0.0).collect();
    if nz.is_empty() {
        support.to_vec()
    } else {
        nz
    }
}
