use microlp::{ComparisonOp, OptimizationDirection};
use nalgebra::DMatrix;

use super::fista::{fista_update, FistaState, MomentumForm};
use super::palm::sigma_lambda_max;
use super::{Model, Problem};
use crate::error::{Error, Result};
use crate::linalg::dist_inf;
use crate::objectives::{markowitz_grad, markowitz_value};
use crate::projection::BudgetedSimplex;

/// Accuracy knobs for the mean-variance branch of [`restricted_solve_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedOptions {
    /// Max-norm change in `w` that ends a run.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for RestrictedOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 20_000,
        }
    }
}

/// Minimize the unrelaxed objective over portfolios supported on `support`
/// (which must be strictly increasing), subject to the full-investment
/// simplex and the group budgets. Returns full-length weights and the value.
///
/// Mean-variance runs accelerated projected gradient. CVaR on a fixed support
/// is a linear program in `(w, α, z)` and is solved as one.
pub fn restricted_solve(problem: &Problem, support: &[usize]) -> Result<(Vec<f64>, f64)> {
    restricted_solve_with(problem, support, &RestrictedOptions::default())
}

pub fn restricted_solve_with(
    problem: &Problem,
    support: &[usize],
    opts: &RestrictedOptions,
) -> Result<(Vec<f64>, f64)> {
    let n = problem.n_assets();
    if support.windows(2).any(|p| p[0] >= p[1]) || support.last().is_some_and(|&i| i >= n) {
        return Err(Error::validation(format!(
            "support {support:?} must be strictly increasing indices below {n}"
        )));
    }
    let feasible = BudgetedSimplex::new(&problem.partition, support)?;
    let k = support.len();
    let x0 = feasible.project(&vec![1.0 / k as f64; k]);
    let x = if k == 1 {
        x0
    } else {
        match problem.model.select_assets(support) {
            Model::Markowitz { moments, params } => {
                let (lam, _) = sigma_lambda_max(&moments.sigma, 0);
                let step = 1.0 / (2.0 * (lam + params.lambda_ridge)).max(1e-12);
                let zero = vec![0.0; k];
                let mut fw = FistaState::new(x0);
                let mut prev = f64::INFINITY;
                for _ in 0..opts.max_iters {
                    let old = fw.x.clone();
                    fw = fista_update(fw, true, MomentumForm::Standard, |y| {
                        let g = markowitz_grad(y, &zero, &moments, &params, 0.0);
                        let z: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                        feasible.project(&z)
                    });
                    let obj = markowitz_value(&fw.x, &moments, &params);
                    if obj > prev {
                        fw.restart();
                    }
                    prev = obj;
                    if dist_inf(&fw.x, &old) <= opts.tol {
                        break;
                    }
                }
                fw.x
            }
            Model::Cvar {
                returns, params, ..
            } => {
                let lp = cvar_lp(&returns, params.beta, &feasible)?;
                // clears rounding in the last digits of the LP solution
                feasible.project(&lp)
            }
        }
    };
    let mut full = vec![0.0; n];
    for (&i, &xi) in support.iter().zip(&x) {
        full[i] = xi;
    }
    let value = problem.objective(&full);
    Ok((full, value))
}

/// `min α + c Σ z_j` s.t. `z_j >= -r_jᵀw - α`, `z >= 0`, `w` in `feasible`.
fn cvar_lp(returns: &DMatrix<f64>, beta: f64, feasible: &BudgetedSimplex) -> Result<Vec<f64>> {
    let (n_samples, k) = returns.shape();
    let c = 1.0 / (n_samples as f64 * (1.0 - beta));
    let mut lp = microlp::Problem::new(OptimizationDirection::Minimize);
    let w: Vec<_> = (0..k).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let alpha = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    for j in 0..n_samples {
        let z = lp.add_var(c, (0.0, f64::INFINITY));
        let mut row: Vec<_> = w.iter().enumerate().map(|(i, &v)| (v, returns[(j, i)])).collect();
        row.push((alpha, 1.0));
        row.push((z, 1.0));
        lp.add_constraint(&row, ComparisonOp::Ge, 0.0);
    }
    let all: Vec<_> = w.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(&all, ComparisonOp::Eq, 1.0);
    for (members, p, q) in feasible.budgets() {
        let row: Vec<_> = members.iter().map(|&j| (w[j], 1.0)).collect();
        if *p > 0.0 {
            lp.add_constraint(&row, ComparisonOp::Ge, *p);
        }
        if *q < 1.0 {
            lp.add_constraint(&row, ComparisonOp::Le, *q);
        }
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::Lp(e.to_string()))?
        .into_solution()
        .map_err(|_| Error::Lp("solver stopped without a solution".into()))?;
    Ok(w.iter().map(|&v| solution.var_value(v).max(0.0)).collect())
}
