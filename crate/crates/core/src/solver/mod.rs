//! PALM solvers for the relaxed problems, the unrelaxed fast path for a
//! single global cardinality bound, restricted-support solves and
//! diagnostics.

mod fista;
mod lipschitz;
mod palm;
mod restricted;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::data::{estimate_moments, Moments, ReturnsPanel};
use crate::error::{Error, Result};
use crate::objectives::{cvar_exact, markowitz_value, CvarParams, MarkowitzParams, PortfolioState};
use crate::projection::GroupPartition;

pub use fista::{fista_update, FistaState, MomentumForm};
pub use lipschitz::{estimate_lipschitz, LipschitzEstimate};
pub use palm::{
    palm_cvar, palm_cvar_from, palm_markowitz, palm_markowitz_from, prox_grad_global_k,
    prox_grad_global_k_from, solve, solve_from, stationarity_residual, ResidualKind,
};
pub use restricted::{restricted_solve, restricted_solve_with, RestrictedOptions};

/// Portfolio criterion together with the data it needs.
#[derive(Debug, Clone)]
pub enum Model {
    Markowitz {
        moments: Moments,
        params: MarkowitzParams,
    },
    Cvar {
        /// `N x n` return samples.
        returns: DMatrix<f64>,
        /// Covariance of `returns`; `N·sigma` is `RᵀMR`.
        sigma: DMatrix<f64>,
        params: CvarParams,
    },
}

impl Model {
    pub fn cvar(returns: &ReturnsPanel, params: CvarParams) -> Self {
        let sigma = estimate_moments(returns).sigma;
        Model::Cvar {
            returns: returns.returns.clone(),
            sigma,
            params,
        }
    }

    pub fn markowitz(moments: Moments, params: MarkowitzParams) -> Self {
        Model::Markowitz { moments, params }
    }

    pub fn n_assets(&self) -> usize {
        match self {
            Model::Markowitz { moments, .. } => moments.n_assets(),
            Model::Cvar { returns, .. } => returns.ncols(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Markowitz { .. } => ModelKind::Markowitz,
            Model::Cvar { .. } => ModelKind::Cvar,
        }
    }

    /// Restrict the model to a subset of assets.
    pub fn select_assets(&self, idx: &[usize]) -> Model {
        match self {
            Model::Markowitz { moments, params } => Model::Markowitz {
                moments: moments.select_assets(idx),
                params: *params,
            },
            Model::Cvar {
                returns,
                sigma,
                params,
            } => Model::Cvar {
                returns: returns.select_columns(idx),
                sigma: sigma.select_rows(idx).select_columns(idx),
                params: *params,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Markowitz,
    Cvar,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Markowitz => "markowitz",
            ModelKind::Cvar => "cvar",
        })
    }
}

/// A model plus the group structure constraining it.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: Model,
    pub partition: GroupPartition,
}

impl Problem {
    pub fn new(model: Model, partition: GroupPartition) -> Result<Self> {
        let n = model.n_assets();
        if partition.n() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: partition.n(),
            });
        }
        match &model {
            Model::Markowitz { params, .. } => params.validate()?,
            Model::Cvar {
                params, returns, ..
            } => {
                params.validate()?;
                if returns.nrows() == 0 {
                    return Err(Error::InsufficientData {
                        required: 1,
                        actual: 0,
                    });
                }
            }
        }
        Ok(Self { model, partition })
    }

    pub fn n_assets(&self) -> usize {
        self.model.n_assets()
    }

    /// Unrelaxed objective: mean-variance value, or the exact β-CVaR.
    pub fn objective(&self, w: &[f64]) -> f64 {
        match &self.model {
            Model::Markowitz { moments, params } => markowitz_value(w, moments, params),
            Model::Cvar {
                returns, params, ..
            } => cvar_exact(w, returns, params.beta).0,
        }
    }
}

/// Interpretation of the values in `nu_schedule`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuScaling {
    /// Multiples of the Lipschitz constant of the smooth part's `w`-gradient.
    #[default]
    Relative,
    /// Used as given.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// `1 / (L + ν)` for `w`, `1/ρ` for `u`.
    #[default]
    InverseLipschitz,
    /// Fixed step for the `w` block; `u` keeps `1/ρ`.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Uniform,
    /// A point drawn uniformly from the simplex using `seed`.
    RandomSimplex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Penalty weights for successive continuation stages.
    pub nu_schedule: Vec<f64>,
    pub nu_scaling: NuScaling,
    /// Iteration cap per stage.
    pub max_iters: usize,
    /// Stop a stage once `w` and `v` move less than this (max-norm).
    pub tol: f64,
    pub step_mode: StepMode,
    pub accelerate: bool,
    pub momentum: MomentumForm,
    /// Reset momentum when the objective goes up (accelerated runs only).
    pub restart: bool,
    pub init: InitMode,
    pub seed: u64,
    /// Expected bound on the final `‖w - v‖`; reported, not enforced.
    pub gap_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nu_schedule: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6],
            nu_scaling: NuScaling::Relative,
            max_iters: 5000,
            tol: 1e-8,
            step_mode: StepMode::InverseLipschitz,
            accelerate: true,
            momentum: MomentumForm::Standard,
            restart: true,
            init: InitMode::Uniform,
            seed: 0,
            gap_threshold: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.nu_schedule.is_empty() {
            v.push("nu_schedule must be nonempty".to_owned());
        }
        if self.nu_schedule.iter().any(|&nu| !(nu > 0.0 && nu.is_finite())) {
            v.push("nu_schedule entries must be positive".to_owned());
        }
        if self.nu_schedule.windows(2).any(|p| p[1] < p[0]) {
            v.push("nu_schedule must be nondecreasing".to_owned());
        }
        if !(self.tol > 0.0) {
            v.push(format!("tol must be > 0, got {}", self.tol));
        }
        if self.max_iters == 0 {
            v.push("max_iters must be at least 1".to_owned());
        }
        if let StepMode::Fixed(d) = self.step_mode {
            if !(d > 0.0 && d.is_finite()) {
                v.push(format!("fixed step must be > 0, got {d}"));
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub(crate) fn initial_weights(&self, n: usize) -> Vec<f64> {
        match self.init {
            InitMode::Uniform => vec![1.0 / n as f64; n],
            InitMode::RandomSimplex => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let e: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|x| x / s).collect()
            }
        }
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Final iterate of the relaxed problem.
    pub state: PortfolioState,
    /// Feasible portfolio: re-optimized on the support of `v`.
    pub weights: Vec<f64>,
    pub support: Vec<usize>,
    /// Unrelaxed objective at `weights`.
    pub objective: f64,
    /// β-VaR at `weights` (CVaR only).
    pub var_alpha: Option<f64>,
    /// Relaxed objective after every iteration.
    pub objective_trace: Vec<f64>,
    /// Trace length at the end of each stage.
    pub stage_ends: Vec<usize>,
    /// `‖w - v‖` at the end of each stage.
    pub stage_gaps: Vec<f64>,
    pub relax_gap: f64,
    pub iterations: usize,
    /// Whether the last stage met the tolerance before its cap.
    pub converged: bool,
    pub stationarity_residual: f64,
    /// Power iteration fell back to a norm bound for the step size.
    pub lipschitz_fallback: bool,
    pub wall_time: f64,
}

impl SolveReport {
    /// Index of the first trace entry at or below `target`.
    pub fn iterations_to_reach(&self, target: f64) -> Option<usize> {
        self.objective_trace.iter().position(|&v| v <= target).map(|i| i + 1)
    }
}
