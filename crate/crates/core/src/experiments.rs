//! Experiment drivers: efficient-frontier sweeps, the stationary-point escape
//! study and the brute-force comparison. Each returns plain data and has a
//! CSV writer; nothing here touches the filesystem.

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{estimate_moments, synth_returns, ReturnsPanel, SectorLayout, SynthParams};
use crate::error::{Error, Result};
use crate::objectives::{cvar_exact, CvarParams, MarkowitzParams};
use crate::oracle::{exhaustive_search, write_comment, DEFAULT_CAP};
use crate::projection::{GroupPartition, GroupSpec};
use crate::solver::{
    prox_grad_global_k_from, restricted_solve, solve, Model, ModelKind, Problem, SolverConfig,
};

pub const DEFAULT_N_ASSETS: usize = 65;
pub const DEFAULT_N_SECTORS: usize = 7;
pub const DEFAULT_N_SAMPLES: usize = 251;
pub const DEFAULT_SEED: u64 = 20180621;

/// Improvement needed for an escape trial to count.
pub const ESCAPE_THRESHOLD: f64 = 1e-9;

/// The synthetic universe used by default: 65 assets in 7 sectors, 251 periods.
pub fn default_universe() -> ReturnsPanel {
    synth_returns(
        DEFAULT_N_ASSETS,
        DEFAULT_N_SAMPLES,
        &SectorLayout::Even(DEFAULT_N_SECTORS),
        &SynthParams::default(),
        DEFAULT_SEED,
    )
    .expect("default universe parameters are valid")
}

/// `steps` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

pub fn default_gamma_grid() -> Vec<f64> {
    linspace(0.0, 1.5, 31)
}

pub fn default_beta_grid() -> Vec<f64> {
    linspace(0.5, 0.95, 10)
}

/// A named constraint set.
#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    pub partition: GroupPartition,
}

/// Sector membership as lists of asset indices, in order of first appearance.
pub fn sector_indices(panel: &ReturnsPanel) -> Result<Vec<(String, Vec<usize>)>> {
    let labels = panel
        .sectors
        .as_ref()
        .ok_or_else(|| Error::validation("panel has no sector labels"))?;
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match out.iter_mut().find(|(name, _)| name == l) {
            Some((_, idx)) => idx.push(i),
            None => out.push((l.clone(), vec![i])),
        }
    }
    Ok(out)
}

/// One group per sector: the sectors in `excluded` get a zero budget, the
/// rest may hold up to `k` assets with an open budget.
pub fn sector_partition(panel: &ReturnsPanel, k: usize, excluded: &[&str]) -> Result<GroupPartition> {
    let groups = sector_indices(panel)?
        .into_iter()
        .map(|(name, idx)| {
            if excluded.contains(&name.as_str()) {
                GroupSpec::new(name, idx, 0.0, 0.0, 1)
            } else {
                let cap = k.min(idx.len());
                GroupSpec::new(name, idx, 0.0, 1.0, cap)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    GroupPartition::new(groups, panel.n_assets())
}

/// The unconstrained baseline plus the two sector-restricted models: the
/// first sector excluded, then the first two, with at most two holdings in
/// every other sector.
pub fn default_variants(panel: &ReturnsPanel) -> Result<Vec<Variant>> {
    let sectors = sector_indices(panel)?;
    let mut out = vec![Variant {
        label: "unconstrained".into(),
        partition: GroupPartition::single(panel.n_assets(), panel.n_assets())?,
    }];
    if sectors.len() >= 2 {
        let first = sectors[0].0.as_str();
        out.push(Variant {
            label: format!("k2_without_{first}"),
            partition: sector_partition(panel, 2, &[first])?,
        });
    }
    if sectors.len() >= 3 {
        let (a, b) = (sectors[0].0.as_str(), sectors[1].0.as_str());
        out.push(Variant {
            label: format!("k2_without_{a}_{b}"),
            partition: sector_partition(panel, 2, &[a, b])?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    /// γ for mean-variance curves, β for CVaR curves.
    pub parameter: f64,
    /// Variance, or β-CVaR.
    pub risk: f64,
    /// Mean return, or β-VaR.
    pub reward: f64,
    /// Value of the objective that was minimized.
    pub objective: f64,
    pub weights: Vec<f64>,
    /// Set when the solve failed; the numeric fields are then NaN.
    pub error: Option<String>,
}

impl FrontierPoint {
    fn failed(parameter: f64, err: Error) -> Self {
        Self {
            parameter,
            risk: f64::NAN,
            reward: f64::NAN,
            objective: f64::NAN,
            weights: Vec::new(),
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCurve {
    pub label: String,
    pub points: Vec<FrontierPoint>,
}

fn check_grid(grid: &[f64], name: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::validation(format!("{name} grid is empty")));
    }
    if grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::validation(format!("{name} grid must be strictly increasing")));
    }
    Ok(())
}

/// Sweep γ for each variant.
pub fn frontier_markowitz(
    panel: &ReturnsPanel,
    gammas: &[f64],
    lambda_ridge: f64,
    variants: &[Variant],
    config: &SolverConfig,
) -> Result<Vec<FrontierCurve>> {
    check_grid(gammas, "gamma")?;
    let moments = estimate_moments(panel);
    Ok(variants
        .iter()
        .map(|variant| {
            let points = gammas
                .par_iter()
                .map(|&gamma| {
                    let params = MarkowitzParams {
                        gamma_return: gamma,
                        lambda_ridge,
                    };
                    let model = Model::markowitz(moments.clone(), params);
                    let run = Problem::new(model, variant.partition.clone())
                        .and_then(|p| solve(&p, config));
                    match run {
                        Ok(rep) => {
                            let w = rep.weights;
                            let mut sw = vec![0.0; w.len()];
                            crate::linalg::matvec(&moments.sigma, &w, &mut sw);
                            FrontierPoint {
                                parameter: gamma,
                                risk: crate::linalg::dot(&w, &sw),
                                reward: crate::linalg::dot(&w, &moments.mu),
                                objective: rep.objective,
                                weights: w,
                                error: None,
                            }
                        }
                        Err(e) => FrontierPoint::failed(gamma, e),
                    }
                })
                .collect();
            FrontierCurve {
                label: variant.label.clone(),
                points,
            }
        })
        .collect())
}

/// Sweep β for each variant; risk is the β-CVaR and reward the β-VaR of the
/// reported portfolio.
pub fn frontier_cvar(
    panel: &ReturnsPanel,
    betas: &[f64],
    rho_relax: f64,
    variants: &[Variant],
    config: &SolverConfig,
) -> Result<Vec<FrontierCurve>> {
    check_grid(betas, "beta")?;
    if betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
        return Err(Error::validation("beta grid must lie in (0, 1)"));
    }
    let model0 = Model::cvar(panel, CvarParams::new(betas[0]));
    Ok(variants
        .iter()
        .map(|variant| {
            let points = betas
                .par_iter()
                .map(|&beta| {
                    let mut model = model0.clone();
                    if let Model::Cvar { params, .. } = &mut model {
                        *params = CvarParams { beta, rho_relax };
                    }
                    let run = Problem::new(model, variant.partition.clone())
                        .and_then(|p| solve(&p, config));
                    match run {
                        Ok(rep) => {
                            let (phi, alpha) = cvar_exact(&rep.weights, &panel.returns, beta);
                            FrontierPoint {
                                parameter: beta,
                                risk: phi,
                                reward: alpha,
                                objective: rep.objective,
                                weights: rep.weights,
                                error: None,
                            }
                        }
                        Err(e) => FrontierPoint::failed(beta, e),
                    }
                })
                .collect();
            FrontierCurve {
                label: variant.label.clone(),
                points,
            }
        })
        .collect())
}

/// `label,parameter,risk,reward,w_0..w_{n-1}`; failed points leave the
/// numeric cells empty.
pub fn write_frontier_csv<W: Write>(
    mut out: W,
    comment: &str,
    n_assets: usize,
    curves: &[FrontierCurve],
) -> Result<()> {
    write_comment(&mut out, comment)?;
    let mut csv = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["label", "parameter", "risk", "reward"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..n_assets).map(|i| format!("w_{i}")));
    csv.write_record(&header)?;
    for c in curves {
        for p in &c.points {
            let mut row = vec![c.label.clone(), p.parameter.to_string()];
            if p.error.is_some() {
                row.extend(std::iter::repeat_n(String::new(), 2 + n_assets));
            } else {
                row.push(format!("{:.17e}", p.risk));
                row.push(format!("{:.17e}", p.reward));
                row.extend(p.weights.iter().map(|w| format!("{w:.17e}")));
            }
            csv.write_record(&row)?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// What the escape and brute-force studies solve on a given asset subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub gamma_return: f64,
    pub lambda_ridge: f64,
    pub beta: f64,
    pub rho_relax: f64,
}

impl ModelSpec {
    pub fn markowitz(gamma_return: f64) -> Self {
        Self {
            kind: ModelKind::Markowitz,
            gamma_return,
            lambda_ridge: 0.0,
            beta: 0.9,
            rho_relax: CvarParams::DEFAULT_RHO,
        }
    }

    pub fn cvar(beta: f64) -> Self {
        Self {
            kind: ModelKind::Cvar,
            gamma_return: 0.1,
            lambda_ridge: 0.0,
            beta,
            rho_relax: CvarParams::DEFAULT_RHO,
        }
    }

    pub fn build(&self, panel: &ReturnsPanel) -> Model {
        match self.kind {
            ModelKind::Markowitz => Model::markowitz(
                estimate_moments(panel),
                MarkowitzParams {
                    gamma_return: self.gamma_return,
                    lambda_ridge: self.lambda_ridge,
                },
            ),
            ModelKind::Cvar => Model::cvar(
                panel,
                CvarParams {
                    beta: self.beta,
                    rho_relax: self.rho_relax,
                },
            ),
        }
    }

    /// The model on the first `n` assets of `panel`, with one global group
    /// capped at `k` holdings.
    pub fn global_problem(&self, panel: &ReturnsPanel, n: usize, k: usize) -> Result<Problem> {
        if n == 0 || n > panel.n_assets() {
            return Err(Error::validation(format!(
                "n = {n} must be between 1 and the panel's {} assets",
                panel.n_assets()
            )));
        }
        if k == 0 || k > n {
            return Err(Error::validation(format!("k = {k} must be between 1 and n = {n}")));
        }
        let sub = panel.select_assets(&(0..n).collect::<Vec<_>>());
        Problem::new(self.build(&sub), GroupPartition::single(n, k)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeRow {
    pub model: ModelKind,
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeTable {
    pub rows: Vec<EscapeRow>,
}

impl EscapeTable {
    pub fn get(&self, n: usize, k: usize) -> Option<&EscapeRow> {
        self.rows.iter().find(|r| r.n == n && r.k == k)
    }
}

/// Outcome of one escape trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeTrial {
    pub initial: f64,
    pub final_value: f64,
}

impl EscapeTrial {
    pub fn escaped(&self) -> bool {
        self.final_value < self.initial - ESCAPE_THRESHOLD
    }
}

/// Seed for trial `trial` of cell `(n, k)`; independent of evaluation order.
fn trial_rng(seed: u64, n: usize, k: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 40) ^ ((k as u64) << 20) ^ trial as u64);
    rng
}

/// One trial: optimize on a random size-k support, then run the global-k
/// solver from that point. A solve that ends worse than its start keeps the
/// start, so the final value never exceeds the initial one.
pub fn escape_trial(problem: &Problem, config: &SolverConfig, rng: &mut ChaCha8Rng) -> Result<EscapeTrial> {
    let n = problem.n_assets();
    let k = problem.partition.groups()[0].k;
    let mut support = sample(rng, n, k).into_vec();
    support.sort_unstable();
    let (w_init, initial) = restricted_solve(problem, &support)?;
    let rep = prox_grad_global_k_from(problem, config, Some(&w_init))?;
    Ok(EscapeTrial {
        initial,
        final_value: rep.objective.min(initial),
    })
}

/// Fraction of trials that find a strictly better point, for every `(n, k)`
/// with `k <= n`. Uses the first `n` assets of `panel`.
pub fn escape_experiment(
    panel: &ReturnsPanel,
    spec: &ModelSpec,
    n_list: &[usize],
    k_list: &[usize],
    trials: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<EscapeTable> {
    if trials == 0 {
        return Err(Error::validation("trials must be at least 1"));
    }
    let mut rows = Vec::new();
    for &n in n_list {
        for &k in k_list {
            if k > n {
                continue;
            }
            let problem = spec.global_problem(panel, n, k)?;
            let outcomes: Vec<EscapeTrial> = (0..trials)
                .into_par_iter()
                .map(|t| escape_trial(&problem, config, &mut trial_rng(seed, n, k, t)))
                .collect::<Result<_>>()?;
            let hits = outcomes.iter().filter(|o| o.escaped()).count();
            rows.push(EscapeRow {
                model: spec.kind,
                n,
                k,
                trials,
                fraction: hits as f64 / trials as f64,
            });
        }
    }
    Ok(EscapeTable { rows })
}

pub fn write_escape_csv<W: Write>(mut out: W, comment: &str, table: &EscapeTable) -> Result<()> {
    write_comment(&mut out, comment)?;
    let mut csv = csv::Writer::from_writer(out);
    for r in &table.rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub n: usize,
    pub k: usize,
    /// Exhaustive optimum per subset, colexicographic order. Empty if skipped.
    pub values: Vec<f64>,
    pub best_value: f64,
    pub solver_value: f64,
    /// Share of subsets whose optimum is strictly below the solver's value.
    pub quantile_rank: f64,
    pub solver_seconds: f64,
    pub oracle_seconds: f64,
    pub skipped: Option<String>,
}

/// Fraction of `values` below `x` by more than rounding noise.
pub fn quantile_rank(values: &[f64], x: f64) -> f64 {
    let tol = 1e-12 + 1e-9 * x.abs();
    values.iter().filter(|&&v| v < x - tol).count() as f64 / values.len() as f64
}

/// Solve each `(n, k)` instance with the solver and by exhaustive search.
pub fn brute_force_comparison(
    panel: &ReturnsPanel,
    spec: &ModelSpec,
    sizes: &[(usize, usize)],
    config: &SolverConfig,
) -> Result<Vec<BruteForceResult>> {
    sizes
        .iter()
        .map(|&(n, k)| {
            let problem = spec.global_problem(panel, n, k)?;
            let clock = std::time::Instant::now();
            let rep = solve(&problem, config)?;
            let solver_seconds = clock.elapsed().as_secs_f64();
            let clock = std::time::Instant::now();
            match exhaustive_search(&problem, DEFAULT_CAP, true) {
                Ok(oracle) => {
                    let values = oracle.all_values.unwrap_or_default();
                    Ok(BruteForceResult {
                        n,
                        k,
                        quantile_rank: quantile_rank(&values, rep.objective),
                        values,
                        best_value: oracle.best_value,
                        solver_value: rep.objective,
                        solver_seconds,
                        oracle_seconds: clock.elapsed().as_secs_f64(),
                        skipped: None,
                    })
                }
                Err(e @ Error::CapExceeded { .. }) => Ok(BruteForceResult {
                    n,
                    k,
                    values: Vec::new(),
                    best_value: f64::NAN,
                    solver_value: rep.objective,
                    quantile_rank: f64::NAN,
                    solver_seconds,
                    oracle_seconds: 0.0,
                    skipped: Some(e.to_string()),
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}
