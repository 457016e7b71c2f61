mod common;

use ccpo_core::data::{estimate_moments, synth_returns, Moments, ReturnsPanel, SectorLayout, SynthParams};
use ccpo_core::experiments::sector_partition;
use ccpo_core::feasibility::violations;
use ccpo_core::objectives::{CvarParams, MarkowitzParams, PortfolioState};
use ccpo_core::projection::{project_omega, GroupPartition};
use ccpo_core::solver::{
    estimate_lipschitz, fista_update, palm_cvar, palm_markowitz, prox_grad_global_k, restricted_solve,
    solve, stationarity_residual, FistaState, Model, MomentumForm, Problem, ResidualKind, SolveReport,
    SolverConfig,
};
use common::{rng, simplex_qp_oracle, uniform_vec};
use nalgebra::{DMatrix, SymmetricEigen};

fn markowitz(moments: Moments, gamma: f64, partition: GroupPartition) -> Problem {
    let params = MarkowitzParams { gamma_return: gamma, lambda_ridge: 0.0 };
    Problem::new(Model::markowitz(moments, params), partition).unwrap()
}

fn diag(values: &[f64]) -> Moments {
    Moments {
        mu: vec![0.0; values.len()],
        sigma: DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(values)),
    }
}

fn panel(n: usize, samples: usize, sectors: usize, seed: u64) -> ReturnsPanel {
    synth_returns(n, samples, &SectorLayout::Even(sectors), &SynthParams::default(), seed).unwrap()
}

fn without_clock(mut r: SolveReport) -> SolveReport {
    r.wall_time = 0.0;
    r
}

#[test]
fn identity_two_assets_split_evenly() {
    let p = markowitz(diag(&[1.0, 1.0]), 0.0, GroupPartition::single(2, 2).unwrap());
    let r = palm_markowitz(&p, &SolverConfig::default()).unwrap();
    assert!((r.weights[0] - 0.5).abs() < 1e-9 && (r.weights[1] - 0.5).abs() < 1e-9);
}

#[test]
fn k1_picks_lowest_variance() {
    let p = markowitz(diag(&[0.9, 0.4, 0.7, 0.6]), 0.0, GroupPartition::single(4, 1).unwrap());
    let best = (0..4)
        .min_by(|&a, &b| restricted_solve(&p, &[a]).unwrap().1.total_cmp(&restricted_solve(&p, &[b]).unwrap().1))
        .unwrap();
    let r = palm_markowitz(&p, &SolverConfig::default()).unwrap();
    assert_eq!(r.support, vec![best]);
    assert_eq!(r.weights[best], 1.0);
}

#[test]
fn fista_recursion_and_fixed_point() {
    let s = fista_update(FistaState::new(vec![0.2, 0.8]), true, MomentumForm::Standard, |y| y.to_vec());
    assert!((s.t - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
    assert_eq!(s.x, vec![0.2, 0.8]);
    assert_eq!(s.y, s.x);
    let again = fista_update(s.clone(), true, MomentumForm::AsPrinted, |y| y.to_vec());
    assert_eq!(again.y, s.x);
}

#[test]
fn single_asset_cvar_is_forced() {
    let r = DMatrix::from_row_slice(1, 1, &[0.03]);
    let p = Problem::new(
        Model::cvar(&ReturnsPanel::from_matrix(r).unwrap(), CvarParams::new(0.9)),
        GroupPartition::single(1, 1).unwrap(),
    )
    .unwrap();
    let rep = palm_cvar(&p, &SolverConfig::default()).unwrap();
    assert_eq!(rep.weights, vec![1.0]);
    assert!((rep.var_alpha.unwrap() + 0.03).abs() <= 1e-8);
    assert!((rep.objective + 0.03).abs() <= 1e-12);
}

#[test]
fn global_k_at_n_agrees_with_palm() {
    for seed in 0..5 {
        let pn = panel(8, 60, 2, seed);
        let cfg = SolverConfig::default();
        let m = markowitz(estimate_moments(&pn), 0.2, GroupPartition::single(8, 8).unwrap());
        let a = prox_grad_global_k(&m, &cfg).unwrap().objective;
        let b = palm_markowitz(&m, &cfg).unwrap().objective;
        assert!((a - b).abs() <= 1e-6, "{a} {b}");

        let c = Problem::new(Model::cvar(&pn, CvarParams::new(0.9)), GroupPartition::single(8, 8).unwrap()).unwrap();
        let a = prox_grad_global_k(&c, &cfg).unwrap().objective;
        let b = palm_cvar(&c, &cfg).unwrap().objective;
        assert!((a - b).abs() <= 1e-5, "{a} {b}");
    }
}

#[test]
fn global_k1_finds_best_single_asset() {
    let pn = panel(9, 80, 3, 4);
    let p = markowitz(estimate_moments(&pn), 0.1, GroupPartition::single(9, 1).unwrap());
    let best = (0..9)
        .map(|i| restricted_solve(&p, &[i]).unwrap().1)
        .fold(f64::INFINITY, f64::min);
    let r = prox_grad_global_k(&p, &SolverConfig::default()).unwrap();
    // the method may stop at any stationary point; it must at least be a vertex
    assert_eq!(r.support.len(), 1);
    assert!(r.objective >= best);
    let palm = solve(&p, &SolverConfig::default()).unwrap();
    assert!((palm.objective - best).abs() < 1e-12);
}

#[test]
fn symmetric_k2_of_3() {
    let p = markowitz(diag(&[1.0, 1.0, 1.0]), 0.0, GroupPartition::single(3, 2).unwrap());
    let r = prox_grad_global_k(&p, &SolverConfig::default()).unwrap();
    let nz: Vec<f64> = r.weights.iter().copied().filter(|&w| w != 0.0).collect();
    assert_eq!(nz.len(), 2);
    assert!(nz.iter().all(|&w| (w - 0.5).abs() < 1e-9));
}

#[test]
fn restricted_matches_qp_oracle() {
    for seed in 0..20 {
        let pn = panel(6, 30, 2, 50 + seed);
        let m = estimate_moments(&pn);
        let p = markowitz(m.clone(), 0.3, GroupPartition::single(6, 6).unwrap());
        let mut g = rng(seed);
        let mut support = rand::seq::index::sample(&mut g, 6, 3).into_vec();
        support.sort_unstable();
        let (w, value) = restricted_solve(&p, &support).unwrap();
        let sub = m.select_assets(&support);
        let (w_ref, v_ref) = simplex_qp_oracle(&sub.sigma, &sub.mu, 0.3);
        assert!((value - v_ref).abs() <= 1e-6, "{value} {v_ref}");
        for (j, &i) in support.iter().enumerate() {
            assert!((w[i] - w_ref[j]).abs() <= 1e-4);
        }
    }
}

#[test]
fn lipschitz_known_spectra() {
    let id = estimate_lipschitz(|x| x.to_vec(), 5, 0);
    assert!((id.value - 1.0).abs() <= 1e-6);
    let d = estimate_lipschitz(|x| vec![x[0], 2.0 * x[1], 3.0 * x[2]], 3, 0);
    assert!((d.value - 3.0).abs() <= 0.03);
}

#[test]
fn lipschitz_matches_dense_eigen() {
    for seed in 0..10 {
        let mut g = rng(seed);
        let b = DMatrix::from_vec(12, 12, uniform_vec(&mut g, 144, -1.0, 1.0));
        let a = b.transpose() * &b;
        let top = SymmetricEigen::new(a.clone()).eigenvalues.max();
        let est = estimate_lipschitz(|x| (&a * nalgebra::DVector::from_row_slice(x)).as_slice().to_vec(), 12, seed);
        assert!((est.value - top).abs() <= 0.01 * top, "{} {top}", est.value);
    }
}

#[test]
fn residual_zero_at_symmetric_optimum_and_positive_elsewhere() {
    let p = markowitz(diag(&[1.0; 4]), 0.0, GroupPartition::single(4, 4).unwrap());
    let uniform = PortfolioState { w: vec![0.25; 4], v: vec![0.25; 4], u: None, alpha: None };
    assert!(stationarity_residual(&uniform, &p, 0.1, ResidualKind::GlobalK { k: 4 }) < 1e-15);
    let skew = PortfolioState { w: vec![0.7, 0.1, 0.1, 0.1], v: vec![0.7, 0.1, 0.1, 0.1], u: None, alpha: None };
    assert!(stationarity_residual(&skew, &p, 0.1, ResidualKind::GlobalK { k: 4 }) > 1e-3);
}

#[test]
fn residual_small_after_convergence() {
    let pn = panel(10, 100, 2, 8);
    let p = markowitz(estimate_moments(&pn), 0.1, GroupPartition::single(10, 10).unwrap());
    let cfg = SolverConfig::default();
    let r = prox_grad_global_k(&p, &cfg).unwrap();
    assert!(r.converged);
    assert!(r.stationarity_residual <= cfg.tol);
}

#[test]
fn plain_runs_descend_every_iteration() {
    let cfg = SolverConfig { accelerate: false, max_iters: 400, ..SolverConfig::default() };
    for seed in 0..4 {
        let pn = panel(12, 60, 3, seed);
        let part = sector_partition(&pn, 2, &[]).unwrap();
        let m = markowitz(estimate_moments(&pn), 0.2, part.clone());
        let c = Problem::new(Model::cvar(&pn, CvarParams::new(0.9)), part).unwrap();
        for rep in [solve(&m, &cfg).unwrap(), solve(&c, &cfg).unwrap()] {
            let mut stage_start = 0;
            for &end in &rep.stage_ends {
                let t = &rep.objective_trace[stage_start..end];
                assert!(t.windows(2).all(|p| p[1] <= p[0] + 1e-10));
                stage_start = end;
            }
        }
    }
}

#[test]
fn reported_portfolios_are_feasible() {
    for seed in 0..6 {
        let pn = panel(14, 50, 4, seed);
        let part = if seed % 2 == 0 {
            sector_partition(&pn, 2, &["S1"]).unwrap()
        } else {
            GroupPartition::single(14, 3).unwrap()
        };
        let m = markowitz(estimate_moments(&pn), 0.5, part.clone());
        let c = Problem::new(Model::cvar(&pn, CvarParams::new(0.8)), part.clone()).unwrap();
        for rep in [solve(&m, &SolverConfig::default()).unwrap(), solve(&c, &SolverConfig::default()).unwrap()] {
            assert!(violations(&rep.weights, &part).is_empty(), "{:?}", violations(&rep.weights, &part));
            let w = &rep.state.w;
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            assert_eq!(project_omega(&rep.state.v, &part), rep.state.v);
        }
    }
}

#[test]
fn relaxation_gap_shrinks_below_threshold() {
    let pn = panel(10, 80, 2, 3);
    let p = markowitz(estimate_moments(&pn), 0.1, GroupPartition::single(10, 5).unwrap());
    let cfg = SolverConfig::default();
    let r = solve(&p, &cfg).unwrap();
    assert_eq!(r.stage_gaps.len(), cfg.nu_schedule.len());
    assert!(r.relax_gap < cfg.gap_threshold);
}

#[test]
fn identical_inputs_identical_reports() {
    let pn = panel(10, 60, 2, 12);
    let c = Problem::new(Model::cvar(&pn, CvarParams::new(0.9)), GroupPartition::single(10, 4).unwrap()).unwrap();
    let cfg = SolverConfig { seed: 3, ..SolverConfig::default() };
    let a = without_clock(solve(&c, &cfg).unwrap());
    let b = without_clock(solve(&c, &cfg).unwrap());
    assert_eq!(a, b);
}

#[test]
fn bad_config_lists_problems() {
    let cfg = SolverConfig { nu_schedule: vec![], tol: 0.0, max_iters: 0, ..SolverConfig::default() };
    match cfg.validate() {
        Err(ccpo_core::Error::Validation(v)) => assert_eq!(v.len(), 3),
        other => panic!("{other:?}"),
    }
}
