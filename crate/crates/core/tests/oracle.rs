mod common;

use std::time::Duration;

use ccpo_core::data::{estimate_moments, synth_returns, Moments, SectorLayout, SynthParams};
use ccpo_core::objectives::{CvarParams, MarkowitzParams};
use ccpo_core::oracle::{binomial, exhaustive_search, randomized_search_until, write_histogram_csv, DEFAULT_CAP};
use ccpo_core::projection::GroupPartition;
use ccpo_core::solver::{restricted_solve, Model, Problem};
use ccpo_core::Error;
use common::rng;
use nalgebra::DMatrix;

fn markowitz(moments: Moments, gamma: f64, k: usize) -> Problem {
    let n = moments.mu.len();
    let params = MarkowitzParams { gamma_return: gamma, lambda_ridge: 0.0 };
    Problem::new(Model::markowitz(moments, params), GroupPartition::single(n, k).unwrap()).unwrap()
}

fn synthetic(n: usize, seed: u64) -> Moments {
    let panel = synth_returns(n, 120, &SectorLayout::Even(2), &SynthParams::default(), seed).unwrap();
    estimate_moments(&panel)
}

#[test]
fn full_support_is_the_only_subset() {
    let p = markowitz(synthetic(3, 1), 0.1, 3);
    let r = exhaustive_search(&p, DEFAULT_CAP, true).unwrap();
    assert_eq!(r.subsets_evaluated, 1);
    let (w, v) = restricted_solve(&p, &[0, 1, 2]).unwrap();
    assert_eq!((r.best_value, r.best_w), (v, w));
    assert_eq!(r.all_values.unwrap(), vec![v]);
}

#[test]
fn k1_diagonal_picks_smallest_variance() {
    let m = Moments {
        mu: vec![0.0; 4],
        sigma: DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[4.0, 3.0, 2.0, 1.0])),
    };
    let r = exhaustive_search(&markowitz(m, 0.0, 1), DEFAULT_CAP, false).unwrap();
    assert_eq!(r.best_support, vec![3]);
    assert_eq!(r.best_value, 1.0);
    assert!(r.all_values.is_none());
}

#[test]
fn histogram_has_binomial_entries() {
    let p = markowitz(synthetic(9, 2), 0.1, 4);
    let r = exhaustive_search(&p, DEFAULT_CAP, true).unwrap();
    let values = r.all_values.unwrap();
    assert_eq!(values.len() as u128, binomial(9, 4));
    assert_eq!(values.iter().copied().fold(f64::INFINITY, f64::min), r.best_value);
    let mut buf = Vec::new();
    write_histogram_csv(&mut buf, "seed=2", &values).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2 + values.len());
}

#[test]
fn best_bounds_random_subsets() {
    let p = markowitz(synthetic(10, 3), 0.2, 5);
    let best = exhaustive_search(&p, DEFAULT_CAP, false).unwrap().best_value;
    let mut g = rng(3);
    for _ in 0..50 {
        let mut s = rand::seq::index::sample(&mut g, 10, 5).into_vec();
        s.sort_unstable();
        assert!(best <= restricted_solve(&p, &s).unwrap().1);
    }
}

#[test]
fn relabeling_assets_keeps_best_value() {
    let m = synthetic(8, 4);
    let base = exhaustive_search(&markowitz(m.clone(), 0.1, 3), DEFAULT_CAP, false).unwrap();
    let perm = [5, 2, 7, 0, 3, 6, 1, 4];
    let pm = m.select_assets(&perm);
    let moved = exhaustive_search(&markowitz(pm, 0.1, 3), DEFAULT_CAP, false).unwrap();
    assert!((moved.best_value - base.best_value).abs() <= 1e-10);
    let mut mapped: Vec<usize> = moved.best_support.iter().map(|&j| perm[j]).collect();
    mapped.sort_unstable();
    assert_eq!(mapped, base.best_support);
}

#[test]
fn cvar_oracle_runs() {
    let panel = synth_returns(6, 40, &SectorLayout::Even(2), &SynthParams::default(), 5).unwrap();
    let p = Problem::new(Model::cvar(&panel, CvarParams::new(0.9)), GroupPartition::single(6, 2).unwrap()).unwrap();
    let r = exhaustive_search(&p, DEFAULT_CAP, true).unwrap();
    assert_eq!(r.subsets_evaluated, 15);
    assert_eq!(r.best_support.len(), 2);
}

#[test]
fn cap_and_grouping_refused() {
    let p = markowitz(synthetic(10, 6), 0.1, 5);
    assert!(matches!(exhaustive_search(&p, 100, false), Err(Error::CapExceeded { needed: 252, cap: 100 })));
    let panel = synth_returns(4, 20, &SectorLayout::Even(2), &SynthParams::default(), 6).unwrap();
    let grouped = ccpo_core::experiments::sector_partition(&panel, 1, &[]).unwrap();
    let g = Problem::new(
        Model::markowitz(estimate_moments(&panel), MarkowitzParams::default()),
        grouped,
    )
    .unwrap();
    assert!(exhaustive_search(&g, DEFAULT_CAP, false).is_err());
}

#[test]
fn vacuous_and_unreachable_targets() {
    let p = markowitz(synthetic(8, 7), 0.1, 3);
    let (t, hit) = randomized_search_until(&p, f64::INFINITY, Duration::from_secs(5), 1).unwrap();
    assert!(hit && t < 1.0);
    let best = exhaustive_search(&p, DEFAULT_CAP, false).unwrap().best_value;
    let (t, hit) = randomized_search_until(&p, best - 1.0, Duration::from_millis(200), 1).unwrap();
    assert!(!hit);
    // 56 subsets are exhausted long before the cap
    assert!(t < 5.0);
}
