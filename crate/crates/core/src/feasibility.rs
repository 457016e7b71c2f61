//! Standalone feasibility check for reported portfolios.
//!
//! Deliberately written without the projection code so it can be used to
//! audit it.

use crate::projection::GroupPartition;

/// Slack on the full-investment sum and on group budgets.
pub const SUM_TOL: f64 = 1e-10;

/// Every way `w` fails to lie in the simplex intersected with the group set.
/// Empty when feasible.
pub fn violations(w: &[f64], partition: &GroupPartition) -> Vec<String> {
    let mut out = Vec::new();
    if w.len() != partition.n() {
        out.push(format!("length {} but partition covers {} assets", w.len(), partition.n()));
        return out;
    }
    for (i, &x) in w.iter().enumerate() {
        if !x.is_finite() {
            out.push(format!("weight {i} is not finite"));
        } else if x < 0.0 {
            out.push(format!("weight {i} is negative ({x:e})"));
        }
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        out.push(format!("weights sum to {total} instead of 1"));
    }
    for g in partition.groups() {
        let mut sum = 0.0;
        let mut held = 0;
        for &i in &g.indices {
            sum += w[i];
            if w[i] != 0.0 {
                held += 1;
            }
        }
        if held > g.k {
            out.push(format!("group {} holds {held} assets, cap is {}", g.name, g.k));
        }
        if sum < g.p - SUM_TOL || sum > g.q + SUM_TOL {
            out.push(format!(
                "group {} has budget {sum}, outside [{}, {}]",
                g.name, g.p, g.q
            ));
        }
    }
    out
}

pub fn is_feasible(w: &[f64], partition: &GroupPartition) -> bool {
    violations(w, partition).is_empty()
}
