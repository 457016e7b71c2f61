//! Euclidean projections onto the simplex, the top-k set, budget intervals
//! and the group-structured sparse set `Ω`.
//!
//! `Ω` is the set of weight vectors whose restriction to every group `i`
//! satisfies `w_i >= 0`, `p_i <= 1ᵀw_i <= q_i` and `‖w_i‖₀ <= k_i`.
//! Projecting onto it splits into one independent problem per group: keep
//! the `k_i` largest entries, then project those onto the budget interval.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_SLACK: f64 = 1e-10;

/// Budget and cardinality bounds for one group of assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    /// Global asset indices, strictly increasing.
    pub indices: Vec<usize>,
    /// Lower bound on the group's total weight.
    pub p: f64,
    /// Upper bound on the group's total weight.
    pub q: f64,
    /// Maximum number of nonzero weights in the group.
    pub k: usize,
}

impl GroupSpec {
    pub fn new(name: impl Into<String>, indices: Vec<usize>, p: f64, q: f64, k: usize) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            indices,
            p,
            q,
            k,
        };
        let problems = spec.violations();
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(Error::Validation(problems))
        }
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let name = &self.name;
        if !(0.0..=1.0).contains(&self.p) || !(0.0..=1.0).contains(&self.q) || self.p > self.q {
            out.push(format!(
                "group `{name}`: need 0 <= p <= q <= 1, got p={}, q={}",
                self.p, self.q
            ));
        }
        if self.indices.is_empty() {
            out.push(format!("group `{name}` has no assets"));
        } else if self.k == 0 || self.k > self.indices.len() {
            out.push(format!(
                "group `{name}`: k={} must be in 1..={}",
                self.k,
                self.indices.len()
            ));
        }
        if self.indices.windows(2).any(|w| w[0] >= w[1]) {
            out.push(format!("group `{name}`: indices must be strictly increasing"));
        }
        out
    }

    /// Whether the bounds restrict nothing beyond nonnegativity.
    pub fn is_unbounded(&self) -> bool {
        self.p <= 0.0 && self.q >= 1.0 && self.k >= self.indices.len()
    }
}

/// An exact partition of `0..n` into groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    groups: Vec<GroupSpec>,
    n: usize,
}

impl GroupPartition {
    pub fn new(groups: Vec<GroupSpec>, n: usize) -> Result<Self> {
        let mut problems: Vec<String> = groups.iter().flat_map(GroupSpec::violations).collect();
        let mut owner = vec![None::<usize>; n];
        for (g, spec) in groups.iter().enumerate() {
            for &i in &spec.indices {
                if i >= n {
                    problems.push(format!("group `{}`: index {i} out of range 0..{n}", spec.name));
                    continue;
                }
                if let Some(prev) = owner[i] {
                    problems.push(format!(
                        "asset {i} belongs to both `{}` and `{}`",
                        groups[prev].name, spec.name
                    ));
                }
                owner[i] = Some(g);
            }
        }
        let missing: Vec<usize> = (0..n).filter(|&i| owner[i].is_none()).collect();
        if !missing.is_empty() {
            problems.push(format!("assets {missing:?} are not in any group"));
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let sum_p: f64 = groups.iter().map(|g| g.p).sum();
        let sum_q: f64 = groups.iter().map(|g| g.q).sum();
        if sum_p > 1.0 + SUM_SLACK {
            return Err(Error::Infeasible(format!(
                "sum of lower budgets is {sum_p}, exceeds 1"
            )));
        }
        if sum_q < 1.0 - SUM_SLACK {
            return Err(Error::Infeasible(format!(
                "sum of upper budgets is {sum_q}, below 1"
            )));
        }
        Ok(Self { groups, n })
    }

    /// One group holding every asset, budget `[0, 1]`, at most `k` holdings.
    pub fn single(n: usize, k: usize) -> Result<Self> {
        Self::new(vec![GroupSpec::new("all", (0..n).collect(), 0.0, 1.0, k)?], n)
    }

    /// Resolve a ticker-based config against an asset list.
    pub fn from_config(config: &[GroupConfig], tickers: &[String]) -> Result<Self> {
        let lookup: HashMap<&str, usize> =
            tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let mut problems = Vec::new();
        let mut groups = Vec::new();
        for g in config {
            let mut idx = Vec::with_capacity(g.tickers.len());
            for t in &g.tickers {
                match lookup.get(t.as_str()) {
                    Some(&i) => idx.push(i),
                    None => problems.push(format!("group `{}`: unknown ticker `{t}`", g.name)),
                }
            }
            idx.sort_unstable();
            groups.push(GroupSpec {
                name: g.name.clone(),
                indices: idx,
                p: g.p,
                q: g.q,
                k: g.k,
            });
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Self::new(groups, tickers.len())
    }

    pub fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// True when the partition is a single group of all assets with budget `[0, 1]`.
    pub fn is_global(&self) -> bool {
        self.groups.len() == 1 && self.groups[0].p <= 0.0 && self.groups[0].q >= 1.0
    }

    pub fn to_config(&self, tickers: &[String]) -> Vec<GroupConfig> {
        self.groups
            .iter()
            .map(|g| GroupConfig {
                name: g.name.clone(),
                tickers: g.indices.iter().map(|&i| tickers[i].clone()).collect(),
                p: g.p,
                q: g.q,
                k: g.k,
            })
            .collect()
    }
}

/// One entry of the group partition config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub name: String,
    pub tickers: Vec<String>,
    pub p: f64,
    pub q: f64,
    pub k: usize,
}

fn desc_then_index(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Indices of the `k` largest entries by signed value; ties go to the lower index.
/// The returned indices are in ascending order.
pub fn top_k_indices(x: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<(usize, f64)> = x.iter().copied().enumerate().collect();
    order.sort_by(|&a, &b| desc_then_index(a, b));
    let mut idx: Vec<usize> = order.iter().take(k).map(|&(i, _)| i).collect();
    idx.sort_unstable();
    idx
}

/// Projection onto `{z >= 0, 1ᵀz = c}` by sort and threshold.
pub fn project_simplex(x: &[f64], c: f64) -> Vec<f64> {
    debug_assert!(c > 0.0);
    if x.is_empty() {
        return Vec::new();
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - c) / (j + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    x.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Keep the `k` entries largest in absolute value, zero the rest.
pub fn project_topk(x: &[f64], k: usize) -> Vec<f64> {
    let mut order: Vec<(usize, f64)> = x.iter().map(|v| v.abs()).enumerate().collect();
    order.sort_by(|&a, &b| desc_then_index(a, b));
    let mut out = vec![0.0; x.len()];
    for &(i, _) in order.iter().take(k) {
        out[i] = x[i];
    }
    out
}

/// Projection onto `{z >= 0, p <= 1ᵀz <= q}`.
///
/// With `s` the sum of the positive entries of `u`: below `p` the answer is the
/// projection onto the `p`-simplex, above `q` onto the `q`-simplex, and in
/// between it is the positive part of `u`.
pub fn project_box_sum(u: &[f64], p: f64, q: f64) -> Vec<f64> {
    let s: f64 = u.iter().filter(|&&v| v > 0.0).sum();
    if s < p {
        project_simplex(u, p)
    } else if s <= q {
        u.iter().map(|&v| v.max(0.0)).collect()
    } else if q > 0.0 {
        project_simplex(u, q)
    } else {
        vec![0.0; u.len()]
    }
}

/// Projection of one group's weights onto
/// `{z >= 0, p <= 1ᵀz <= q, ‖z‖₀ <= k}`.
///
/// Selects the `k` largest entries by signed value. Unlike [`project_topk`],
/// magnitude is not used: the target set is nonnegative, so a large negative
/// entry can never be a better choice than a smaller nonnegative one.
pub fn project_group(w: &[f64], spec: &GroupSpec) -> Vec<f64> {
    debug_assert_eq!(w.len(), spec.indices.len());
    let keep = top_k_indices(w, spec.k.min(w.len()));
    let selected: Vec<f64> = keep.iter().map(|&i| w[i]).collect();
    let projected = project_box_sum(&selected, spec.p, spec.q);
    let mut out = vec![0.0; w.len()];
    for (&i, v) in keep.iter().zip(projected) {
        out[i] = v;
    }
    out
}

/// Projection onto `Ω`: [`project_group`] on every group, scattered back.
pub fn project_omega(w: &[f64], partition: &GroupPartition) -> Vec<f64> {
    debug_assert_eq!(w.len(), partition.n());
    let mut out = vec![0.0; w.len()];
    let mut sub = Vec::new();
    for g in partition.groups() {
        sub.clear();
        sub.extend(g.indices.iter().map(|&i| w[i]));
        for (&i, v) in g.indices.iter().zip(project_group(&sub, g)) {
            out[i] = v;
        }
    }
    out
}

/// Projection onto `{w in Δ₁, ‖w‖₀ <= k}`: the `k` largest entries (signed)
/// projected onto the unit simplex, everything else zero.
pub fn project_sparse_simplex(x: &[f64], k: usize) -> Vec<f64> {
    let keep = top_k_indices(x, k.min(x.len()));
    let selected: Vec<f64> = keep.iter().map(|&i| x[i]).collect();
    let mut out = vec![0.0; x.len()];
    for (&i, v) in keep.iter().zip(project_simplex(&selected, 1.0)) {
        out[i] = v;
    }
    out
}

/// The unit simplex on a fixed support, intersected with the group budget
/// intervals. Works in reduced coordinates: position `j` is asset `support[j]`.
#[derive(Debug, Clone)]
pub struct BudgetedSimplex {
    dim: usize,
    /// (reduced positions, p, q) for every group touching the support.
    groups: Vec<(Vec<usize>, f64, f64)>,
    plain: bool,
}

impl BudgetedSimplex {
    pub fn new(partition: &GroupPartition, support: &[usize]) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::validation("support must be nonempty"));
        }
        let mut pos = vec![usize::MAX; partition.n()];
        for (j, &i) in support.iter().enumerate() {
            if i >= partition.n() || pos[i] != usize::MAX {
                return Err(Error::validation(format!("invalid support index {i}")));
            }
            pos[i] = j;
        }
        let mut groups = Vec::new();
        let mut lo = 0.0;
        let mut hi = 0.0;
        for g in partition.groups() {
            let members: Vec<usize> = g
                .indices
                .iter()
                .filter(|&&i| pos[i] != usize::MAX)
                .map(|&i| pos[i])
                .collect();
            if members.is_empty() {
                if g.p > 0.0 {
                    return Err(Error::Infeasible(format!(
                        "group `{}` needs weight {} but has no assets in the support",
                        g.name, g.p
                    )));
                }
                continue;
            }
            lo += g.p;
            hi += g.q;
            groups.push((members, g.p, g.q));
        }
        if lo > 1.0 + SUM_SLACK || hi < 1.0 - SUM_SLACK {
            return Err(Error::Infeasible(format!(
                "group budgets on the support allow total weight in [{lo}, {hi}]"
            )));
        }
        let plain = groups.iter().all(|(_, p, q)| *p <= 0.0 && *q >= 1.0);
        Ok(Self {
            dim: support.len(),
            groups,
            plain,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(reduced positions, p, q)` for each group that meets the support.
    pub fn budgets(&self) -> &[(Vec<usize>, f64, f64)] {
        &self.groups
    }

    fn project_shifted(&self, x: &[f64], theta: f64, out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        let mut buf = Vec::new();
        for (members, p, q) in &self.groups {
            buf.clear();
            buf.extend(members.iter().map(|&j| x[j] - theta));
            for (&j, v) in members.iter().zip(project_box_sum(&buf, *p, *q)) {
                out[j] = v;
                total += v;
            }
        }
        total
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        if self.plain {
            return project_simplex(x, 1.0);
        }
        // The total weight after per-group projection of x - θ is continuous
        // and nonincreasing in θ; find the θ where it equals one.
        let mut out = vec![0.0; self.dim];
        let (min, max) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mut lo = min - 1.0;
        let mut hi = max;
        let mut s_lo = self.project_shifted(x, lo, &mut out);
        let mut s_hi = self.project_shifted(x, hi, &mut out);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let s = self.project_shifted(x, mid, &mut out);
            if s >= 1.0 {
                lo = mid;
                s_lo = s;
            } else {
                hi = mid;
                s_hi = s;
            }
        }
        let theta = if s_lo > s_hi {
            lo + (s_lo - 1.0) / (s_lo - s_hi) * (hi - lo)
        } else {
            lo
        };
        self.project_shifted(x, theta, &mut out);
        out
    }
}
