//! Ground truth by brute force: every size-k support is re-optimized and the
//! best kept. Also the randomized "keep guessing supports" baseline used for
//! timing comparisons.

use std::collections::HashSet;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{restricted_solve, Problem};

/// Refuse enumerations larger than this unless told otherwise.
pub const DEFAULT_CAP: u128 = 2_000_000;

/// Subsets handed to the thread pool at a time.
const BATCH: usize = 1024;

/// Slack when checking whether a random support reached the target.
pub const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_support: Vec<usize>,
    pub best_value: f64,
    pub best_w: Vec<f64>,
    /// Optimum on each support, in colexicographic subset order.
    pub all_values: Option<Vec<f64>>,
    pub subsets_evaluated: u64,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Advance `c` (strictly increasing, values below `n`) to the next subset in
/// colexicographic order. Returns false after the last one.
pub fn next_colex(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in 0..k {
        let limit = if i + 1 < k { c[i + 1] } else { n };
        if c[i] + 1 < limit {
            c[i] += 1;
            for (j, slot) in c.iter_mut().enumerate().take(i) {
                *slot = j;
            }
            return true;
        }
    }
    false
}

fn global_k(problem: &Problem) -> Result<usize> {
    if !problem.partition.is_global() {
        return Err(Error::validation(
            "brute force needs a single group covering every asset with an open budget",
        ));
    }
    Ok(problem.partition.groups()[0].k)
}

/// Solve the restricted problem on every size-k support, `k` being the cap of
/// the problem's single group.
pub fn exhaustive_search(problem: &Problem, cap: u128, keep_values: bool) -> Result<OracleResult> {
    let n = problem.n_assets();
    let k = global_k(problem)?;
    let needed = binomial(n, k);
    if needed > cap {
        return Err(Error::CapExceeded { needed, cap });
    }

    let mut values = Vec::with_capacity(if keep_values { needed as usize } else { 0 });
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    let mut evaluated = 0u64;
    let mut cursor: Vec<usize> = (0..k).collect();
    let mut more = true;
    while more {
        let mut batch = Vec::with_capacity(BATCH);
        while more && batch.len() < BATCH {
            batch.push(cursor.clone());
            more = next_colex(&mut cursor, n);
        }
        let solved: Vec<(Vec<f64>, f64)> = batch
            .par_iter()
            .map(|s| restricted_solve(problem, s))
            .collect::<Result<_>>()?;
        for (support, (w, value)) in batch.into_iter().zip(solved) {
            evaluated += 1;
            if keep_values {
                values.push(value);
            }
            if best.as_ref().is_none_or(|(b, _, _)| value < *b) {
                best = Some((value, support, w));
            }
        }
    }
    let (best_value, best_support, best_w) = best.expect("at least one subset");
    Ok(OracleResult {
        best_support,
        best_value,
        best_w,
        all_values: keep_values.then_some(values),
        subsets_evaluated: evaluated,
    })
}

/// Draw distinct random supports, solving each, until one reaches
/// `target + MATCH_TOL` or `time_cap` passes. Returns elapsed seconds and
/// whether the target was hit. Stops early once every support was tried.
pub fn randomized_search_until(
    problem: &Problem,
    target: f64,
    time_cap: Duration,
    seed: u64,
) -> Result<(f64, bool)> {
    let n = problem.n_assets();
    let k = global_k(problem)?;
    let total = binomial(n, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let start = Instant::now();
    loop {
        if seen.len() as u128 >= total {
            return Ok((start.elapsed().as_secs_f64(), false));
        }
        let mut s = sample(&mut rng, n, k).into_vec();
        s.sort_unstable();
        if !seen.insert(s.clone()) {
            continue;
        }
        let (_, value) = restricted_solve(problem, &s)?;
        if value <= target + MATCH_TOL {
            return Ok((start.elapsed().as_secs_f64(), true));
        }
        if start.elapsed() >= time_cap {
            return Ok((start.elapsed().as_secs_f64(), false));
        }
    }
}

/// `subset_rank,value` rows, preceded by `# comment` lines.
pub fn write_histogram_csv<W: Write>(mut out: W, comment: &str, values: &[f64]) -> Result<()> {
    write_comment(&mut out, comment)?;
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["subset_rank", "value"])?;
    for (rank, v) in values.iter().enumerate() {
        csv.write_record([rank.to_string(), format!("{v:.17e}")])?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub trial: usize,
    pub method: String,
    pub elapsed_seconds: f64,
    pub matched: bool,
}

pub fn write_timing_csv<W: Write>(mut out: W, comment: &str, rows: &[TimingRecord]) -> Result<()> {
    write_comment(&mut out, comment)?;
    let mut csv = csv::Writer::from_writer(out);
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

pub(crate) fn write_comment<W: Write>(out: &mut W, comment: &str) -> Result<()> {
    for line in comment.lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(10, 5), 252);
        assert_eq!(binomial(30, 10), 30_045_015);
        assert_eq!(binomial(4, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(60, 30), 118_264_581_564_861_424);
        assert_eq!(binomial(400, 200), u128::MAX);
    }

    #[test]
    fn colex_order_and_count() {
        let mut c = vec![0, 1];
        let mut seen = vec![c.clone()];
        while next_colex(&mut c, 4) {
            seen.push(c.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![1, 2],
                vec![0, 3],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        let mut c: Vec<usize> = (0..5).collect();
        let mut count = 1;
        while next_colex(&mut c, 12) {
            count += 1;
        }
        assert_eq!(count as u128, binomial(12, 5));
    }

    #[test]
    fn timing_csv_layout() {
        let mut buf = Vec::new();
        let rows = [TimingRecord {
            trial: 0,
            method: "palm".into(),
            elapsed_seconds: 0.5,
            matched: true,
        }];
        write_timing_csv(&mut buf, "seed=1", &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# seed=1\ntrial,method,elapsed_seconds,matched\n0,palm,0.5,true\n"
        );
    }
}
