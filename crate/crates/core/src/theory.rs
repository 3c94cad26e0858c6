//! Expected query counts for random search on the sparse linear problem.
//!
//! Setting: `d` elements carry distinct weights; a solution is any set of `k`
//! elements drawn from the `m` lightest ones. Random search keeps a set `M` of
//! `k` elements and proposes swapping a uniform `p` in `M` for a uniform `q`
//! outside, accepting whenever `w_q < w_p`. Because accepted swaps can never
//! evict an element that is already among the `m` lightest, the overlap
//! `|M ∩ lightest-m|` only grows, and the expected number of proposals until
//! `M` is fully contained has the closed form
//!
//! ```text
//! E[queries] = (d - k) * k * sum_{i=0}^{k-1} 1 / ((k - i) * (m - i))
//! ```
//!
//! with the equivalent harmonic-number form and a simple upper bound for
//! `m > k`. A Monte-Carlo simulator cross-checks the formulas.

use std::fmt;

use rand::Rng;

use crate::rng::RngStream;

/// Invalid `(d, k, m)` combinations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadProblem {
    pub reason: String,
}

impl fmt::Display for BadProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid problem: {}", self.reason)
    }
}

impl std::error::Error for BadProblem {}

fn validate(d: u64, k: u64, m: u64) -> Result<(), BadProblem> {
    if k < 1 {
        return Err(BadProblem { reason: "k must be at least 1".into() });
    }
    if k > m {
        return Err(BadProblem { reason: format!("k = {k} exceeds m = {m}") });
    }
    if m > d {
        return Err(BadProblem { reason: format!("m = {m} exceeds d = {d}") });
    }
    Ok(())
}

/// `H_n = sum_{j=1}^{n} 1/j`, accumulated from the smallest term for accuracy.
pub fn harmonic(n: u64) -> f64 {
    let mut acc = 0.0;
    for j in (1..=n).rev() {
        acc += 1.0 / j as f64;
    }
    acc
}

/// The exact expected query count.
pub fn expected_queries_exact(d: u64, k: u64, m: u64) -> Result<f64, BadProblem> {
    validate(d, k, m)?;
    let mut sum = 0.0;
    for i in 0..k {
        sum += 1.0 / (((k - i) * (m - i)) as f64);
    }
    Ok(((d - k) * k) as f64 * sum)
}

/// The same quantity via harmonic numbers (requires `m > k`):
/// `(d-k) * k / (m-k) * (H_k - H_m + H_{m-k})`.
pub fn expected_queries_harmonic(d: u64, k: u64, m: u64) -> Result<f64, BadProblem> {
    validate(d, k, m)?;
    if m == k {
        return Err(BadProblem { reason: "harmonic form requires m > k".into() });
    }
    let factor = ((d - k) * k) as f64 / (m - k) as f64;
    Ok(factor * (harmonic(k) - harmonic(m) + harmonic(m - k)))
}

/// A closed-form upper bound: `(d-k) * k * (ln k + 2) / (m-k)` for `m > k`;
/// for `m = k` the sum telescopes under `pi^2 / 6`.
pub fn expected_queries_bound(d: u64, k: u64, m: u64) -> Result<f64, BadProblem> {
    validate(d, k, m)?;
    let dk = ((d - k) * k) as f64;
    if m == k {
        Ok(dk * std::f64::consts::PI.powi(2) / 6.0)
    } else {
        Ok(dk * ((k as f64).ln() + 2.0) / (m - k) as f64)
    }
}

/// Monte-Carlo estimate of the query count distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub trials: u64,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    /// Standard error of the mean.
    pub std_error: f64,
}

/// Simulates the random-search walk `trials` times and reports the empirical
/// query statistics.
///
/// When `weights` is `None`, each trial draws fresh iid uniform weights;
/// otherwise the given weights are reused (ties broken towards lower
/// indices). Each trial starts from the `k` heaviest elements — the worst
/// case the closed form assumes — so with `d - m >= k` the initial overlap
/// with the solution set is empty.
pub fn simulate_topk(
    d: u64,
    k: u64,
    m: u64,
    trials: u64,
    weights: Option<&[f64]>,
    rng: &RngStream,
) -> Result<SimulationReport, BadProblem> {
    validate(d, k, m)?;
    if trials == 0 {
        return Err(BadProblem { reason: "at least one trial is required".into() });
    }
    if let Some(w) = weights {
        if w.len() != d as usize {
            return Err(BadProblem {
                reason: format!("{} weights for d = {d}", w.len()),
            });
        }
    }
    let (d, k, m) = (d as usize, k as usize, m as usize);

    let mut counts = Vec::with_capacity(trials as usize);
    let mut fresh_weights = Vec::new();
    for trial in 0..trials {
        let trial_rng = rng.derive("trial", trial);
        let w: &[f64] = match weights {
            Some(w) => w,
            None => {
                let mut wrng = trial_rng.substream("weights");
                fresh_weights.clear();
                fresh_weights.extend((0..d).map(|_| wrng.gen::<f64>()));
                &fresh_weights
            }
        };

        // Rank elements by (weight, index): the first m are the solution
        // pool, the last k seed the search.
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| w[a].partial_cmp(&w[b]).unwrap().then(a.cmp(&b)));
        let mut in_target = vec![false; d];
        for &e in &order[..m] {
            in_target[e] = true;
        }
        let mut inside: Vec<usize> = order[d - k..].to_vec();
        let mut outside: Vec<usize> = order[..d - k].to_vec();

        let mut overlap = inside.iter().filter(|&&e| in_target[e]).count();
        let mut queries = 0u64;
        let mut walk = trial_rng.substream("walk");
        while overlap < k {
            let pi = walk.gen_range(0..k);
            let qi = walk.gen_range(0..d - k);
            queries += 1;
            let (p, q) = (inside[pi], outside[qi]);
            if w[q] < w[p] {
                inside[pi] = q;
                outside[qi] = p;
                overlap = overlap + usize::from(in_target[q]) - usize::from(in_target[p]);
            }
        }
        counts.push(queries as f64);
    }

    let n = trials as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = if trials > 1 {
        counts.iter().map(|&c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std_dev = var.sqrt();
    Ok(SimulationReport { trials, mean, std_dev, std_error: std_dev / n.sqrt() })
}

/// One row of the query-scaling table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub m: u64,
    pub exact: f64,
    /// Upper bound; `None` for `m = k` rows when the simple bound does not
    /// apply (the CSV leaves the cell empty).
    pub bound: Option<f64>,
    /// Queries a dense exhaustive scan would need.
    pub naive: u64,
}

/// Expected-query scaling across solution-pool sizes `ms` at fixed `(d, k)`.
pub fn scaling_table(d: u64, k: u64, ms: &[u64]) -> Result<Vec<ScalingRow>, BadProblem> {
    let mut rows = Vec::with_capacity(ms.len());
    for &m in ms {
        let exact = expected_queries_exact(d, k, m)?;
        let bound = if m > k { Some(expected_queries_bound(d, k, m)?) } else { None };
        rows.push(ScalingRow { m, exact, bound, naive: d });
    }
    Ok(rows)
}

/// Writes a scaling table as CSV (`m,exact,bound,naive`).
pub fn write_scaling_csv(rows: &[ScalingRow], out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "m,exact,bound,naive")?;
    for row in rows {
        let bound = row.bound.map(|b| b.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", row.m, row.exact, bound, row.naive)?;
    }
    Ok(())
}
