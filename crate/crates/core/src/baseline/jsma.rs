//! Saliency-guided greedy flipping (JSMA-style baseline on the attack loss).
//!
//! Every round ranks input groups by the gradient of the attack loss and
//! rebuilds a candidate from the original input:
//!
//! - images: the `k` pixels with the largest absolute gradient mass (summed
//!   over channels) have each channel pushed to its descent corner — 0 where
//!   the gradient is positive, 1 where it is negative;
//! - binary features: up to `k` addable features with the largest strictly
//!   positive descent gain (negative gradient) are set to 1; with no positive
//!   gain the candidate stays at the original input.
//!
//! White-box rounds read the gradient at the current candidate; estimation
//! rounds probe at the original input throughout and accumulate the running
//! estimate. Success checks are metered oracle queries by default;
//! `count_success_checks = false` reproduces accounting schemes that let
//! candidate evaluations ride along for free.

use crate::engine::{AttackOutcome, AttackTrace, TraceRecord};
use crate::loss::AttackGoal;
use crate::model::ModelOracle;
use crate::rng::RngStream;

use super::{estimate_gradient, snap, AttackInput, GradEstConfig, GradientSource, InputGradient};

/// Settings for [`jsma_attack`].
#[derive(Debug, Clone, Copy)]
pub struct JsmaConfig {
    /// Sparsity budget: pixels for images, features for binary inputs.
    pub k: usize,
    pub source: GradientSource,
    /// Meter candidate evaluations like any other query (the default).
    pub count_success_checks: bool,
}

impl JsmaConfig {
    pub fn white_box(k: usize) -> Self {
        JsmaConfig { k, source: GradientSource::WhiteBox, count_success_checks: true }
    }

    /// Image attack from finite differences: 5 probes (10 queries) per round,
    /// carried estimate.
    pub fn estimated_image(k: usize) -> Self {
        JsmaConfig {
            k,
            source: GradientSource::Estimated {
                cfg: GradEstConfig { probes: 5, eta: 0.01 },
                carry_prior: true,
            },
            count_success_checks: true,
        }
    }

    /// Add-only binary attack from finite differences.
    pub fn estimated_malware(k: usize) -> Self {
        JsmaConfig {
            k,
            source: GradientSource::Estimated {
                cfg: GradEstConfig { probes: 5, eta: 1.0 },
                carry_prior: true,
            },
            count_success_checks: true,
        }
    }
}

/// Runs the attack until success, the query budget is spent, or the oracle
/// refuses further queries.
pub fn jsma_attack<M: InputGradient>(
    oracle: &ModelOracle<M>,
    goal: AttackGoal,
    input: AttackInput<'_>,
    cfg: &JsmaConfig,
    budget: u64,
    rng: &RngStream,
) -> AttackOutcome {
    let origin = input.origin();
    assert_eq!(origin.len(), oracle.model().input_len(), "input length mismatch");
    let channels = input.channels();
    let groups = input.group_count();
    let movable = input.movable();

    let mut probe_rng = rng.substream("probes");
    let mut prior = vec![0.0; origin.len()];
    let mut current = origin.clone();
    let mut adversarial = snap(&origin);
    let mut best_loss = f64::INFINITY;
    let mut records = Vec::new();
    let mut queries = 0u64;
    let mut success = false;
    let mut success_query = None;

    let check_cost = u64::from(cfg.count_success_checks);
    let round_cost = match cfg.source {
        GradientSource::WhiteBox => check_cost,
        GradientSource::Estimated { cfg: ge, .. } => 2 * ge.probes as u64 + check_cost,
    };

    // The loop bound keeps free-running modes (white-box with unmetered
    // checks) from spinning forever.
    for _ in 0..budget {
        if queries + round_cost > budget {
            break;
        }
        let gradient = match cfg.source {
            GradientSource::WhiteBox => oracle.model().goal_gradient(&snap(&current), goal),
            GradientSource::Estimated { cfg: ge, carry_prior } => {
                let start = if carry_prior { prior.clone() } else { vec![0.0; origin.len()] };
                let est = estimate_gradient(oracle, goal, &origin, start, ge, &mut probe_rng);
                queries += est.queries;
                if est.exhausted {
                    break;
                }
                if carry_prior {
                    prior.clone_from(&est.gradient);
                }
                est.gradient
            }
        };

        let mut next = origin.clone();
        match &movable {
            None => {
                // Rank pixels by total gradient mass; ties toward the lowest
                // index.
                let mass = |g: usize| -> f64 {
                    gradient[g * channels..(g + 1) * channels].iter().map(|v| v.abs()).sum()
                };
                let mut order: Vec<usize> = (0..groups).collect();
                order.sort_by(|&a, &b| mass(b).partial_cmp(&mass(a)).unwrap().then(a.cmp(&b)));
                for &g in order.iter().take(cfg.k) {
                    for c in 0..channels {
                        let at = g * channels + c;
                        if gradient[at] > 0.0 {
                            next[at] = 0.0;
                        } else if gradient[at] < 0.0 {
                            next[at] = 1.0;
                        }
                    }
                }
            }
            Some(indices) => {
                // Keep only strictly profitable additions: descent gain is
                // the negated gradient of the loss we minimize.
                let mut gains: Vec<(f64, usize)> =
                    indices.iter().map(|&i| (-gradient[i], i)).filter(|&(g, _)| g > 0.0).collect();
                gains.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                for &(_, i) in gains.iter().take(cfg.k) {
                    next[i] = 1.0;
                }
            }
        }
        current = next;

        let candidate = snap(&current);
        let logits = if cfg.count_success_checks {
            match oracle.forward(&candidate) {
                Ok(l) => l,
                Err(_) => break,
            }
        } else {
            oracle.forward_unmetered(&candidate)
        };
        queries += check_cost;
        let loss = goal.loss(&logits);
        if loss < best_loss {
            best_loss = loss;
            adversarial = candidate.clone();
            records.push(TraceRecord { query_index: queries, best_loss: loss });
        }
        if goal.is_success(&logits) {
            success = true;
            success_query = Some(queries);
            adversarial = candidate;
            break;
        }
    }

    AttackOutcome {
        adversarial,
        trace: AttackTrace { records, queries_used: queries, success, success_query },
    }
}
