//! Central finite-difference gradient estimation from paired oracle queries.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::snap;
use crate::loss::AttackGoal;
use crate::model::{Model, ModelOracle};

/// Probe settings for one gradient estimate.
#[derive(Debug, Clone, Copy)]
pub struct GradEstConfig {
    /// Number of random directions probed per call.
    pub probes: usize,
    /// Probe step size η; each probe evaluates the loss at `x ± η·s`.
    pub eta: f64,
}

/// Result of [`estimate_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    /// The prior plus one central-difference term per completed probe pair.
    pub gradient: Vec<f64>,
    /// Oracle queries consumed (2 per completed probe, plus any query spent
    /// on a pair whose second half hit the budget).
    pub queries: u64,
    /// The budget ran out mid-call; `gradient` holds only the completed
    /// probes.
    pub exhausted: bool,
}

/// Accumulates `(L(x + η·s) - L(x - η·s)) / (2η) · s` over `cfg.probes`
/// directions `s ~ N(0, I)` on top of `prior`.
///
/// Probe points are fed to the model as-is — they may leave `[0,1]`, which is
/// fine for the smooth toy models this estimator targets. A full call costs
/// exactly `2 * cfg.probes` queries; when the oracle budget runs out mid-call
/// the partial sum accumulated so far is returned with `exhausted` set.
pub fn estimate_gradient<M: Model>(
    oracle: &ModelOracle<M>,
    goal: AttackGoal,
    point: &[f64],
    prior: Vec<f64>,
    cfg: GradEstConfig,
    rng: &mut ChaCha8Rng,
) -> GradEstimate {
    assert_eq!(prior.len(), point.len(), "prior length must match the point");
    assert!(cfg.eta > 0.0, "probe step must be positive");
    let d = point.len();
    let mut gradient = prior;
    let mut queries = 0;

    for _ in 0..cfg.probes {
        let direction: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let up: Vec<f64> = point.iter().zip(&direction).map(|(x, s)| x + cfg.eta * s).collect();
        let down: Vec<f64> = point.iter().zip(&direction).map(|(x, s)| x - cfg.eta * s).collect();

        let up_logits = match oracle.forward(&snap(&up)) {
            Ok(l) => l,
            Err(_) => return GradEstimate { gradient, queries, exhausted: true },
        };
        queries += 1;
        let down_logits = match oracle.forward(&snap(&down)) {
            Ok(l) => l,
            Err(_) => return GradEstimate { gradient, queries, exhausted: true },
        };
        queries += 1;

        let delta = (goal.loss(&up_logits) - goal.loss(&down_logits)) / (2.0 * cfg.eta);
        for (g, s) in gradient.iter_mut().zip(&direction) {
            *g += delta * s;
        }
    }
    GradEstimate { gradient, queries, exhausted: false }
}
