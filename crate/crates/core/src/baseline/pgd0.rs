//! Sparse projected gradient descent (PGD₀-style baseline).
//!
//! Each iteration takes a signed gradient step on the attack loss, clips to
//! the feasible box, then re-sparsifies by keeping only the `k` groups
//! (pixels, or addable binary features) with the largest perturbation and
//! resetting the rest to the original input. Every iteration ends with one
//! metered success check of the projected iterate. Binary inputs use the
//! add-only relaxation: immutable and already-set features never move, and
//! movable coordinates stay within `[original, 1]`.

use crate::engine::{AttackOutcome, AttackTrace, TraceRecord};
use crate::loss::AttackGoal;
use crate::model::ModelOracle;
use crate::rng::RngStream;

use super::{estimate_gradient, snap, AttackInput, GradEstConfig, GradientSource, InputGradient};

/// Settings for [`pgd0_attack`].
#[derive(Debug, Clone, Copy)]
pub struct Pgd0Config {
    /// Sparsity budget: pixels for images, features for binary inputs.
    pub k: usize,
    /// Per-coordinate magnitude of each signed gradient step.
    pub step: f64,
    pub source: GradientSource,
}

impl Pgd0Config {
    /// White-box image attack with a moderate per-coordinate step.
    pub fn white_box(k: usize) -> Self {
        Pgd0Config { k, step: 0.05, source: GradientSource::WhiteBox }
    }

    /// Gradient-estimation image attack on a `d`-dimensional input:
    /// untargeted runs spend one fresh probe per step, targeted runs pool 50
    /// probes and carry the estimate across iterations.
    pub fn estimated(k: usize, d: usize, targeted: bool) -> Self {
        let eta = 0.01 / (d as f64).sqrt();
        let (probes, carry_prior) = if targeted { (50, true) } else { (1, false) };
        Pgd0Config {
            k,
            step: 0.1,
            source: GradientSource::Estimated { cfg: GradEstConfig { probes, eta }, carry_prior },
        }
    }

    /// Add-only binary attack; the saturating step commits each chosen
    /// feature fully in a single iteration.
    pub fn malware_white(k: usize, d: usize) -> Self {
        Pgd0Config { k, step: 4.0 * (d as f64).sqrt(), source: GradientSource::WhiteBox }
    }

    /// Gradient-estimation variant of [`Pgd0Config::malware_white`].
    pub fn malware_estimated(k: usize, d: usize) -> Self {
        Pgd0Config {
            k,
            step: 4.0 * (d as f64).sqrt(),
            source: GradientSource::Estimated {
                cfg: GradEstConfig { probes: 10, eta: 100.0 },
                carry_prior: true,
            },
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Runs the attack until success, the query budget is spent, or the oracle
/// refuses further queries.
pub fn pgd0_attack<M: InputGradient>(
    oracle: &ModelOracle<M>,
    goal: AttackGoal,
    input: AttackInput<'_>,
    cfg: &Pgd0Config,
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
    let mut z = origin.clone();
    let mut adversarial = snap(&origin);
    let mut best_loss = f64::INFINITY;
    let mut records = Vec::new();
    let mut queries = 0u64;
    let mut success = false;
    let mut success_query = None;

    let iter_cost = match cfg.source {
        GradientSource::WhiteBox => 1,
        GradientSource::Estimated { cfg: ge, .. } => 2 * ge.probes as u64 + 1,
    };

    while queries + iter_cost <= budget {
        let gradient = match cfg.source {
            GradientSource::WhiteBox => oracle.model().goal_gradient(&snap(&z), goal),
            GradientSource::Estimated { cfg: ge, carry_prior } => {
                let start = if carry_prior { prior.clone() } else { vec![0.0; origin.len()] };
                let est = estimate_gradient(oracle, goal, &z, start, ge, &mut probe_rng);
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

        // Signed descent step, clipped to the feasible box per coordinate.
        let mut stepped = z.clone();
        match &movable {
            None => {
                for (i, s) in stepped.iter_mut().enumerate() {
                    *s = (*s - cfg.step * sign(gradient[i])).clamp(0.0, 1.0);
                }
            }
            Some(indices) => {
                for &i in indices {
                    stepped[i] = (stepped[i] - cfg.step * sign(gradient[i])).clamp(origin[i], 1.0);
                }
            }
        }

        // Keep the k groups with the largest perturbation (ties toward the
        // lowest index); reset everything else to the original input.
        let mut order: Vec<usize> = (0..groups).collect();
        let magnitude = |g: usize| -> f64 {
            stepped[g * channels..(g + 1) * channels]
                .iter()
                .zip(&origin[g * channels..(g + 1) * channels])
                .map(|(s, o)| (s - o) * (s - o))
                .sum()
        };
        order.sort_by(|&a, &b| magnitude(b).partial_cmp(&magnitude(a)).unwrap().then(a.cmp(&b)));
        let mut next = origin.clone();
        for &g in order.iter().take(cfg.k) {
            next[g * channels..(g + 1) * channels]
                .copy_from_slice(&stepped[g * channels..(g + 1) * channels]);
        }
        z = next;

        let candidate = snap(&z);
        let logits = match oracle.forward(&candidate) {
            Ok(l) => l,
            Err(_) => break,
        };
        queries += 1;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearBinaryModel;
    use crate::tensor::{BinaryFeatureVector, ImageTensor};

    fn flat_image(values: &[f32]) -> ImageTensor {
        ImageTensor::new(1, values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn projection_keeps_k_lowest_indices_on_ties() {
        // Equal weights make every per-pixel perturbation identical, so the
        // projection must keep pixels 0 and 1.
        let oracle = ModelOracle::new(LinearBinaryModel::new(vec![1.0; 6], 5.0));
        let image = flat_image(&[0.5; 6]);
        let cfg = Pgd0Config { k: 2, step: 0.25, source: GradientSource::WhiteBox };
        let outcome = pgd0_attack(
            &oracle,
            AttackGoal::Untargeted { label: 1 },
            AttackInput::Image(&image),
            &cfg,
            1,
            &RngStream::new(0),
        );
        assert_eq!(outcome.adversarial, vec![0.25, 0.25, 0.5, 0.5, 0.5, 0.5]);
        assert_eq!(outcome.trace.queries_used, 1);
    }

    #[test]
    fn zero_gradient_never_moves_or_succeeds() {
        let oracle = ModelOracle::new(LinearBinaryModel::new(vec![0.0; 3], 0.0));
        let image = flat_image(&[0.4, 0.6, 0.8]);
        let cfg = Pgd0Config { k: 3, step: 0.5, source: GradientSource::WhiteBox };
        // Score is identically zero, which classifies as class 0.
        let outcome = pgd0_attack(
            &oracle,
            AttackGoal::Untargeted { label: 0 },
            AttackInput::Image(&image),
            &cfg,
            5,
            &RngStream::new(0),
        );
        assert!(!outcome.trace.success);
        assert_eq!(outcome.adversarial, vec![0.4, 0.6, 0.8]);
        assert_eq!(outcome.trace.queries_used, 5);
    }

    #[test]
    fn white_box_flips_a_linear_model() {
        let oracle =
            ModelOracle::new(LinearBinaryModel::new(vec![0.9, -0.4, 0.3, 0.8], -1.0));
        let image = flat_image(&[0.75; 4]);
        let cfg = Pgd0Config { k: 2, step: 0.5, source: GradientSource::WhiteBox };
        let outcome = pgd0_attack(
            &oracle,
            AttackGoal::Untargeted { label: 1 },
            AttackInput::Image(&image),
            &cfg,
            10,
            &RngStream::new(0),
        );
        assert!(outcome.trace.success);
        assert_eq!(outcome.trace.success_query, Some(1));
        let moved =
            outcome.adversarial.iter().zip(image.data()).filter(|(a, b)| a != b).count();
        assert!(moved <= 2, "moved {moved} pixels");
    }

    #[test]
    fn estimation_mode_meters_probes_and_checks() {
        // Zero weights keep the model at class 1 forever (bias picks it), so
        // the run exhausts its budget. Each iteration costs 2 probe queries
        // plus 1 check; budget 7 leaves room for exactly two iterations.
        let oracle = ModelOracle::new(LinearBinaryModel::new(vec![0.0; 4], 1.0));
        let image = flat_image(&[0.5; 4]);
        let cfg = Pgd0Config {
            k: 2,
            step: 0.1,
            source: GradientSource::Estimated {
                cfg: GradEstConfig { probes: 1, eta: 0.01 },
                carry_prior: false,
            },
        };
        let outcome = pgd0_attack(
            &oracle,
            AttackGoal::Untargeted { label: 1 },
            AttackInput::Image(&image),
            &cfg,
            7,
            &RngStream::new(3),
        );
        assert!(!outcome.trace.success);
        assert_eq!(outcome.trace.queries_used, 6);
        assert_eq!(oracle.queries(), 6);
    }

    #[test]
    fn binary_mode_only_raises_addable_features() {
        let features =
            BinaryFeatureVector::new(vec![1, 0, 0, 1, 0], vec![false, true, false, true, true])
                .unwrap();
        // Addable features are 1 and 4; weight -2 at index 1 dominates.
        let model = LinearBinaryModel::new(vec![-1.0, -2.0, -3.0, -1.0, -0.5], 2.5);
        let oracle = ModelOracle::new(model);
        let cfg = Pgd0Config::malware_white(1, 5);
        let outcome = pgd0_attack(
            &oracle,
            AttackGoal::Untargeted { label: 1 },
            AttackInput::Binary(&features),
            &cfg,
            10,
            &RngStream::new(0),
        );
        assert!(outcome.trace.success);
        assert_eq!(outcome.adversarial, vec![1.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn same_seed_reproduces_estimated_runs() {
        let image = flat_image(&[0.3, 0.9, 0.1, 0.6]);
        let cfg = Pgd0Config::estimated(2, 4, false);
        let run = || {
            let oracle =
                ModelOracle::new(LinearBinaryModel::new(vec![0.5, -0.2, 0.9, 0.1], -0.1));
            pgd0_attack(
                &oracle,
                AttackGoal::Untargeted { label: 1 },
                AttackInput::Image(&image),
                &cfg,
                50,
                &RngStream::new(11),
            )
        };
        assert_eq!(run(), run());
    }
}
