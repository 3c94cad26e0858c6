//! Gradient-based competitor attacks.
//!
//! These baselines chase the same sparse threat models as the random-search
//! attacks but steer by gradients: either analytic ones read straight from a
//! white-box model, or finite-difference estimates paid for with oracle
//! queries ([`estimate_gradient`]). Two attack shapes are provided:
//!
//! - [`pgd0_attack`]: projected gradient descent that re-sparsifies the
//!   iterate after every step;
//! - [`jsma_attack`]: saliency-style greedy flipping of the highest-gradient
//!   pixels (or addable binary features) to their descent corners.
//!
//! All entry points return the same [`AttackOutcome`](crate::engine::AttackOutcome)
//! as the random-search engine, so the experiment harness treats every attack
//! uniformly.

mod grad_est;
mod jsma;
mod pgd0;

pub use grad_est::{estimate_gradient, GradEstConfig, GradEstimate};
pub use jsma::{jsma_attack, JsmaConfig};
pub use pgd0::{pgd0_attack, Pgd0Config};

use crate::loss::AttackGoal;
use crate::model::{LinearBinaryModel, Model, NnModel};
use crate::tensor::{BinaryFeatureVector, ImageTensor};

/// Models that can report the gradient of an attack loss with respect to
/// their input, enabling white-box baseline modes.
pub trait InputGradient: Model {
    /// `d(goal loss) / d(input)` at `input`.
    fn goal_gradient(&self, input: &[f32], goal: AttackGoal) -> Vec<f64>;
}

impl<M: InputGradient> InputGradient for &M {
    fn goal_gradient(&self, input: &[f32], goal: AttackGoal) -> Vec<f64> {
        (*self).goal_gradient(input, goal)
    }
}

impl InputGradient for NnModel {
    fn goal_gradient(&self, input: &[f32], goal: AttackGoal) -> Vec<f64> {
        let logits = self.logits(input);
        self.input_gradient(input, &goal.loss_gradient(&logits))
    }
}

impl InputGradient for LinearBinaryModel {
    fn goal_gradient(&self, input: &[f32], goal: AttackGoal) -> Vec<f64> {
        // Logits are [0, <w,x> + b], so only the second logit moves with x.
        let logits = self.raw_logits(input);
        let dlogit = goal.loss_gradient(&logits)[1];
        self.weights().iter().map(|w| w * dlogit).collect()
    }
}

/// Where a baseline's gradients come from.
#[derive(Debug, Clone, Copy)]
pub enum GradientSource {
    /// Analytic gradients from the model itself; only success checks cost
    /// queries.
    WhiteBox,
    /// Central finite differences over random probes, `2 * probes` queries
    /// per estimate.
    Estimated {
        cfg: GradEstConfig,
        /// Accumulate estimates across iterations instead of starting each
        /// one from zero.
        carry_prior: bool,
    },
}

/// The point a baseline attack perturbs, together with its threat model.
#[derive(Debug, Clone, Copy)]
pub enum AttackInput<'a> {
    /// Dense image in `[0,1]`; sparsity counts whole pixels, all channels of
    /// a perturbed pixel may move.
    Image(&'a ImageTensor),
    /// Binary feature vector; only zero-valued mutable features may be
    /// raised, never lowered (add-only threat model).
    Binary(&'a BinaryFeatureVector),
}

impl AttackInput<'_> {
    /// Flat starting point as `f64`.
    pub(crate) fn origin(&self) -> Vec<f64> {
        match self {
            AttackInput::Image(img) => img.data().iter().map(|&v| v as f64).collect(),
            AttackInput::Binary(fv) => fv.to_input().iter().map(|&v| v as f64).collect(),
        }
    }

    /// Number of sparsity groups: pixels for images, features for binary
    /// vectors.
    pub(crate) fn group_count(&self) -> usize {
        match self {
            AttackInput::Image(img) => img.pixel_count(),
            AttackInput::Binary(fv) => fv.to_input().len(),
        }
    }

    /// Scalars per sparsity group.
    pub(crate) fn channels(&self) -> usize {
        match self {
            AttackInput::Image(img) => img.shape().2,
            AttackInput::Binary(_) => 1,
        }
    }

    /// Indices allowed to move; `None` means every coordinate.
    pub(crate) fn movable(&self) -> Option<Vec<usize>> {
        match self {
            AttackInput::Image(_) => None,
            AttackInput::Binary(fv) => Some(fv.addable_indices()),
        }
    }
}

/// Snaps an `f64` iterate to the `f32` inputs models consume.
pub(crate) fn snap(point: &[f64]) -> Vec<f32> {
    point.iter().map(|&v| v as f32).collect()
}
