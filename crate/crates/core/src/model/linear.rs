//! A linear score model with two classes.
//!
//! Used as the stand-in for binary detectors (e.g. malware classifiers) and as
//! an analytically tractable victim in tests: the decision boundary and the
//! optimal sparse perturbation can both be computed in closed form.

use super::oracle::Model;

/// `score(x) = w·x + b`; class 1 when the score is positive.
///
/// Logits are reported as `[0, score]` so the margin and cross-entropy losses
/// apply unchanged: `argmax` picks class 1 exactly when `score > 0` (ties on
/// `score == 0` resolve to class 0, the lower index).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBinaryModel {
    weights: Vec<f64>,
    bias: f64,
}

impl LinearBinaryModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        assert!(!weights.is_empty(), "a linear model needs at least one weight");
        LinearBinaryModel { weights, bias }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// The raw score `w·x + b`, accumulated left to right so results are
    /// bit-for-bit reproducible.
    pub fn score(&self, input: &[f32]) -> f64 {
        assert_eq!(input.len(), self.weights.len(), "input length mismatch");
        let mut acc = 0.0;
        for (w, x) in self.weights.iter().zip(input) {
            acc += w * (*x as f64);
        }
        acc + self.bias
    }
}

impl Model for LinearBinaryModel {
    fn raw_logits(&self, input: &[f32]) -> Vec<f64> {
        vec![0.0, self.score(input)]
    }

    fn input_len(&self) -> usize {
        self.weights.len()
    }

    fn class_count(&self) -> usize {
        2
    }
}
