//! Attack objectives over classifier logits.
//!
//! Attacks in this crate always *minimize* a scalar loss:
//!
//! - untargeted: the margin `f_y - max_{r != y} f_r`, which is negative
//!   exactly when the input is misclassified;
//! - targeted: the cross-entropy of the target class,
//!   `-f_t + log sum_r exp(f_r)`, computed with a max-shifted log-sum-exp so
//!   large logits cannot overflow.
//!
//! Logit ties are broken toward the lowest class index wherever an argmax is
//! taken.

/// What the attacker is trying to achieve for one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackGoal {
    /// Make the prediction differ from `label`.
    Untargeted { label: usize },
    /// Make the prediction equal `target`.
    Targeted { target: usize },
}

impl AttackGoal {
    /// The loss the attack minimizes; lower is closer to the goal.
    pub fn loss(&self, logits: &[f64]) -> f64 {
        match *self {
            AttackGoal::Untargeted { label } => margin_loss(logits, label),
            AttackGoal::Targeted { target } => targeted_ce_loss(logits, target),
        }
    }

    /// Whether `logits` already satisfy the goal.
    pub fn is_success(&self, logits: &[f64]) -> bool {
        let pred = argmax(logits);
        match *self {
            AttackGoal::Untargeted { label } => pred != label,
            AttackGoal::Targeted { target } => pred == target,
        }
    }

    /// The class index the goal refers to (true label or target).
    pub fn class_index(&self) -> usize {
        match *self {
            AttackGoal::Untargeted { label } => label,
            AttackGoal::Targeted { target } => target,
        }
    }

    /// Gradient of [`AttackGoal::loss`] with respect to the logits.
    pub fn loss_gradient(&self, logits: &[f64]) -> Vec<f64> {
        match *self {
            AttackGoal::Untargeted { label } => margin_loss_gradient(logits, label),
            AttackGoal::Targeted { target } => targeted_ce_gradient(logits, target),
        }
    }
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f64]) -> usize {
    assert!(!logits.is_empty(), "argmax of empty logits");
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Margin `f_y - max_{r != y} f_r`; negative iff the input is misclassified.
///
/// Panics if fewer than two classes are supplied or `label` is out of range:
/// a margin over a single class is meaningless.
pub fn margin_loss(logits: &[f64], label: usize) -> f64 {
    assert!(logits.len() >= 2, "margin loss needs at least 2 classes, got {}", logits.len());
    assert!(label < logits.len(), "label {label} out of range for {} classes", logits.len());
    let mut best_other = f64::NEG_INFINITY;
    for (r, &v) in logits.iter().enumerate() {
        if r != label && v > best_other {
            best_other = v;
        }
    }
    logits[label] - best_other
}

/// Targeted cross-entropy `-f_t + log sum_r exp(f_r)`, max-shifted for
/// numerical stability. Always positive; smaller means the target class is
/// more dominant.
///
/// Panics if fewer than two classes are supplied or `target` is out of range.
pub fn targeted_ce_loss(logits: &[f64], target: usize) -> f64 {
    assert!(logits.len() >= 2, "cross-entropy needs at least 2 classes, got {}", logits.len());
    assert!(target < logits.len(), "target {target} out of range for {} classes", logits.len());
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&v| (v - m).exp()).sum();
    -logits[target] + m + sum.ln()
}

/// Gradient of [`margin_loss`]: `+1` at the label, `-1` at the runner-up
/// class (ties toward the lowest index), zero elsewhere.
pub fn margin_loss_gradient(logits: &[f64], label: usize) -> Vec<f64> {
    assert!(logits.len() >= 2, "margin loss needs at least 2 classes, got {}", logits.len());
    assert!(label < logits.len(), "label {label} out of range for {} classes", logits.len());
    let mut runner_up = usize::MAX;
    for (r, &v) in logits.iter().enumerate() {
        if r != label && (runner_up == usize::MAX || v > logits[runner_up]) {
            runner_up = r;
        }
    }
    let mut grad = vec![0.0; logits.len()];
    grad[label] = 1.0;
    grad[runner_up] = -1.0;
    grad
}

/// Gradient of [`targeted_ce_loss`]: `softmax(logits) - onehot(target)`.
pub fn targeted_ce_gradient(logits: &[f64], target: usize) -> Vec<f64> {
    assert!(logits.len() >= 2, "cross-entropy needs at least 2 classes, got {}", logits.len());
    assert!(target < logits.len(), "target {target} out of range for {} classes", logits.len());
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut grad: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = grad.iter().sum();
    for g in &mut grad {
        *g /= sum;
    }
    grad[target] -= 1.0;
    grad
}
