//! Query-metered access to victim models.
//!
//! Attacks only ever see a [`ModelOracle`]: every call to [`ModelOracle::forward`]
//! increments a shared counter and fails once an optional budget is exhausted.
//! Experiment bookkeeping that must not distort query counts (checking whether a
//! clean image is classified correctly, measuring robust error afterwards) goes
//! through [`ModelOracle::forward_unmetered`].

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

/// A classifier under attack: raw (pre-softmax) scores for a flat input.
pub trait Model {
    /// Logits for one input; length is `class_count()`.
    fn raw_logits(&self, input: &[f32]) -> Vec<f64>;
    /// Number of scalars the model expects.
    fn input_len(&self) -> usize;
    /// Number of classes scored (always at least 2).
    fn class_count(&self) -> usize;
}

impl<M: Model + ?Sized> Model for &M {
    fn raw_logits(&self, input: &[f32]) -> Vec<f64> {
        (**self).raw_logits(input)
    }
    fn input_len(&self) -> usize {
        (**self).input_len()
    }
    fn class_count(&self) -> usize {
        (**self).class_count()
    }
}

/// Returned by [`ModelOracle::forward`] when the query budget is used up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetExhausted {
    /// The limit that was hit.
    pub limit: u64,
}

impl fmt::Display for BudgetExhausted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "query budget of {} exhausted", self.limit)
    }
}

impl std::error::Error for BudgetExhausted {}

/// Wraps a model with an atomic query counter and an optional hard budget.
pub struct ModelOracle<M> {
    model: M,
    queries: AtomicU64,
    limit: Option<u64>,
}

impl<M: Model> ModelOracle<M> {
    /// An oracle that counts queries without limiting them.
    pub fn new(model: M) -> Self {
        ModelOracle { model, queries: AtomicU64::new(0), limit: None }
    }

    /// An oracle that refuses queries beyond `limit`.
    pub fn with_limit(model: M, limit: u64) -> Self {
        ModelOracle { model, queries: AtomicU64::new(0), limit: Some(limit) }
    }

    /// One metered query. Reserves a slot in the counter first, so concurrent
    /// callers can never exceed the limit.
    pub fn forward(&self, input: &[f32]) -> Result<Vec<f64>, BudgetExhausted> {
        let limit = self.limit;
        self.queries
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |q| match limit {
                Some(l) if q >= l => None,
                _ => Some(q + 1),
            })
            .map_err(|_| BudgetExhausted { limit: limit.unwrap_or(0) })?;
        Ok(self.model.raw_logits(input))
    }

    /// An uncounted query for experiment bookkeeping outside the attack.
    pub fn forward_unmetered(&self, input: &[f32]) -> Vec<f64> {
        self.model.raw_logits(input)
    }

    /// Queries consumed so far.
    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::SeqCst)
    }

    /// The hard budget, if any.
    pub fn limit(&self) -> Option<u64> {
        self.limit
    }

    /// The wrapped model.
    pub fn model(&self) -> &M {
        &self.model
    }
}

impl<M: Model> Model for ModelOracle<M> {
    /// Metered access through the `Model` trait; panics if a hard budget is
    /// exhausted, so budget-aware callers should prefer [`ModelOracle::forward`].
    fn raw_logits(&self, input: &[f32]) -> Vec<f64> {
        self.forward(input).expect("query budget exhausted")
    }
    fn input_len(&self) -> usize {
        self.model.input_len()
    }
    fn class_count(&self) -> usize {
        self.model.class_count()
    }
}

/// Diagnostic wrapper that counts calls without enforcing anything.
pub struct CountingModel<M> {
    inner: M,
    calls: AtomicU64,
}

impl<M: Model> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        CountingModel { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<M: Model> Model for CountingModel<M> {
    fn raw_logits(&self, input: &[f32]) -> Vec<f64> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.raw_logits(input)
    }
    fn input_len(&self) -> usize {
        self.inner.input_len()
    }
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl Model for Echo {
        fn raw_logits(&self, input: &[f32]) -> Vec<f64> {
            input.iter().map(|&v| v as f64).collect()
        }
        fn input_len(&self) -> usize {
            2
        }
        fn class_count(&self) -> usize {
            2
        }
    }

    #[test]
    fn counts_metered_queries_only() {
        let oracle = ModelOracle::new(Echo);
        assert_eq!(oracle.queries(), 0);
        oracle.forward(&[1.0, 2.0]).unwrap();
        oracle.forward(&[1.0, 2.0]).unwrap();
        oracle.forward_unmetered(&[1.0, 2.0]);
        assert_eq!(oracle.queries(), 2);
    }

    #[test]
    fn limit_is_enforced_exactly() {
        let oracle = ModelOracle::with_limit(Echo, 3);
        for _ in 0..3 {
            assert!(oracle.forward(&[0.0, 0.0]).is_ok());
        }
        assert_eq!(oracle.forward(&[0.0, 0.0]), Err(BudgetExhausted { limit: 3 }));
        // The failed attempt is not counted.
        assert_eq!(oracle.queries(), 3);
    }

    #[test]
    fn limit_holds_under_concurrency() {
        let oracle = ModelOracle::with_limit(Echo, 100);
        std::thread::scope(|scope| {
            for _ in 0..4 {
                scope.spawn(|| {
                    for _ in 0..50 {
                        let _ = oracle.forward(&[0.0, 0.0]);
                    }
                });
            }
        });
        assert_eq!(oracle.queries(), 100);
    }

    #[test]
    fn counting_wrapper_tracks_calls() {
        let counting = CountingModel::new(Echo);
        counting.raw_logits(&[0.5, 0.5]);
        counting.raw_logits(&[0.5, 0.5]);
        assert_eq!(counting.calls(), 2);
    }

    #[test]
    fn reference_forwarding() {
        let echo = Echo;
        let by_ref: &dyn Model = &&echo;
        assert_eq!(by_ref.input_len(), 2);
        assert_eq!(by_ref.raw_logits(&[3.0, 4.0]), vec![3.0, 4.0]);
    }
}
