//! The generic random-search loop shared by every threat model.
//!
//! A [`ThreatAdapter`] owns the perturbation state for one threat model (which
//! pixels are flipped, where a patch sits, what a frame looks like) and knows
//! how to initialize it, mutate it into a candidate, and commit an accepted
//! candidate. The engine drives the adapter: it queries the oracle once for
//! the initial state and once per proposal, accepts a candidate only on a
//! strict loss improvement, and stops early the moment a queried point attains
//! the attack goal.
//!
//! Query bookkeeping is exact: the initial evaluation is query 1, every
//! proposal costs one query, and `queries_used` in the returned trace equals
//! the number of oracle calls made by this run.

use std::io::{self, Write};

use crate::loss::AttackGoal;
use crate::model::{Model, ModelOracle};
use crate::rng::RngStream;

/// Perturbation state for one threat model, driven by [`run_attack`].
///
/// The engine guarantees the call order: one `init_state`, then any number of
/// `propose` / `materialize_candidate` pairs, with `accept_candidate` called
/// at most once after each proposal.
pub trait ThreatAdapter {
    /// Draws the initial perturbation. `budget` is the total query budget, to
    /// which all iteration schedules are scaled.
    fn init_state(&mut self, rng: &RngStream, budget: u64);

    /// Mutates the current state into a fresh candidate; `iteration` is the
    /// zero-based proposal counter feeding the schedules.
    fn propose(&mut self, iteration: u64);

    /// The current (last accepted) state as a flat model input.
    fn materialize_current(&self) -> Vec<f32>;

    /// The pending candidate as a flat model input.
    fn materialize_candidate(&self) -> Vec<f32>;

    /// Commits the pending candidate as the new current state.
    fn accept_candidate(&mut self);
}

impl<A: ThreatAdapter + ?Sized> ThreatAdapter for &mut A {
    fn init_state(&mut self, rng: &RngStream, budget: u64) {
        (**self).init_state(rng, budget);
    }
    fn propose(&mut self, iteration: u64) {
        (**self).propose(iteration);
    }
    fn materialize_current(&self) -> Vec<f32> {
        (**self).materialize_current()
    }
    fn materialize_candidate(&self) -> Vec<f32> {
        (**self).materialize_candidate()
    }
    fn accept_candidate(&mut self) {
        (**self).accept_candidate();
    }
}

/// One accepted point on the loss trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// 1-based index of the query that produced this loss.
    pub query_index: u64,
    /// Best (lowest) loss seen up to and including that query.
    pub best_loss: f64,
}

/// Full record of one attack run.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrace {
    /// The initial evaluation plus every accepted improvement, in query order.
    /// `best_loss` is strictly decreasing after the first record.
    pub records: Vec<TraceRecord>,
    /// Oracle queries consumed by this run.
    pub queries_used: u64,
    /// Whether any queried point attained the goal.
    pub success: bool,
    /// 1-based query index of the first success, if any.
    pub success_query: Option<u64>,
}

/// Result of an attack run: the example to report plus its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    /// On early success this is the successful candidate itself; otherwise the
    /// best (lowest-loss) state when the budget ran out.
    pub adversarial: Vec<f32>,
    pub trace: AttackTrace,
}

/// Engine knobs.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Stop at the first successful query (the default). Disable to keep
    /// minimizing the loss for the whole budget, e.g. to study how close the
    /// search gets to an exhaustively computed optimum.
    pub stop_on_success: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { stop_on_success: true }
    }
}

/// Runs random search with `adapter` against `oracle` until success, budget
/// exhaustion, or an externally imposed oracle limit.
pub fn run_attack<M: Model, A: ThreatAdapter>(
    oracle: &ModelOracle<M>,
    goal: AttackGoal,
    mut adapter: A,
    budget: u64,
    rng: &RngStream,
    opts: RunOptions,
) -> AttackOutcome {
    adapter.init_state(rng, budget);
    let mut trace =
        AttackTrace { records: Vec::new(), queries_used: 0, success: false, success_query: None };

    let current = adapter.materialize_current();
    let logits = match oracle.forward(&current) {
        Ok(l) => l,
        Err(_) => return AttackOutcome { adversarial: current, trace },
    };
    trace.queries_used = 1;
    let mut best_loss = goal.loss(&logits);
    trace.records.push(TraceRecord { query_index: 1, best_loss });
    if goal.is_success(&logits) {
        trace.success = true;
        trace.success_query = Some(1);
        if opts.stop_on_success {
            return AttackOutcome { adversarial: current, trace };
        }
    }

    let mut iteration = 0;
    while trace.queries_used < budget {
        adapter.propose(iteration);
        let candidate = adapter.materialize_candidate();
        let logits = match oracle.forward(&candidate) {
            Ok(l) => l,
            Err(_) => break,
        };
        trace.queries_used += 1;
        let loss = goal.loss(&logits);

        if goal.is_success(&logits) {
            trace.success = true;
            if trace.success_query.is_none() {
                trace.success_query = Some(trace.queries_used);
            }
            if opts.stop_on_success {
                if loss < best_loss {
                    trace.records.push(TraceRecord { query_index: trace.queries_used, best_loss: loss });
                }
                return AttackOutcome { adversarial: candidate, trace };
            }
        }
        if loss < best_loss {
            adapter.accept_candidate();
            best_loss = loss;
            trace.records.push(TraceRecord { query_index: trace.queries_used, best_loss });
        }
        iteration += 1;
    }

    AttackOutcome { adversarial: adapter.materialize_current(), trace }
}

/// Runs [`run_attack`] up to `restarts` times with decorrelated randomness,
/// stopping at the first successful restart.
///
/// The returned trace reports cumulative queries across all restarts that ran;
/// `success_query` is offset accordingly. When no restart succeeds, the
/// restart with the lowest final loss is reported.
pub fn run_with_restarts<M: Model, A: ThreatAdapter>(
    oracle: &ModelOracle<M>,
    goal: AttackGoal,
    mut make_adapter: impl FnMut() -> A,
    budget: u64,
    restarts: u64,
    rng: &RngStream,
    opts: RunOptions,
) -> AttackOutcome {
    assert!(restarts >= 1, "at least one restart is required");
    let mut queries_before = 0;
    let mut first_success: Option<u64> = None;
    let mut best: Option<AttackOutcome> = None;
    for r in 0..restarts {
        let restart_rng = rng.derive("restart", r);
        let mut outcome = run_attack(oracle, goal, make_adapter(), budget, &restart_rng, opts);
        let used = outcome.trace.queries_used;
        if let Some(q) = outcome.trace.success_query.as_mut() {
            *q += queries_before;
        }
        for rec in &mut outcome.trace.records {
            rec.query_index += queries_before;
        }
        queries_before += used;

        if first_success.is_none() {
            first_success = outcome.trace.success_query;
        }
        let success = outcome.trace.success;
        let replace = match &best {
            None => true,
            Some(b) => {
                (success && !b.trace.success)
                    || (success == b.trace.success && final_loss(&outcome) < final_loss(b))
            }
        };
        if replace {
            best = Some(outcome);
        }
        if success && opts.stop_on_success {
            break;
        }
    }
    let mut chosen = best.expect("restarts >= 1");
    chosen.trace.queries_used = queries_before;
    chosen.trace.success = first_success.is_some();
    chosen.trace.success_query = first_success;
    chosen
}

fn final_loss(outcome: &AttackOutcome) -> f64 {
    outcome.trace.records.last().map(|r| r.best_loss).unwrap_or(f64::INFINITY)
}

/// Writes a trace as CSV: a header, one row per record, and a trailing
/// comment line summarizing the run.
pub fn write_trace_csv(trace: &AttackTrace, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "query_index,best_loss")?;
    for rec in &trace.records {
        writeln!(out, "{},{}", rec.query_index, rec.best_loss)?;
    }
    let sq = trace.success_query.map(|q| q.to_string()).unwrap_or_else(|| "none".into());
    writeln!(
        out,
        "# summary queries_used={} success={} success_query={}",
        trace.queries_used, trace.success, sq
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    /// Scores how close a 4-vector is to the all-ones point; class 1 wins once
    /// fewer than two coordinates differ from 1.
    struct DistanceModel;

    impl Model for DistanceModel {
        fn raw_logits(&self, input: &[f32]) -> Vec<f64> {
            let dist: f64 = input.iter().map(|&v| (1.0 - v as f64).abs()).sum();
            vec![dist - 1.5, 0.0]
        }
        fn input_len(&self) -> usize {
            4
        }
        fn class_count(&self) -> usize {
            2
        }
    }

    /// Flips one uniformly chosen coordinate of a 4-bit state per proposal.
    struct BitFlipAdapter {
        state: Vec<f32>,
        pending: usize,
        rng: Option<ChaCha8Rng>,
    }

    impl BitFlipAdapter {
        fn new() -> Self {
            BitFlipAdapter { state: vec![0.0; 4], pending: 0, rng: None }
        }
    }

    impl ThreatAdapter for BitFlipAdapter {
        fn init_state(&mut self, rng: &RngStream, _budget: u64) {
            self.rng = Some(rng.substream("flip"));
        }
        fn propose(&mut self, _iteration: u64) {
            self.pending = self.rng.as_mut().unwrap().gen_range(0..4);
        }
        fn materialize_current(&self) -> Vec<f32> {
            self.state.clone()
        }
        fn materialize_candidate(&self) -> Vec<f32> {
            let mut c = self.state.clone();
            c[self.pending] = 1.0 - c[self.pending];
            c
        }
        fn accept_candidate(&mut self) {
            self.state[self.pending] = 1.0 - self.state[self.pending];
        }
    }

    #[test]
    fn engine_counts_queries_and_stops_on_success() {
        let oracle = ModelOracle::new(DistanceModel);
        let goal = AttackGoal::Untargeted { label: 0 };
        let rng = RngStream::new(7);
        let outcome =
            run_attack(&oracle, goal, BitFlipAdapter::new(), 200, &rng, RunOptions::default());
        assert!(outcome.trace.success);
        let sq = outcome.trace.success_query.unwrap();
        assert_eq!(outcome.trace.queries_used, sq);
        assert_eq!(oracle.queries(), outcome.trace.queries_used);
        // The returned example really does attain the goal.
        let logits = oracle.forward_unmetered(&outcome.adversarial);
        assert!(goal.is_success(&logits));
        // Three coordinates must be 1 to push the distance under 1.5.
        let ones = outcome.adversarial.iter().filter(|&&v| v == 1.0).count();
        assert!(ones >= 3);
    }

    #[test]
    fn trace_losses_strictly_decrease() {
        let oracle = ModelOracle::new(DistanceModel);
        let goal = AttackGoal::Untargeted { label: 0 };
        let rng = RngStream::new(3);
        let outcome = run_attack(
            &oracle,
            goal,
            BitFlipAdapter::new(),
            200,
            &rng,
            RunOptions { stop_on_success: false },
        );
        let losses: Vec<f64> = outcome.trace.records.iter().map(|r| r.best_loss).collect();
        for pair in losses.windows(2) {
            assert!(pair[1] < pair[0], "non-decreasing trace: {losses:?}");
        }
        let indices: Vec<u64> = outcome.trace.records.iter().map(|r| r.query_index).collect();
        assert_eq!(indices[0], 1);
        for pair in indices.windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn full_budget_run_uses_exactly_the_budget() {
        let oracle = ModelOracle::new(DistanceModel);
        let goal = AttackGoal::Untargeted { label: 0 };
        let rng = RngStream::new(3);
        let outcome = run_attack(
            &oracle,
            goal,
            BitFlipAdapter::new(),
            150,
            &rng,
            RunOptions { stop_on_success: false },
        );
        assert_eq!(outcome.trace.queries_used, 150);
        assert_eq!(oracle.queries(), 150);
        // Success is still detected and stamped even though the run continued.
        assert!(outcome.trace.success);
        assert!(outcome.trace.success_query.unwrap() <= 150);
    }

    #[test]
    fn same_seed_same_outcome() {
        let goal = AttackGoal::Untargeted { label: 0 };
        let run = |seed| {
            let oracle = ModelOracle::new(DistanceModel);
            run_attack(
                &oracle,
                goal,
                BitFlipAdapter::new(),
                100,
                &RngStream::new(seed),
                RunOptions::default(),
            )
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11).trace.queries_used, run(5555).trace.queries_used);
    }

    #[test]
    fn oracle_limit_truncates_the_run() {
        let oracle = ModelOracle::with_limit(DistanceModel, 10);
        let goal = AttackGoal::Untargeted { label: 0 };
        let rng = RngStream::new(1);
        let outcome = run_attack(
            &oracle,
            goal,
            BitFlipAdapter::new(),
            1_000,
            &rng,
            RunOptions { stop_on_success: false },
        );
        assert_eq!(outcome.trace.queries_used, 10);
        assert_eq!(oracle.queries(), 10);
    }

    #[test]
    fn restarts_accumulate_queries() {
        // A model that can never be fooled: class 0 always wins.
        struct Stubborn;
        impl Model for Stubborn {
            fn raw_logits(&self, _input: &[f32]) -> Vec<f64> {
                vec![1.0, 0.0]
            }
            fn input_len(&self) -> usize {
                4
            }
            fn class_count(&self) -> usize {
                2
            }
        }
        let oracle = ModelOracle::new(Stubborn);
        let goal = AttackGoal::Untargeted { label: 0 };
        let rng = RngStream::new(2);
        let outcome = run_with_restarts(
            &oracle,
            goal,
            BitFlipAdapter::new,
            50,
            3,
            &rng,
            RunOptions::default(),
        );
        assert!(!outcome.trace.success);
        assert_eq!(outcome.trace.queries_used, 150);
        assert_eq!(oracle.queries(), 150);
    }

    #[test]
    fn restarts_stop_at_first_success() {
        let oracle = ModelOracle::new(DistanceModel);
        let goal = AttackGoal::Untargeted { label: 0 };
        let rng = RngStream::new(2);
        let outcome = run_with_restarts(
            &oracle,
            goal,
            BitFlipAdapter::new,
            400,
            4,
            &rng,
            RunOptions::default(),
        );
        assert!(outcome.trace.success);
        assert_eq!(outcome.trace.queries_used, oracle.queries());
        assert_eq!(outcome.trace.success_query.unwrap(), outcome.trace.queries_used);
    }

    #[test]
    fn trace_csv_format() {
        let trace = AttackTrace {
            records: vec![
                TraceRecord { query_index: 1, best_loss: 2.5 },
                TraceRecord { query_index: 7, best_loss: 0.125 },
            ],
            queries_used: 9,
            success: true,
            success_query: Some(9),
        };
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "query_index,best_loss\n1,2.5\n7,0.125\n# summary queries_used=9 success=true success_query=9\n"
        );
    }
}
