//! Batch attack evaluation over a labeled dataset.
//!
//! [`run_suite`] attacks every image independently, once per seed, and
//! reports the paper-style aggregates:
//!
//! - success rate over the initially correctly classified points only;
//! - robust error: the fraction of all points misclassified after the attack
//!   (initially misclassified points count as errors without being attacked);
//! - query statistics over all attacked points, where unsuccessful runs
//!   contribute the full budget (`N * restarts`);
//! - per-seed aggregates plus mean and sample standard deviation across
//!   seeds.
//!
//! Every image derives its own random stream from `(seed, image id)`, and
//! rows are ordered by image id, so results are bitwise identical no matter
//! how many worker threads share the loop. Initial-correctness checks and
//! post-attack evaluations go through unmetered forwards; only the attack
//! itself spends metered queries, and each row's query count is asserted
//! against its oracle counter.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;

use crate::attack::{FrameAdapter, FrameConfig, L0Adapter, PatchAdapter, PatchConfig};
use crate::baseline::{
    jsma_attack, pgd0_attack, AttackInput, InputGradient, JsmaConfig, Pgd0Config,
};
use crate::engine::{run_with_restarts, AttackOutcome, AttackTrace, RunOptions};
use crate::loss::{argmax, AttackGoal};
use crate::model::ModelOracle;
use crate::rng::RngStream;
use crate::schedule::AlphaRule;
use crate::tensor::{ImageTensor, LabeledDataset};

/// How the per-image attack goal is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalSpec {
    Untargeted,
    /// A target class drawn per image (never the true label).
    RandomTarget,
    /// One fixed target class for every image.
    FixedTarget(usize),
}

impl GoalSpec {
    pub fn is_targeted(&self) -> bool {
        !matches!(self, GoalSpec::Untargeted)
    }

    fn resolve(&self, label: usize, classes: usize, image_rng: &RngStream) -> AttackGoal {
        match *self {
            GoalSpec::Untargeted => AttackGoal::Untargeted { label },
            GoalSpec::FixedTarget(target) => AttackGoal::Targeted { target },
            GoalSpec::RandomTarget => {
                let mut rng = image_rng.substream("target");
                let draw = rng.gen_range(0..classes - 1);
                let target = draw + usize::from(draw >= label);
                AttackGoal::Targeted { target }
            }
        }
    }
}

/// Which attack the suite runs on each image.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackMethod {
    /// Random-search sparse attack; `scalar_space` counts single channels
    /// instead of whole pixels against the budget `k`.
    L0 { k: usize, alpha: AlphaRule, scalar_space: bool },
    Patch { cfg: PatchConfig },
    Frame { cfg: FrameConfig },
    Pgd0White { k: usize },
    Pgd0Estimated { k: usize },
    JsmaWhite { k: usize },
    JsmaEstimated { k: usize, count_success_checks: bool },
}

/// Full per-seed experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub method: AttackMethod,
    pub goal: GoalSpec,
    /// Query budget per restart.
    pub budget: u64,
    pub restarts: u64,
    pub seeds: Vec<u64>,
    pub workers: usize,
}

/// One attacked (or skipped) image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRow {
    pub image_id: usize,
    pub label: usize,
    pub initially_correct: bool,
    pub success: bool,
    pub queries_used: u64,
    /// 1-based query of the first success; 0 for initially misclassified
    /// points, which succeed without being attacked.
    pub success_query: Option<u64>,
    /// Attack loss of `adversarial` under this row's goal.
    pub final_loss: f64,
    /// Model prediction on `adversarial`.
    pub predicted: usize,
    pub adversarial: Vec<f32>,
    pub trace: AttackTrace,
}

/// Aggregates for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedReport {
    pub seed: u64,
    pub rows: Vec<ImageRow>,
    /// Successes over initially correct points; `None` when nothing was
    /// attacked.
    pub success_rate: Option<f64>,
    pub robust_error: f64,
    pub mean_queries: f64,
    pub median_queries: f64,
    pub total_queries: u64,
}

/// Aggregates across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub seeds: Vec<SeedReport>,
    pub success_rate_mean: Option<f64>,
    /// Sample standard deviation over seeds; 0 with fewer than two seeds.
    pub success_rate_std: Option<f64>,
    pub robust_error_mean: f64,
    pub robust_error_std: f64,
    pub mean_queries_mean: f64,
    pub mean_queries_std: f64,
}

/// Runs the configured attack over every image and seed.
pub fn run_suite<M>(model: &M, dataset: &LabeledDataset, cfg: &SuiteConfig) -> SuiteReport
where
    M: InputGradient + Sync,
{
    assert!(!cfg.seeds.is_empty(), "at least one seed is required");
    assert!(cfg.workers >= 1, "at least one worker is required");
    assert!(cfg.restarts >= 1, "at least one restart is required");
    let seeds: Vec<SeedReport> =
        cfg.seeds.iter().map(|&seed| run_seed(model, dataset, cfg, seed)).collect();

    let rates: Vec<f64> = seeds.iter().filter_map(|s| s.success_rate).collect();
    let (success_rate_mean, success_rate_std) = if rates.is_empty() {
        (None, None)
    } else {
        let (mean, std) = mean_and_std(&rates);
        (Some(mean), Some(std))
    };
    let errors: Vec<f64> = seeds.iter().map(|s| s.robust_error).collect();
    let (robust_error_mean, robust_error_std) = mean_and_std(&errors);
    let means: Vec<f64> = seeds.iter().map(|s| s.mean_queries).collect();
    let (mean_queries_mean, mean_queries_std) = mean_and_std(&means);

    SuiteReport {
        seeds,
        success_rate_mean,
        success_rate_std,
        robust_error_mean,
        robust_error_std,
        mean_queries_mean,
        mean_queries_std,
    }
}

fn run_seed<M>(model: &M, dataset: &LabeledDataset, cfg: &SuiteConfig, seed: u64) -> SeedReport
where
    M: InputGradient + Sync,
{
    let n = dataset.len();
    let slots: Mutex<Vec<Option<ImageRow>>> = Mutex::new(vec![None; n]);
    let next = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.min(n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let row = attack_one(model, dataset.image(i), dataset.label(i), i, cfg, seed);
                slots.lock().unwrap()[i] = Some(row);
            });
        }
    });

    let rows: Vec<ImageRow> =
        slots.into_inner().unwrap().into_iter().map(|r| r.expect("row computed")).collect();
    summarize_seed(seed, rows, cfg.budget, cfg.restarts)
}

/// Builds the per-seed aggregates from finished rows; also used to re-derive
/// them when checking report self-consistency.
pub fn summarize_seed(seed: u64, rows: Vec<ImageRow>, budget: u64, restarts: u64) -> SeedReport {
    let attacked: Vec<&ImageRow> = rows.iter().filter(|r| r.initially_correct).collect();
    let success_rate = if attacked.is_empty() {
        None
    } else {
        let wins = attacked.iter().filter(|r| r.success).count();
        Some(wins as f64 / attacked.len() as f64)
    };
    let robust_error = if rows.is_empty() {
        0.0
    } else {
        rows.iter().filter(|r| r.predicted != r.label).count() as f64 / rows.len() as f64
    };

    // Unsuccessful attacks are charged the whole budget across restarts.
    let mut spent: Vec<f64> = attacked
        .iter()
        .map(|r| {
            if r.success {
                r.success_query.expect("successful rows carry a success query") as f64
            } else {
                (budget * restarts) as f64
            }
        })
        .collect();
    spent.sort_by(f64::total_cmp);
    let mean_queries =
        if spent.is_empty() { 0.0 } else { spent.iter().sum::<f64>() / spent.len() as f64 };
    let median_queries = match spent.len() {
        0 => 0.0,
        len if len % 2 == 1 => spent[len / 2],
        len => (spent[len / 2 - 1] + spent[len / 2]) / 2.0,
    };
    let total_queries = rows.iter().map(|r| r.queries_used).sum();

    SeedReport { seed, rows, success_rate, robust_error, mean_queries, median_queries, total_queries }
}

fn attack_one<M>(
    model: &M,
    image: &ImageTensor,
    label: usize,
    image_id: usize,
    cfg: &SuiteConfig,
    seed: u64,
) -> ImageRow
where
    M: InputGradient,
{
    let image_rng = RngStream::new(seed).derive("image", image_id as u64);
    let goal = cfg.goal.resolve(label, model.class_count(), &image_rng);

    // Skipping misclassified inputs costs nothing and already counts as a
    // model error.
    let initial_logits = model.raw_logits(image.data());
    if argmax(&initial_logits) != label {
        return ImageRow {
            image_id,
            label,
            initially_correct: false,
            success: true,
            queries_used: 0,
            success_query: Some(0),
            final_loss: goal.loss(&initial_logits),
            predicted: argmax(&initial_logits),
            adversarial: image.data().to_vec(),
            trace: AttackTrace {
                records: Vec::new(),
                queries_used: 0,
                success: true,
                success_query: Some(0),
            },
        };
    }

    let oracle = ModelOracle::new(model);
    let opts = RunOptions::default();
    let outcome = match &cfg.method {
        AttackMethod::L0 { k, alpha, scalar_space } => run_with_restarts(
            &oracle,
            goal,
            || {
                if *scalar_space {
                    L0Adapter::scalars(image, *k, *alpha)
                } else {
                    L0Adapter::pixels(image, *k, *alpha)
                }
            },
            cfg.budget,
            cfg.restarts,
            &image_rng,
            opts,
        ),
        AttackMethod::Patch { cfg: patch } => run_with_restarts(
            &oracle,
            goal,
            || PatchAdapter::new(image, *patch),
            cfg.budget,
            cfg.restarts,
            &image_rng,
            opts,
        ),
        AttackMethod::Frame { cfg: frame } => run_with_restarts(
            &oracle,
            goal,
            || FrameAdapter::new(image, *frame),
            cfg.budget,
            cfg.restarts,
            &image_rng,
            opts,
        ),
        AttackMethod::Pgd0White { k } => baseline_restarts(cfg.restarts, &image_rng, |rng| {
            pgd0_attack(&oracle, goal, AttackInput::Image(image), &Pgd0Config::white_box(*k), cfg.budget, rng)
        }),
        AttackMethod::Pgd0Estimated { k } => {
            let pgd = Pgd0Config::estimated(*k, image.data().len(), cfg.goal.is_targeted());
            baseline_restarts(cfg.restarts, &image_rng, |rng| {
                pgd0_attack(&oracle, goal, AttackInput::Image(image), &pgd, cfg.budget, rng)
            })
        }
        AttackMethod::JsmaWhite { k } => baseline_restarts(cfg.restarts, &image_rng, |rng| {
            jsma_attack(&oracle, goal, AttackInput::Image(image), &JsmaConfig::white_box(*k), cfg.budget, rng)
        }),
        AttackMethod::JsmaEstimated { k, count_success_checks } => {
            let mut jsma = JsmaConfig::estimated_image(*k);
            jsma.count_success_checks = *count_success_checks;
            baseline_restarts(cfg.restarts, &image_rng, |rng| {
                jsma_attack(&oracle, goal, AttackInput::Image(image), &jsma, cfg.budget, rng)
            })
        }
    };

    assert_eq!(
        outcome.trace.queries_used,
        oracle.queries(),
        "trace accounting must match the oracle counter"
    );

    let final_logits = model.raw_logits(&outcome.adversarial);
    ImageRow {
        image_id,
        label,
        initially_correct: true,
        success: outcome.trace.success,
        queries_used: outcome.trace.queries_used,
        success_query: outcome.trace.success_query,
        final_loss: goal.loss(&final_logits),
        predicted: argmax(&final_logits),
        adversarial: outcome.adversarial,
        trace: outcome.trace,
    }
}

/// Restart loop for baselines, with the same bookkeeping as the engine's
/// [`run_with_restarts`]: cumulative query indices, stop at the first
/// successful restart, otherwise keep the lowest-loss run.
fn baseline_restarts(
    restarts: u64,
    rng: &RngStream,
    mut run_one: impl FnMut(&RngStream) -> AttackOutcome,
) -> AttackOutcome {
    let mut queries_before = 0;
    let mut first_success: Option<u64> = None;
    let mut best: Option<AttackOutcome> = None;
    for r in 0..restarts {
        let restart_rng = rng.derive("restart", r);
        let mut outcome = run_one(&restart_rng);
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
        let final_loss = |o: &AttackOutcome| {
            o.trace.records.last().map(|rec| rec.best_loss).unwrap_or(f64::INFINITY)
        };
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
        if success {
            break;
        }
    }
    let mut chosen = best.expect("restarts >= 1");
    chosen.trace.queries_used = queries_before;
    chosen.trace.success = first_success.is_some();
    chosen.trace.success_query = first_success;
    chosen
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Writes one seed's rows as CSV.
pub fn write_rows_csv(report: &SeedReport, out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "image_id,initially_correct,success,queries_used,success_query,final_loss")?;
    for row in &report.rows {
        let sq = row.success_query.map(|q| q.to_string()).unwrap_or_else(|| "none".into());
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.image_id, row.initially_correct, row.success, row.queries_used, sq, row.final_loss
        )?;
    }
    Ok(())
}

/// Writes per-seed aggregates plus the cross-seed summary as CSV.
pub fn write_summary_csv(report: &SuiteReport, out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "seed,success_rate,robust_error,mean_queries,median_queries,total_queries")?;
    for seed in &report.seeds {
        let rate = seed.success_rate.map(|r| r.to_string()).unwrap_or_else(|| "n/a".into());
        writeln!(
            out,
            "{},{},{},{},{},{}",
            seed.seed, rate, seed.robust_error, seed.mean_queries, seed.median_queries, seed.total_queries
        )?;
    }
    let rate_mean = report.success_rate_mean.map(|r| r.to_string()).unwrap_or_else(|| "n/a".into());
    let rate_std = report.success_rate_std.map(|r| r.to_string()).unwrap_or_else(|| "n/a".into());
    writeln!(
        out,
        "# summary success_rate={rate_mean}+-{rate_std} robust_error={}+-{} mean_queries={}+-{}",
        report.robust_error_mean,
        report.robust_error_std,
        report.mean_queries_mean,
        report.mean_queries_std
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearBinaryModel;

    /// A small dataset of 1x4x1 images for a linear two-class victim.
    fn toy_setup() -> (LinearBinaryModel, LabeledDataset) {
        let model = LinearBinaryModel::new(vec![1.2, -0.8, 0.9, -0.4], -0.35);
        let mut images = Vec::new();
        let mut labels = Vec::new();
        let points: [[f32; 4]; 6] = [
            [0.9, 0.1, 0.8, 0.1],
            [0.1, 0.9, 0.1, 0.9],
            [0.8, 0.2, 0.7, 0.3],
            [0.2, 0.8, 0.2, 0.8],
            [0.9, 0.0, 0.9, 0.2],
            [0.0, 0.7, 0.0, 0.6],
        ];
        for p in points {
            let score: f64 =
                p.iter().zip([1.2, -0.8, 0.9, -0.4]).map(|(x, w)| *x as f64 * w).sum::<f64>()
                    - 0.35;
            images.push(ImageTensor::new(1, 4, 1, p.to_vec()).unwrap());
            labels.push(usize::from(score > 0.0));
        }
        (model, LabeledDataset::new(images, labels, 2).unwrap())
    }

    fn l0_config(seeds: Vec<u64>, workers: usize) -> SuiteConfig {
        SuiteConfig {
            method: AttackMethod::L0 {
                k: 2,
                alpha: AlphaRule::Decaying { alpha_init: 0.3 },
                scalar_space: false,
            },
            goal: GoalSpec::Untargeted,
            budget: 300,
            restarts: 1,
            seeds,
            workers,
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let (model, data) = toy_setup();
        let one = run_suite(&model, &data, &l0_config(vec![7], 1));
        let four = run_suite(&model, &data, &l0_config(vec![7], 4));
        assert_eq!(one, four);
    }

    #[test]
    fn aggregates_are_recomputable_from_rows() {
        let (model, data) = toy_setup();
        let cfg = l0_config(vec![3], 2);
        let report = run_suite(&model, &data, &cfg);
        let seed = &report.seeds[0];
        let again = summarize_seed(seed.seed, seed.rows.clone(), cfg.budget, cfg.restarts);
        assert_eq!(&again, seed);
        // Per-suite query identity: the total is exactly the sum of rows.
        let total: u64 = seed.rows.iter().map(|r| r.queries_used).sum();
        assert_eq!(total, seed.total_queries);
    }

    #[test]
    fn misclassified_points_are_free_successes_outside_the_denominator() {
        // Every weight is zero, so everything classifies as class 0: class-1
        // points are initially misclassified, class-0 points can never be
        // attacked successfully.
        let model = LinearBinaryModel::new(vec![0.0; 4], 0.0);
        let images = vec![
            ImageTensor::new(1, 4, 1, vec![0.5; 4]).unwrap(),
            ImageTensor::new(1, 4, 1, vec![0.2; 4]).unwrap(),
        ];
        let data = LabeledDataset::new(images, vec![0, 1], 2).unwrap();
        let mut cfg = l0_config(vec![1], 1);
        cfg.budget = 50;
        let report = run_suite(&model, &data, &cfg);
        let seed = &report.seeds[0];

        assert_eq!(seed.rows[1].queries_used, 0);
        assert!(seed.rows[1].success && !seed.rows[1].initially_correct);
        // One attacked point, zero successes.
        assert_eq!(seed.success_rate, Some(0.0));
        // The misclassified point counts toward robust error.
        assert_eq!(seed.robust_error, 0.5);
        // Query stats cover only the attacked point, charged the full budget.
        assert_eq!(seed.mean_queries, 50.0);
        assert_eq!(seed.median_queries, 50.0);
    }

    #[test]
    fn all_points_misclassified_reports_no_success_rate() {
        let model = LinearBinaryModel::new(vec![0.0; 4], 0.0);
        let images = vec![ImageTensor::new(1, 4, 1, vec![0.5; 4]).unwrap()];
        let data = LabeledDataset::new(images, vec![1], 2).unwrap();
        let report = run_suite(&model, &data, &l0_config(vec![1], 1));
        assert_eq!(report.seeds[0].success_rate, None);
        assert_eq!(report.seeds[0].robust_error, 1.0);
        assert_eq!(report.success_rate_mean, None);
        let mut csv = Vec::new();
        write_summary_csv(&report, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.contains(",n/a,"), "{text}");
    }

    #[test]
    fn mixed_success_and_failure_follow_the_full_budget_convention() {
        // Vector [5, 100] of charged queries: mean and median are both 52.5.
        let rows = vec![
            ImageRow {
                image_id: 0,
                label: 0,
                initially_correct: true,
                success: true,
                queries_used: 5,
                success_query: Some(5),
                final_loss: -0.1,
                predicted: 1,
                adversarial: vec![],
                trace: AttackTrace {
                    records: vec![],
                    queries_used: 5,
                    success: true,
                    success_query: Some(5),
                },
            },
            ImageRow {
                image_id: 1,
                label: 0,
                initially_correct: true,
                success: false,
                queries_used: 100,
                success_query: None,
                final_loss: 0.4,
                predicted: 0,
                adversarial: vec![],
                trace: AttackTrace {
                    records: vec![],
                    queries_used: 100,
                    success: false,
                    success_query: None,
                },
            },
        ];
        let seed = summarize_seed(0, rows, 100, 1);
        assert_eq!(seed.mean_queries, 52.5);
        assert_eq!(seed.median_queries, 52.5);
        assert_eq!(seed.success_rate, Some(0.5));
    }

    #[test]
    fn baselines_run_under_the_suite_with_exact_accounting() {
        let (model, data) = toy_setup();
        for method in [
            AttackMethod::Pgd0White { k: 2 },
            AttackMethod::Pgd0Estimated { k: 2 },
            AttackMethod::JsmaWhite { k: 2 },
            AttackMethod::JsmaEstimated { k: 2, count_success_checks: true },
        ] {
            let cfg = SuiteConfig {
                method,
                goal: GoalSpec::Untargeted,
                budget: 120,
                restarts: 2,
                seeds: vec![5],
                workers: 2,
            };
            let report = run_suite(&model, &data, &cfg);
            for row in &report.seeds[0].rows {
                assert!(row.queries_used <= cfg.budget * cfg.restarts);
                assert_eq!(row.queries_used, row.trace.queries_used);
            }
        }
    }

    #[test]
    fn random_targets_avoid_the_true_label() {
        let rng = RngStream::new(3).derive("image", 4);
        for label in 0..5 {
            match GoalSpec::RandomTarget.resolve(label, 5, &rng) {
                AttackGoal::Targeted { target } => assert_ne!(target, label),
                other => panic!("unexpected goal {other:?}"),
            }
        }
    }

    #[test]
    fn rows_csv_lists_every_image() {
        let (model, data) = toy_setup();
        let report = run_suite(&model, &data, &l0_config(vec![2], 1));
        let mut csv = Vec::new();
        write_rows_csv(&report.seeds[0], &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + data.len());
        assert!(text.starts_with("image_id,initially_correct,success,"));
    }
}
