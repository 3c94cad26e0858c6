//! Universal (image-agnostic) patches and frames.
//!
//! Instead of perturbing one image, the search optimizes a single patch (or
//! frame) against a whole training set: every candidate is scored by the sum
//! of targeted cross-entropy losses over a batch of images, so one evaluation
//! costs `batch_size` forward passes and the query budget counts forward
//! passes, not candidates. To keep the perturbation from overfitting a batch,
//! the batch (and, for patches, the per-image patch locations) is resampled on
//! a fixed period, and the incumbent is re-scored on each fresh batch before
//! the search continues.

use rand::Rng;

use crate::engine::TraceRecord;
use crate::loss::targeted_ce_loss;
use crate::model::{Model, ModelOracle};
use crate::rng::RngStream;
use crate::schedule::FrameVariant;
use crate::tensor::ImageTensor;

use super::frame::{FrameMask, FrameUpdater};
use super::patch::{ContentUpdater, PatchContent, INIT_SQUARES};

/// Default area-fraction decay start for universal patch updates.
pub const DEFAULT_PATCH_ALPHA: f64 = 0.05;
/// Default area-fraction decay start for universal frame updates.
pub const DEFAULT_FRAME_ALPHA: f64 = 2.0;

/// Which universal perturbation is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniversalKind {
    /// An `side x side` patch pasted at per-image random locations.
    Patch { side: usize },
    /// A border frame applied identically to every image.
    Frame { frame_width: usize },
}

/// Configuration for [`run_universal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniversalConfig {
    pub kind: UniversalKind,
    /// Class the perturbation should force.
    pub target: usize,
    /// Images per scoring batch.
    pub batch_size: usize,
    /// Total forward-pass budget.
    pub budget: u64,
    /// Forward passes between batch resamples; must divide `budget`.
    pub resample_period: u64,
    pub alpha_init: f64,
}

impl UniversalConfig {
    pub fn patch(side: usize, target: usize) -> Self {
        UniversalConfig {
            kind: UniversalKind::Patch { side },
            target,
            batch_size: 10,
            budget: 10_000,
            resample_period: 1_000,
            alpha_init: DEFAULT_PATCH_ALPHA,
        }
    }

    pub fn frame(frame_width: usize, target: usize) -> Self {
        UniversalConfig {
            kind: UniversalKind::Frame { frame_width },
            target,
            batch_size: 10,
            budget: 10_000,
            resample_period: 1_000,
            alpha_init: DEFAULT_FRAME_ALPHA,
        }
    }
}

/// Result of a universal run.
#[derive(Debug, Clone, PartialEq)]
pub struct UniversalOutcome {
    pub kind: UniversalKind,
    /// The trained perturbation: patch pixels (`side*side*channels`) or frame
    /// bits (`mask_len*channels`, row-major over the mask).
    pub content: Vec<f32>,
    /// Per-round incumbent re-evaluations and accepted improvements.
    /// `query_index` is the forward-pass count after the evaluation.
    pub records: Vec<TraceRecord>,
    /// Forward-pass count at which each resampling round began.
    pub round_starts: Vec<u64>,
    pub queries_used: u64,
}

enum Machine {
    Patch { updater: ContentUpdater, content: PatchContent },
    Frame { updater: FrameUpdater, bits: Vec<f32> },
}

/// Pastes universal content onto `image` (patches at `location`, frames
/// everywhere on the border band) and returns the flat model input.
pub fn apply_universal(
    kind: UniversalKind,
    content: &[f32],
    image: &ImageTensor,
    location: (usize, usize),
) -> Vec<f32> {
    let (h, w, c) = image.shape();
    let mut out = image.data().to_vec();
    match kind {
        UniversalKind::Patch { side } => {
            assert_eq!(content.len(), side * side * c, "patch content length mismatch");
            let (row, col) = location;
            assert!(row + side <= h && col + side <= w, "patch location out of bounds");
            for py in 0..side {
                for px in 0..side {
                    let src = (py * side + px) * c;
                    let dst = ((row + py) * w + (col + px)) * c;
                    out[dst..dst + c].copy_from_slice(&content[src..src + c]);
                }
            }
        }
        UniversalKind::Frame { frame_width } => {
            let mask = FrameMask::new(h, w, frame_width);
            assert_eq!(content.len(), mask.len() * c, "frame content length mismatch");
            for (slot, &(r, col)) in mask.pixels().iter().enumerate() {
                let dst = (r * w + col) * c;
                out[dst..dst + c].copy_from_slice(&content[slot * c..(slot + 1) * c]);
            }
        }
    }
    out
}

/// Trains a universal perturbation on `train` images.
pub fn run_universal<M: Model>(
    oracle: &ModelOracle<M>,
    train: &[ImageTensor],
    cfg: &UniversalConfig,
    rng: &RngStream,
) -> UniversalOutcome {
    assert!(!train.is_empty(), "no training images");
    assert!(cfg.batch_size >= 1, "batch size must be positive");
    assert!(cfg.budget >= 1, "budget must be positive");
    assert!(
        cfg.resample_period >= 1 && cfg.budget % cfg.resample_period == 0,
        "resample period {} must divide the budget {}",
        cfg.resample_period,
        cfg.budget
    );
    let (h, w, c) = train[0].shape();
    for img in train {
        assert_eq!(img.shape(), (h, w, c), "training images must share one shape");
    }
    assert!(cfg.target < oracle.model().class_count(), "target class out of range");

    let n = cfg.batch_size;
    // Proposal schedules run over candidate evaluations, not forward passes.
    let iterations = (cfg.budget / n as u64).max(1);

    let mut init = rng.substream("init");
    let mut machine = match cfg.kind {
        UniversalKind::Patch { side } => {
            assert!(side >= 1 && side <= h.min(w), "patch side {side} exceeds image {h}x{w}");
            Machine::Patch {
                updater: ContentUpdater::new(cfg.alpha_init, side, iterations),
                content: PatchContent::random_init(side, c, INIT_SQUARES, &mut init),
            }
        }
        UniversalKind::Frame { frame_width } => {
            assert!(2 * frame_width <= h.min(w), "frame width {frame_width} too large");
            let mask = FrameMask::new(h, w, frame_width);
            let updater =
                FrameUpdater::new(mask, c, cfg.alpha_init, iterations, FrameVariant::FrameRs);
            let bits = updater.random_init(&mut init);
            Machine::Frame { updater, bits }
        }
    };

    let mut batch_rng = rng.substream("batch");
    let mut location_rng = rng.substream("locations");
    let mut content_rng = rng.substream("content");

    let mut batch: Vec<usize> = Vec::new();
    let mut locations: Vec<(usize, usize)> = Vec::new();
    let mut queries_used: u64 = 0;
    let mut round: u64 = 0;
    let mut proposals: u64 = 0;
    let mut best_loss = f64::INFINITY;
    let mut records = Vec::new();
    let mut round_starts = Vec::new();

    // Scores `content` on the current batch; `None` when an externally
    // limited oracle refuses a query.
    let eval = |content: &[f32],
                kind: UniversalKind,
                batch: &[usize],
                locations: &[(usize, usize)],
                queries_used: &mut u64|
     -> Option<f64> {
        let mut total = 0.0;
        for (slot, &img_idx) in batch.iter().enumerate() {
            let input = apply_universal(kind, content, &train[img_idx], locations[slot]);
            let logits = oracle.forward(&input).ok()?;
            *queries_used += 1;
            total += targeted_ce_loss(&logits, cfg.target);
        }
        Some(total)
    };

    'search: while queries_used + n as u64 <= cfg.budget {
        if queries_used >= round * cfg.resample_period {
            // New round: fresh batch, fresh locations, re-score the incumbent.
            round_starts.push(queries_used);
            batch = sample_batch(train.len(), n, &mut batch_rng);
            locations.clear();
            match cfg.kind {
                UniversalKind::Patch { side } => {
                    for _ in 0..n {
                        let row = location_rng.gen_range(0..=h - side);
                        let col = location_rng.gen_range(0..=w - side);
                        locations.push((row, col));
                    }
                }
                UniversalKind::Frame { .. } => locations.extend(std::iter::repeat((0, 0)).take(n)),
            }
            round += 1;
            let content = machine_content(&machine);
            best_loss = match eval(&content, cfg.kind, &batch, &locations, &mut queries_used) {
                Some(l) => l,
                None => break 'search,
            };
            records.push(TraceRecord { query_index: queries_used, best_loss });
            continue;
        }

        let candidate = match &machine {
            Machine::Patch { updater, content } => {
                updater.propose(content, proposals, &mut content_rng).data().to_vec()
            }
            Machine::Frame { updater, bits } => updater.propose(bits, proposals, &mut content_rng),
        };
        proposals += 1;
        let loss = match eval(&candidate, cfg.kind, &batch, &locations, &mut queries_used) {
            Some(l) => l,
            None => break 'search,
        };
        if loss < best_loss {
            best_loss = loss;
            match &mut machine {
                Machine::Patch { content, .. } => {
                    *content = rebuild_patch(content, &candidate);
                }
                Machine::Frame { bits, .. } => *bits = candidate.clone(),
            }
            records.push(TraceRecord { query_index: queries_used, best_loss });
        }
    }

    UniversalOutcome {
        kind: cfg.kind,
        content: machine_content(&machine),
        records,
        round_starts,
        queries_used,
    }
}

fn machine_content(machine: &Machine) -> Vec<f32> {
    match machine {
        Machine::Patch { content, .. } => content.data().to_vec(),
        Machine::Frame { bits, .. } => bits.clone(),
    }
}

fn rebuild_patch(old: &PatchContent, data: &[f32]) -> PatchContent {
    let mut next = old.clone();
    next.data_mut().copy_from_slice(data);
    next
}

/// Uniform batch of image indices: without replacement when the pool is big
/// enough, with replacement otherwise.
fn sample_batch(pool: usize, n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    if pool >= n {
        let mut ids: Vec<usize> = (0..pool).collect();
        for i in 0..n {
            let j = rng.gen_range(i..pool);
            ids.swap(i, j);
        }
        ids.truncate(n);
        ids
    } else {
        (0..n).map(|_| rng.gen_range(0..pool)).collect()
    }
}

/// Measures how often `content` forces the target class on held-out images.
///
/// Patches are scored at `locations_per_image` uniformly drawn locations per
/// image; frames have a fixed placement, so each image is scored once. Uses
/// unmetered forward passes: this is evaluation, not attack.
pub fn eval_universal<M: Model>(
    model: &M,
    images: &[ImageTensor],
    target: usize,
    kind: UniversalKind,
    content: &[f32],
    locations_per_image: usize,
    rng: &RngStream,
) -> f64 {
    assert!(!images.is_empty(), "no evaluation images");
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut loc_rng = rng.substream("eval_locations");
    for img in images {
        let (h, w, _) = img.shape();
        let locations: Vec<(usize, usize)> = match kind {
            UniversalKind::Patch { side } => {
                assert!(locations_per_image >= 1, "need at least one location per image");
                (0..locations_per_image)
                    .map(|_| (loc_rng.gen_range(0..=h - side), loc_rng.gen_range(0..=w - side)))
                    .collect()
            }
            UniversalKind::Frame { .. } => vec![(0, 0)],
        };
        for loc in locations {
            let input = apply_universal(kind, content, img, loc);
            let logits = model.raw_logits(&input);
            if crate::loss::argmax(&logits) == target {
                hits += 1;
            }
            total += 1;
        }
    }
    hits as f64 / total as f64
}
