//! Adversarial patches: an `s x s` block of controlled pixels at a movable
//! location.
//!
//! The search alternates between **content updates** (repaint a square inside
//! the patch with a random color-cube corner, the square shrinking over the
//! budget until single-scalar refinements remain) and **location updates**
//! (shift the patch by a uniformly drawn offset whose radius decays linearly).
//! Updates are interleaved in a fixed cycle, e.g. four content updates
//! followed by one location update.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::ThreatAdapter;
use crate::rng::RngStream;
use crate::schedule::{LocationRadiusSchedule, SquareSideSchedule};
use crate::tensor::ImageTensor;

use super::corner_color;

/// Number of random squares painted onto a freshly initialized patch.
pub const INIT_SQUARES: usize = 1_000;
/// Default area-fraction decay start for untargeted patch content updates.
pub const DEFAULT_ALPHA_UNTARGETED: f64 = 0.4;
/// Default area-fraction decay start for targeted patch content updates.
pub const DEFAULT_ALPHA_TARGETED: f64 = 0.1;

/// The pixel grid of a patch, row-major `side x side x channels`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PatchContent {
    side: usize,
    channels: usize,
    data: Vec<f32>,
}

impl PatchContent {
    /// A black patch overpainted with `squares` random clipped squares: the
    /// top-left corner lands anywhere on the patch, the side is uniform in
    /// `[1, side]`, and the color is a random corner of the color cube.
    pub(crate) fn random_init(side: usize, channels: usize, squares: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut content =
            PatchContent { side, channels, data: vec![0.0; side * side * channels] };
        for _ in 0..squares {
            let row = rng.gen_range(0..side);
            let col = rng.gen_range(0..side);
            let sq = rng.gen_range(1..=side);
            let color = corner_color(rng, channels);
            content.paint_square(row, col, sq, &color);
        }
        content
    }

    pub(crate) fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Paints a square clipped at the patch boundary.
    fn paint_square(&mut self, row: usize, col: usize, sq: usize, color: &[f32]) {
        for y in row..(row + sq).min(self.side) {
            for x in col..(col + sq).min(self.side) {
                let at = (y * self.side + x) * self.channels;
                self.data[at..at + self.channels].copy_from_slice(color);
            }
        }
    }

    fn set_scalar(&mut self, row: usize, col: usize, channel: usize, value: f32) {
        self.data[(row * self.side + col) * self.channels + channel] = value;
    }
}

/// Draws content updates for a patch: shrinking squares early, single-scalar
/// refinements once squares have collapsed to single pixels for half of the
/// remaining budget.
#[derive(Debug, Clone)]
pub(crate) struct ContentUpdater {
    schedule: SquareSideSchedule,
    refine_from: u64,
}

impl ContentUpdater {
    pub(crate) fn new(alpha_init: f64, patch_side: usize, iterations: u64) -> Self {
        let schedule = SquareSideSchedule::new(alpha_init, patch_side, iterations);
        let first_unit = schedule.first_unit_iteration();
        let refine_from = first_unit + (iterations - first_unit) / 2;
        ContentUpdater { schedule, refine_from }
    }

    /// First iteration whose updates flip single scalars instead of painting
    /// whole color-cube corners.
    #[cfg(test)]
    pub(crate) fn refine_from(&self) -> u64 {
        self.refine_from
    }

    /// A modified copy of `content` for iteration `i`.
    pub(crate) fn propose(&self, content: &PatchContent, i: u64, rng: &mut ChaCha8Rng) -> PatchContent {
        let mut next = content.clone();
        let side = content.side;
        if i >= self.refine_from {
            let row = rng.gen_range(0..side);
            let col = rng.gen_range(0..side);
            let ch = rng.gen_range(0..content.channels);
            let bit = if rng.gen::<bool>() { 1.0 } else { 0.0 };
            next.set_scalar(row, col, ch, bit);
        } else {
            let sq = self.schedule.side_at(i);
            let row = rng.gen_range(0..=side - sq);
            let col = rng.gen_range(0..=side - sq);
            let color = corner_color(rng, content.channels);
            next.paint_square(row, col, sq, &color);
        }
        next
    }
}

/// How often the patch moves: `content_updates` content proposals followed by
/// `location_updates` location proposals, repeating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchConfig {
    pub side: usize,
    pub alpha_init: f64,
    pub content_updates: u64,
    pub location_updates: u64,
}

impl PatchConfig {
    /// Four content updates per location update.
    pub fn untargeted(side: usize) -> Self {
        PatchConfig { side, alpha_init: DEFAULT_ALPHA_UNTARGETED, content_updates: 4, location_updates: 1 }
    }

    /// Nine content updates per location update (targeted attacks move less).
    pub fn targeted(side: usize) -> Self {
        PatchConfig { side, alpha_init: DEFAULT_ALPHA_TARGETED, content_updates: 9, location_updates: 1 }
    }
}

#[derive(Debug, Clone)]
enum Pending {
    None,
    Content(PatchContent),
    Location { row: usize, col: usize },
}

/// Random-search state for the patch threat model.
pub struct PatchAdapter {
    base: Vec<f32>,
    height: usize,
    width: usize,
    channels: usize,
    cfg: PatchConfig,
    updater: Option<ContentUpdater>,
    radius: Option<LocationRadiusSchedule>,
    row: usize,
    col: usize,
    content: Option<PatchContent>,
    pending: Pending,
    content_rng: Option<ChaCha8Rng>,
    location_rng: Option<ChaCha8Rng>,
}

impl PatchAdapter {
    pub fn new(image: &ImageTensor, cfg: PatchConfig) -> Self {
        let (h, w, c) = image.shape();
        assert!(cfg.side >= 1, "patch side must be positive");
        assert!(cfg.side <= h.min(w), "patch side {} exceeds image {h}x{w}", cfg.side);
        assert!(cfg.content_updates >= 1, "at least one content update per cycle");
        PatchAdapter {
            base: image.data().to_vec(),
            height: h,
            width: w,
            channels: c,
            cfg,
            updater: None,
            radius: None,
            row: 0,
            col: 0,
            content: None,
            pending: Pending::None,
            content_rng: None,
            location_rng: None,
        }
    }

    /// Current patch location `(row, col)` of the top-left corner.
    pub fn location(&self) -> (usize, usize) {
        (self.row, self.col)
    }

    fn paste(&self, content: &PatchContent, row: usize, col: usize) -> Vec<f32> {
        let mut out = self.base.clone();
        let c = self.channels;
        for py in 0..content.side {
            for px in 0..content.side {
                let src = (py * content.side + px) * c;
                let dst = ((row + py) * self.width + (col + px)) * c;
                out[dst..dst + c].copy_from_slice(&content.data[src..src + c]);
            }
        }
        out
    }

    /// True when proposal `i` is a location update.
    fn is_location_step(&self, i: u64) -> bool {
        let cycle = self.cfg.content_updates + self.cfg.location_updates;
        i % cycle >= self.cfg.content_updates
    }
}

impl ThreatAdapter for PatchAdapter {
    fn init_state(&mut self, rng: &RngStream, budget: u64) {
        let s = self.cfg.side;
        self.updater = Some(ContentUpdater::new(self.cfg.alpha_init, s, budget));
        self.radius = Some(LocationRadiusSchedule::new(self.height.max(self.width), budget));

        let mut init = rng.substream("init");
        self.row = init.gen_range(0..=self.height - s);
        self.col = init.gen_range(0..=self.width - s);
        self.content = Some(PatchContent::random_init(s, self.channels, INIT_SQUARES, &mut init));

        self.content_rng = Some(rng.substream("content"));
        self.location_rng = Some(rng.substream("location"));
        self.pending = Pending::None;
    }

    fn propose(&mut self, iteration: u64) {
        if self.is_location_step(iteration) {
            let rng = self.location_rng.as_mut().expect("init_state must run first");
            let r = self.radius.as_ref().unwrap().radius_at(iteration) as i64;
            let dr = rng.gen_range(-r..=r);
            let dc = rng.gen_range(-r..=r);
            let max_row = (self.height - self.cfg.side) as i64;
            let max_col = (self.width - self.cfg.side) as i64;
            let row = (self.row as i64 + dr).clamp(0, max_row) as usize;
            let col = (self.col as i64 + dc).clamp(0, max_col) as usize;
            self.pending = Pending::Location { row, col };
        } else {
            let rng = self.content_rng.as_mut().expect("init_state must run first");
            let content = self.content.as_ref().unwrap();
            let next = self.updater.as_ref().unwrap().propose(content, iteration, rng);
            self.pending = Pending::Content(next);
        }
    }

    fn materialize_current(&self) -> Vec<f32> {
        self.paste(self.content.as_ref().expect("init_state must run first"), self.row, self.col)
    }

    fn materialize_candidate(&self) -> Vec<f32> {
        match &self.pending {
            Pending::None => self.materialize_current(),
            Pending::Content(next) => self.paste(next, self.row, self.col),
            Pending::Location { row, col } => {
                self.paste(self.content.as_ref().unwrap(), *row, *col)
            }
        }
    }

    fn accept_candidate(&mut self) {
        match std::mem::replace(&mut self.pending, Pending::None) {
            Pending::None => {}
            Pending::Content(next) => self.content = Some(next),
            Pending::Location { row, col } => {
                self.row = row;
                self.col = col;
            }
        }
    }
}
