//! Adversarial frames: every pixel within `w` of the image border is
//! attacker-controlled, the interior is untouched.
//!
//! Two searches are implemented. The default anchors a shrinking square at a
//! uniformly drawn frame pixel and recolors the part of the square that lies
//! on the frame (late in the budget only a single channel at a time). The
//! alternative keeps the squares fully contained in the frame band, mirroring
//! square-attack updates restricted to the frame.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::ThreatAdapter;
use crate::rng::RngStream;
use crate::schedule::{FrameSquareSchedule, FrameVariant};
use crate::tensor::ImageTensor;

use super::corner_color;

/// Default area-fraction decay start for frame updates.
pub const DEFAULT_ALPHA: f64 = 2.0;

/// The set of pixels within `frame_width` of the image border.
#[derive(Debug, Clone)]
pub struct FrameMask {
    height: usize,
    width: usize,
    frame_width: usize,
    /// Mask pixels in row-major order.
    pixels: Vec<(usize, usize)>,
    /// `row * width + col` -> index into `pixels`, for mask pixels only.
    slot_of: Vec<Option<usize>>,
}

impl FrameMask {
    pub fn new(height: usize, width: usize, frame_width: usize) -> Self {
        assert!(frame_width >= 1, "frame width must be positive");
        assert!(height >= 1 && width >= 1);
        let mut pixels = Vec::new();
        let mut slot_of = vec![None; height * width];
        for r in 0..height {
            for c in 0..width {
                let on_frame = r < frame_width
                    || r >= height.saturating_sub(frame_width)
                    || c < frame_width
                    || c >= width.saturating_sub(frame_width);
                if on_frame {
                    slot_of[r * width + c] = Some(pixels.len());
                    pixels.push((r, c));
                }
            }
        }
        FrameMask { height, width, frame_width, pixels, slot_of }
    }

    /// Number of pixels on the frame.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn frame_width(&self) -> usize {
        self.frame_width
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.slot_of[row * self.width + col].is_some()
    }

    /// Index of `(row, col)` among the mask pixels, if it is on the frame.
    pub fn slot(&self, row: usize, col: usize) -> Option<usize> {
        self.slot_of[row * self.width + col]
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }
}

/// Draws frame updates: anchored (or contained) squares early, single pixels
/// late, with the single-channel refinement phase for the anchored search.
#[derive(Debug, Clone)]
pub(crate) struct FrameUpdater {
    mask: FrameMask,
    channels: usize,
    schedule: FrameSquareSchedule,
    variant: FrameVariant,
    single_channel_start: u64,
}

impl FrameUpdater {
    pub(crate) fn new(
        mask: FrameMask,
        channels: usize,
        alpha_init: f64,
        iterations: u64,
        variant: FrameVariant,
    ) -> Self {
        let schedule = FrameSquareSchedule::new(alpha_init, mask.frame_width, iterations, variant);
        let single_channel_start = match variant {
            FrameVariant::FrameRs => schedule.single_channel_start(),
            // The contained search never switches to single channels.
            FrameVariant::SaInFrame => iterations,
        };
        FrameUpdater { mask, channels, schedule, variant, single_channel_start }
    }

    pub(crate) fn mask(&self) -> &FrameMask {
        &self.mask
    }

    /// Fresh iid bits over the whole frame.
    pub(crate) fn random_init(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        (0..self.mask.len() * self.channels)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 })
            .collect()
    }

    /// A modified copy of `bits` for iteration `i`.
    pub(crate) fn propose(&self, bits: &[f32], i: u64, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let mut next = bits.to_vec();
        let side = self.schedule.side_at(i);
        let slots = match self.variant {
            FrameVariant::FrameRs => self.anchored_region(side, rng),
            FrameVariant::SaInFrame => self.contained_region(side, rng),
        };
        if i >= self.single_channel_start {
            let ch = rng.gen_range(0..self.channels);
            let bit = if rng.gen::<bool>() { 1.0 } else { 0.0 };
            for slot in slots {
                next[slot * self.channels + ch] = bit;
            }
        } else {
            let color = corner_color(rng, self.channels);
            for slot in slots {
                next[slot * self.channels..(slot + 1) * self.channels].copy_from_slice(&color);
            }
        }
        next
    }

    /// Frame slots covered by a square with a uniformly chosen frame pixel as
    /// a uniformly chosen corner, clipped to the frame and the image.
    fn anchored_region(&self, side: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let (ar, ac) = self.mask.pixels[rng.gen_range(0..self.mask.len())];
        let corner = rng.gen_range(0..4u8);
        let s = side as i64;
        let (r0, c0) = match corner {
            0 => (ar as i64, ac as i64),                 // anchor = top-left
            1 => (ar as i64, ac as i64 - s + 1),         // anchor = top-right
            2 => (ar as i64 - s + 1, ac as i64),         // anchor = bottom-left
            _ => (ar as i64 - s + 1, ac as i64 - s + 1), // anchor = bottom-right
        };
        let mut slots = Vec::new();
        for r in r0.max(0)..(r0 + s).min(self.mask.height as i64) {
            for c in c0.max(0)..(c0 + s).min(self.mask.width as i64) {
                if let Some(slot) = self.mask.slot(r as usize, c as usize) {
                    slots.push(slot);
                }
            }
        }
        slots
    }

    /// Frame slots of a square drawn uniformly among those fully contained in
    /// the frame band (and the image).
    fn contained_region(&self, side: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let (h, w, fw) = (self.mask.height, self.mask.width, self.mask.frame_width);
        let mut anchors = Vec::new();
        for r in 0..h.saturating_sub(side - 1) {
            for c in 0..w.saturating_sub(side - 1) {
                let in_top = r + side <= fw;
                let in_bottom = r >= h.saturating_sub(fw);
                let in_left = c + side <= fw;
                let in_right = c >= w.saturating_sub(fw);
                if in_top || in_bottom || in_left || in_right {
                    anchors.push((r, c));
                }
            }
        }
        assert!(!anchors.is_empty(), "no contained position for a side-{side} square");
        let (r0, c0) = anchors[rng.gen_range(0..anchors.len())];
        let mut slots = Vec::with_capacity(side * side);
        for r in r0..r0 + side {
            for c in c0..c0 + side {
                slots.push(self.mask.slot(r, c).expect("contained square lies on the frame"));
            }
        }
        slots
    }
}

/// Search configuration for the frame threat model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    pub frame_width: usize,
    pub alpha_init: f64,
    pub variant: FrameVariant,
}

impl FrameConfig {
    /// The anchored square search.
    pub fn anchored(frame_width: usize) -> Self {
        FrameConfig { frame_width, alpha_init: DEFAULT_ALPHA, variant: FrameVariant::FrameRs }
    }

    /// The contained square search.
    pub fn contained(frame_width: usize) -> Self {
        FrameConfig { frame_width, alpha_init: DEFAULT_ALPHA, variant: FrameVariant::SaInFrame }
    }
}

/// Random-search state for the frame threat model.
pub struct FrameAdapter {
    base: Vec<f32>,
    width: usize,
    channels: usize,
    cfg: FrameConfig,
    updater: Option<FrameUpdater>,
    bits: Vec<f32>,
    pending: Option<Vec<f32>>,
    rng: Option<ChaCha8Rng>,
}

impl FrameAdapter {
    pub fn new(image: &ImageTensor, cfg: FrameConfig) -> Self {
        let (h, w, c) = image.shape();
        assert!(cfg.frame_width >= 1, "frame width must be positive");
        assert!(
            2 * cfg.frame_width <= h.min(w),
            "frame width {} too large for a {h}x{w} image",
            cfg.frame_width
        );
        FrameAdapter {
            base: image.data().to_vec(),
            width: w,
            channels: c,
            cfg,
            updater: None,
            bits: Vec::new(),
            pending: None,
            rng: None,
        }
    }

    fn apply(&self, bits: &[f32]) -> Vec<f32> {
        let mut out = self.base.clone();
        let mask = self.updater.as_ref().expect("init_state must run first").mask();
        for (slot, &(r, c)) in mask.pixels().iter().enumerate() {
            let dst = (r * self.width + c) * self.channels;
            out[dst..dst + self.channels]
                .copy_from_slice(&bits[slot * self.channels..(slot + 1) * self.channels]);
        }
        out
    }
}

impl ThreatAdapter for FrameAdapter {
    fn init_state(&mut self, rng: &RngStream, budget: u64) {
        let h = self.base.len() / (self.width * self.channels);
        let mask = FrameMask::new(h, self.width, self.cfg.frame_width);
        let updater =
            FrameUpdater::new(mask, self.channels, self.cfg.alpha_init, budget, self.cfg.variant);
        let mut init = rng.substream("init");
        self.bits = updater.random_init(&mut init);
        self.updater = Some(updater);
        self.rng = Some(rng.substream("propose"));
        self.pending = None;
    }

    fn propose(&mut self, iteration: u64) {
        let updater = self.updater.as_ref().expect("init_state must run first");
        let rng = self.rng.as_mut().unwrap();
        self.pending = Some(updater.propose(&self.bits, iteration, rng));
    }

    fn materialize_current(&self) -> Vec<f32> {
        self.apply(&self.bits)
    }

    fn materialize_candidate(&self) -> Vec<f32> {
        match &self.pending {
            Some(bits) => self.apply(bits),
            None => self.materialize_current(),
        }
    }

    fn accept_candidate(&mut self) {
        if let Some(bits) = self.pending.take() {
            self.bits = bits;
        }
    }
}
