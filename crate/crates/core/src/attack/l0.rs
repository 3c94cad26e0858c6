//! Sparse attacks that perturb at most `k` elements of the input.
//!
//! The search state is a set `M` of `k` perturbed elements plus per-element
//! replacement values. A proposal swaps a few elements of `M` for fresh ones
//! drawn outside `M` (with fresh values); the swap count decays over the
//! budget via the shared fraction schedule. Three element universes are
//! supported:
//!
//! - **pixels**: an element is one pixel, all channels replaced together;
//! - **scalars**: an element is a single input scalar;
//! - **binary**: an element is one currently-zero mutable feature that can
//!   only be set to one (feature-addition attacks on binary detectors).
//!
//! Replacement values are corners of the per-element value cube (each channel
//! independently 0 or 1), which is where the margin loss is extremized for
//! the piecewise-linear victims used here.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::ThreatAdapter;
use crate::rng::RngStream;
use crate::schedule::{swap_count, AlphaRule, AlphaSchedule};
use crate::tensor::{BinaryFeatureVector, ImageTensor};

/// Default decay start for untargeted image attacks.
pub const DEFAULT_ALPHA_UNTARGETED: f64 = 0.3;
/// Default decay start for targeted image attacks.
pub const DEFAULT_ALPHA_TARGETED: f64 = 0.1;
/// Default decay start for binary feature-addition attacks.
pub const DEFAULT_ALPHA_BINARY: f64 = 1.6;

/// Which universe of elements the attack perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Universe {
    /// `h*w` pixels, `channels` values each.
    Pixels { channels: usize },
    /// Every input scalar individually.
    Scalars,
    /// Mutable zero features; replacement value is always 1.
    Binary,
}

/// Random-search state for the `k`-sparse threat model.
pub struct L0Adapter {
    base: Vec<f32>,
    /// For binary mode, element id -> input index; otherwise identity.
    targets: Vec<usize>,
    universe: Universe,
    vpe: usize,
    k: usize,
    alpha: AlphaRule,
    schedule: Option<AlphaSchedule>,
    /// Perturbed element ids; always exactly `k` entries.
    inside: Vec<usize>,
    /// Unperturbed element ids.
    outside: Vec<usize>,
    /// Replacement values, `vpe` per inside element, co-indexed with `inside`.
    values: Vec<f32>,
    /// Proposal scratch: how many elements the pending swap touches.
    pending: usize,
    /// Fresh values for the pending elements.
    pending_values: Vec<f32>,
    /// True when the pending proposal recolors kept elements instead of
    /// swapping (only possible when `M` is the whole universe).
    pending_recolor: bool,
    rng: Option<ChaCha8Rng>,
}

impl L0Adapter {
    /// Perturbs up to `k` whole pixels of `image`.
    pub fn pixels(image: &ImageTensor, k: usize, alpha: AlphaRule) -> Self {
        let (h, w, c) = image.shape();
        Self::new(image.data().to_vec(), h * w, c, Universe::Pixels { channels: c }, k, alpha)
    }

    /// Perturbs up to `k` individual scalars of `image`.
    pub fn scalars(image: &ImageTensor, k: usize, alpha: AlphaRule) -> Self {
        let n = image.scalar_len();
        Self::new(image.data().to_vec(), n, 1, Universe::Scalars, k, alpha)
    }

    /// Sets up to `k` mutable zero features of `features` to one.
    ///
    /// `k` is silently capped at the number of addable features: adding every
    /// addable feature is the strongest perturbation this threat model allows.
    pub fn binary(features: &BinaryFeatureVector, k: usize, alpha: AlphaRule) -> Self {
        let addable = features.addable_indices();
        assert!(!addable.is_empty(), "no addable features to perturb");
        let k = k.min(addable.len()).max(1);
        let mut adapter =
            Self::new(features.to_input(), addable.len(), 1, Universe::Binary, k, alpha);
        adapter.targets = addable;
        adapter
    }

    fn new(
        base: Vec<f32>,
        elements: usize,
        vpe: usize,
        universe: Universe,
        k: usize,
        alpha: AlphaRule,
    ) -> Self {
        assert!(k >= 1, "k must be at least 1");
        assert!(k <= elements, "k = {k} exceeds the {elements} perturbable elements");
        let targets = match universe {
            Universe::Binary => Vec::new(), // replaced by the caller
            _ => (0..elements).collect(),
        };
        L0Adapter {
            base,
            targets,
            universe,
            vpe,
            k,
            alpha,
            schedule: None,
            inside: Vec::new(),
            outside: Vec::new(),
            values: Vec::new(),
            pending: 0,
            pending_values: Vec::new(),
            pending_recolor: false,
            rng: None,
        }
    }

    /// The conventional decay start for an image attack with this goal.
    pub fn default_alpha(targeted: bool) -> AlphaRule {
        AlphaRule::Decaying {
            alpha_init: if targeted { DEFAULT_ALPHA_TARGETED } else { DEFAULT_ALPHA_UNTARGETED },
        }
    }

    /// Currently perturbed element ids (for diagnostics and tests).
    pub fn perturbed_elements(&self) -> &[usize] {
        &self.inside
    }

    pub fn sparsity(&self) -> usize {
        self.k
    }

    /// Writes element `e`'s replacement values (or the base values if
    /// `values` is `None`) into `out`.
    fn write_element(&self, out: &mut [f32], e: usize, values: Option<&[f32]>) {
        let start = match self.universe {
            Universe::Binary => self.targets[e],
            _ => e * self.vpe,
        };
        match values {
            Some(v) => out[start..start + self.vpe].copy_from_slice(v),
            None => {
                let all_one = [1.0];
                out[start..start + self.vpe].copy_from_slice(&all_one[..self.vpe])
            }
        }
    }

    fn draw_values(rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<f32>) {
        out.clear();
        out.extend((0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }));
    }
}

impl ThreatAdapter for L0Adapter {
    fn init_state(&mut self, rng: &RngStream, budget: u64) {
        self.schedule = Some(self.alpha.instantiate(budget));
        let mut init = rng.substream("init");

        // Partial Fisher-Yates: the first k entries become M, the rest stay
        // outside, both in shuffle order.
        let n = self.targets.len();
        let mut ids: Vec<usize> = (0..n).collect();
        for i in 0..self.k {
            let j = init.gen_range(i..n);
            ids.swap(i, j);
        }
        self.outside = ids.split_off(self.k);
        self.inside = ids;

        self.values.clear();
        match self.universe {
            Universe::Binary => {}
            _ => Self::draw_values(&mut init, self.k * self.vpe, &mut self.values),
        }
        self.rng = Some(rng.substream("propose"));
    }

    fn propose(&mut self, iteration: u64) {
        let schedule = self.schedule.as_ref().expect("init_state must run first");
        let alpha = schedule.alpha_at(iteration);
        let rng = self.rng.as_mut().expect("init_state must run first");

        let mut s = swap_count(alpha, self.k).min(self.k);
        self.pending_recolor = self.outside.is_empty();
        if !self.pending_recolor {
            s = s.min(self.outside.len());
        }

        // Choose the elements leaving M: shuffle a prefix of `inside`,
        // carrying each element's values along.
        for i in 0..s {
            let j = rng.gen_range(i..self.inside.len());
            self.inside.swap(i, j);
            if !self.values.is_empty() {
                for t in 0..self.vpe {
                    self.values.swap(i * self.vpe + t, j * self.vpe + t);
                }
            }
        }
        // Choose the elements entering M.
        if !self.pending_recolor {
            for i in 0..s {
                let j = rng.gen_range(i..self.outside.len());
                self.outside.swap(i, j);
            }
        }
        match self.universe {
            Universe::Binary => self.pending_values.clear(),
            _ => Self::draw_values(rng, s * self.vpe, &mut self.pending_values),
        }
        self.pending = s;
    }

    fn materialize_current(&self) -> Vec<f32> {
        let mut out = self.base.clone();
        for (j, &e) in self.inside.iter().enumerate() {
            let v = match self.universe {
                Universe::Binary => None,
                _ => Some(&self.values[j * self.vpe..(j + 1) * self.vpe]),
            };
            self.write_element(&mut out, e, v);
        }
        out
    }

    fn materialize_candidate(&self) -> Vec<f32> {
        let s = self.pending;
        let mut out = self.base.clone();
        // Kept elements (and, when recoloring, every element) stay applied.
        let kept = if self.pending_recolor { 0 } else { s };
        for (j, &e) in self.inside.iter().enumerate().skip(kept) {
            let v = match self.universe {
                Universe::Binary => None,
                _ => Some(&self.values[j * self.vpe..(j + 1) * self.vpe]),
            };
            self.write_element(&mut out, e, v);
        }
        if self.pending_recolor {
            for j in 0..s {
                let v = match self.universe {
                    Universe::Binary => None,
                    _ => Some(&self.pending_values[j * self.vpe..(j + 1) * self.vpe]),
                };
                self.write_element(&mut out, self.inside[j], v);
            }
        } else {
            for j in 0..s {
                let v = match self.universe {
                    Universe::Binary => None,
                    _ => Some(&self.pending_values[j * self.vpe..(j + 1) * self.vpe]),
                };
                self.write_element(&mut out, self.outside[j], v);
            }
        }
        out
    }

    fn accept_candidate(&mut self) {
        let s = self.pending;
        if self.pending_recolor {
            if !self.values.is_empty() {
                self.values[..s * self.vpe].copy_from_slice(&self.pending_values);
            }
            return;
        }
        for j in 0..s {
            std::mem::swap(&mut self.inside[j], &mut self.outside[j]);
        }
        match self.universe {
            Universe::Binary => {}
            _ => self.values[..s * self.vpe].copy_from_slice(&self.pending_values),
        }
    }
}
