//! Threat-model adapters for the random-search engine.
//!
//! Each adapter owns the perturbation state for one threat model and plugs
//! into [`crate::engine::run_attack`]:
//!
//! - [`l0`]: at most `k` perturbed pixels (or scalars, or binary feature
//!   additions);
//! - [`patch`]: an `s x s` adversarial patch with a movable location;
//! - [`frame`]: an adversarial frame of width `w` around the image;
//! - [`universal`]: image-agnostic patches and frames trained on batches.

pub mod frame;
pub mod l0;
pub mod patch;
pub mod universal;

pub use frame::{FrameAdapter, FrameConfig, FrameMask};
pub use l0::L0Adapter;
pub use patch::{PatchAdapter, PatchConfig};
pub use universal::{
    apply_universal, eval_universal, run_universal, UniversalConfig, UniversalKind,
    UniversalOutcome,
};

use rand::Rng;

/// A uniformly random corner of the RGB cube: each channel independently 0 or 1.
fn corner_color(rng: &mut impl Rng, channels: usize) -> Vec<f32> {
    (0..channels).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect()
}
