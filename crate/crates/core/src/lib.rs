//! Sparse adversarial attacks on classifiers via random search.
//!
//! The crate bundles everything needed to run query-efficient sparse
//! black-box attacks end to end on small, self-contained victim models:
//!
//! - [`tensor`]: image / binary-feature containers, PPM/PGM datasets, and a
//!   synthetic dataset generator;
//! - [`model`]: a tiny dense/conv inference engine with reverse-mode
//!   gradients, an SGD trainer, a binary weight format, and query-metered
//!   oracles;
//! - [`loss`]: margin and targeted cross-entropy objectives;
//! - [`schedule`]: the piecewise-constant step-size schedules the attacks
//!   anneal with;
//! - [`engine`]: the generic accept/reject random-search loop;
//! - [`attack`]: threat-model adapters (l0 pixels/features/binary, patches,
//!   frames, universal patches and frames);
//! - [`baseline`]: gradient-estimation and white-box baselines (PGD0,
//!   JSMA-style corner flips);
//! - [`theory`]: closed-form expected-query counts for the top-k linear case
//!   plus a Monte-Carlo simulator;
//! - [`harness`]: batch experiment runner, success curves, ablations, CSV and
//!   SVG reporting.
//!
//! All randomness flows through [`rng::RngStream`], so a fixed 64-bit seed
//! reproduces every trajectory bit for bit regardless of worker count.

pub mod attack;
pub mod baseline;
pub mod engine;
pub mod harness;
pub mod loss;
pub mod model;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod theory;
