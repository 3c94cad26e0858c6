//! Tiny victim models: layer definitions, forward inference, reverse-mode
//! gradients, a toy SGD trainer, a binary weight-file format, and
//! query-metered oracles.
//!
//! Parameters are stored as 32-bit reals (the on-disk format), but all
//! arithmetic runs in 64-bit with fixed, shape-derived summation order, so a
//! given weight file produces bit-identical logits on every platform.

mod format;
mod linear;
mod nn;
mod oracle;
mod train;

pub use format::{load_model, model_from_bytes, model_to_bytes, save_model, WeightFileError};
pub use linear::LinearBinaryModel;
pub use nn::{LayerSpec, ModelError, ModelWeights, NnModel};
pub use oracle::{BudgetExhausted, CountingModel, Model, ModelOracle};
pub use train::{train_toy, TrainConfig, TrainError, TrainReport};
