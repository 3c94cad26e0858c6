//! Minibatch SGD trainer for the toy victim models.
//!
//! Deliberately simple: cross-entropy loss, a constant learning rate, Glorot
//! uniform initialization, and a fresh data order each epoch. Everything is
//! seeded through [`RngStream`], so a (dataset, layers, config) triple always
//! produces the same weights.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::RngStream;
use crate::tensor::LabeledDataset;

use super::nn::{LayerSpec, ModelError, ModelWeights, NnModel};

/// Hyperparameters for [`train_toy`].
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, learning_rate: 0.05, batch_size: 32, seed: 0 }
    }
}

/// Summary returned alongside the trained weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean cross-entropy over the final epoch (measured before each update).
    pub final_loss: f64,
    /// Training-set accuracy of the rounded (32-bit) weights.
    pub train_accuracy: f64,
}

#[derive(Debug)]
pub enum TrainError {
    /// The layer stack is inconsistent with the data.
    Model(ModelError),
    /// Zero epochs, zero batch size, or a non-positive learning rate.
    BadConfig { reason: String },
    /// The model emits fewer logits than the dataset has classes.
    ClassMismatch { model_classes: usize, data_classes: usize },
    /// Loss or parameters became non-finite.
    Diverged { epoch: usize },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Model(e) => write!(f, "invalid model: {e}"),
            TrainError::BadConfig { reason } => write!(f, "bad training config: {reason}"),
            TrainError::ClassMismatch { model_classes, data_classes } => {
                write!(f, "model scores {model_classes} classes but data has {data_classes}")
            }
            TrainError::Diverged { epoch } => {
                write!(f, "training diverged in epoch {epoch} (non-finite loss)")
            }
        }
    }
}

impl std::error::Error for TrainError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            TrainError::Model(e) => Some(e),
            _ => None,
        }
    }
}

/// Glorot-uniform parameters for one layer; biases start at zero.
fn init_layer(layer: &LayerSpec, rng: &mut impl Rng) -> Vec<f64> {
    match *layer {
        LayerSpec::Dense { inputs, outputs } => {
            let limit = (6.0 / (inputs + outputs) as f64).sqrt();
            let mut p: Vec<f64> = (0..outputs * inputs).map(|_| rng.gen_range(-limit..limit)).collect();
            p.extend(std::iter::repeat(0.0).take(outputs));
            p
        }
        LayerSpec::Conv2d { kernel, in_channels, out_channels, .. } => {
            let fan_in = in_channels * kernel * kernel;
            let fan_out = out_channels * kernel * kernel;
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n = out_channels * in_channels * kernel * kernel;
            let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
            p.extend(std::iter::repeat(0.0).take(out_channels));
            p
        }
        LayerSpec::Relu | LayerSpec::Flatten => Vec::new(),
    }
}

/// Cross-entropy of `logits` against `label`, max-shifted for stability.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|&v| (v - m).exp()).sum::<f64>().ln() + m;
    log_sum - logits[label]
}

/// Softmax probabilities, max-shifted.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Trains a classifier on `dataset` and returns the rounded 32-bit weights.
///
/// The reported accuracy is measured with the rounded weights — the exact
/// model a consumer reconstructs from a weight file — not the 64-bit
/// training-time parameters.
pub fn train_toy(
    dataset: &LabeledDataset,
    layers: Vec<LayerSpec>,
    cfg: &TrainConfig,
) -> Result<(ModelWeights, TrainReport), TrainError> {
    if cfg.epochs == 0 {
        return Err(TrainError::BadConfig { reason: "epochs must be positive".into() });
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::BadConfig { reason: "batch_size must be positive".into() });
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(TrainError::BadConfig { reason: "learning_rate must be positive".into() });
    }

    let stream = RngStream::new(cfg.seed);
    let mut init_rng = stream.substream("init");
    let params: Vec<Vec<f64>> = layers.iter().map(|l| init_layer(l, &mut init_rng)).collect();
    let mut model =
        NnModel::from_f64_params(dataset.shape(), layers, params).map_err(TrainError::Model)?;
    if model.class_count() < dataset.class_count() {
        return Err(TrainError::ClassMismatch {
            model_classes: model.class_count(),
            data_classes: dataset.class_count(),
        });
    }

    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut epoch_loss = 0.0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut stream.derive("epoch", epoch as u64).substream("order"));
        epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for g in &mut grads {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let acts = model.forward_trace(dataset.image(i).data());
                let logits = acts.last().unwrap();
                let label = dataset.label(i);
                epoch_loss += cross_entropy(logits, label);
                let mut dlogits = softmax(logits);
                dlogits[label] -= 1.0;
                dlogits.iter_mut().for_each(|v| *v *= scale);
                model.backward(&acts, &dlogits, Some(&mut grads));
            }
            for (p, g) in model.params_mut().iter_mut().zip(&grads) {
                for (pv, gv) in p.iter_mut().zip(g) {
                    *pv -= cfg.learning_rate * gv;
                }
            }
        }
        epoch_loss /= n as f64;
        if !epoch_loss.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
    }

    let weights = model.snapshot();
    let snapped = NnModel::from_weights(&weights);
    let correct = (0..n)
        .filter(|&i| crate::loss::argmax(&snapped.logits(dataset.image(i).data())) == dataset.label(i))
        .count();
    let report = TrainReport { final_loss: epoch_loss, train_accuracy: correct as f64 / n as f64 };
    Ok((weights, report))
}
