//! Layer specifications, shape checking, forward inference, and reverse-mode
//! gradients for small dense/convolutional classifiers.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One layer of a sequential model.
///
/// Dense weights are stored row-major as `outputs x inputs` and applied as
/// `y = W x + b`. Convolution weights are stored as
/// `out_channels x in_channels x kernel x kernel` with zero padding; feature
/// maps use the same `(row, col, channel)` layout as input images.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2d { kernel: usize, in_channels: usize, out_channels: usize, stride: usize, padding: usize },
    Relu,
    Flatten,
}

impl LayerSpec {
    /// Number of parameters (weights plus biases) the layer owns.
    pub fn param_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs } => outputs * inputs + outputs,
            LayerSpec::Conv2d { kernel, in_channels, out_channels, .. } => {
                out_channels * in_channels * kernel * kernel + out_channels
            }
            LayerSpec::Relu | LayerSpec::Flatten => 0,
        }
    }
}

/// Shape of the activation flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `(height, width, channels)` feature map.
    Map(usize, usize, usize),
    /// Flat vector.
    Vector(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Map(h, w, c) => h * w * c,
            Shape::Vector(n) => n,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Map(h, w, c) => write!(f, "{h}x{w}x{c}"),
            Shape::Vector(n) => write!(f, "vec[{n}]"),
        }
    }
}

/// Model construction / validation errors.
#[derive(Debug)]
pub enum ModelError {
    /// Layer dimensions are zero or otherwise malformed.
    BadLayer { index: usize, reason: String },
    /// A layer cannot consume the shape produced by its predecessor.
    ShapeChain { index: usize, reason: String },
    /// The network output is not a vector of at least two class logits.
    BadOutput { shape: String },
    /// A layer's parameter buffer has the wrong length.
    ParamLen { index: usize, expected: usize, got: usize },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::BadLayer { index, reason } => write!(f, "layer {index}: {reason}"),
            ModelError::ShapeChain { index, reason } => {
                write!(f, "layer {index} breaks the shape chain: {reason}")
            }
            ModelError::BadOutput { shape } => {
                write!(f, "model output must be >= 2 class logits, got {shape}")
            }
            ModelError::ParamLen { index, expected, got } => {
                write!(f, "layer {index} expects {expected} parameters, got {got}")
            }
        }
    }
}

impl std::error::Error for ModelError {}

/// Computes the output shape of `layer` applied to `input`.
fn output_shape(index: usize, layer: &LayerSpec, input: Shape) -> Result<Shape, ModelError> {
    match *layer {
        LayerSpec::Dense { inputs, outputs } => {
            if inputs == 0 || outputs == 0 {
                return Err(ModelError::BadLayer { index, reason: "zero-sized dense layer".into() });
            }
            match input {
                Shape::Vector(n) if n == inputs => Ok(Shape::Vector(outputs)),
                other => Err(ModelError::ShapeChain {
                    index,
                    reason: format!("dense expects vec[{inputs}], got {other}"),
                }),
            }
        }
        LayerSpec::Conv2d { kernel, in_channels, out_channels, stride, padding } => {
            if kernel == 0 || in_channels == 0 || out_channels == 0 || stride == 0 {
                return Err(ModelError::BadLayer { index, reason: "zero-sized conv layer".into() });
            }
            match input {
                Shape::Map(h, w, c) if c == in_channels => {
                    if h + 2 * padding < kernel || w + 2 * padding < kernel {
                        return Err(ModelError::ShapeChain {
                            index,
                            reason: format!("kernel {kernel} larger than padded {h}x{w} input"),
                        });
                    }
                    let oh = (h + 2 * padding - kernel) / stride + 1;
                    let ow = (w + 2 * padding - kernel) / stride + 1;
                    Ok(Shape::Map(oh, ow, out_channels))
                }
                other => Err(ModelError::ShapeChain {
                    index,
                    reason: format!("conv expects a {in_channels}-channel map, got {other}"),
                }),
            }
        }
        LayerSpec::Relu => Ok(input),
        LayerSpec::Flatten => Ok(Shape::Vector(input.len())),
    }
}

/// Validated layer stack plus 32-bit parameters — the canonical, serializable
/// form of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    input_shape: (usize, usize, usize),
    layers: Vec<LayerSpec>,
    params: Vec<Vec<f32>>,
}

impl ModelWeights {
    pub fn new(
        input_shape: (usize, usize, usize),
        layers: Vec<LayerSpec>,
        params: Vec<Vec<f32>>,
    ) -> Result<Self, ModelError> {
        let shapes = check_shapes(input_shape, &layers)?;
        if params.len() != layers.len() {
            return Err(ModelError::ParamLen {
                index: params.len().min(layers.len()),
                expected: layers.get(params.len()).map(LayerSpec::param_len).unwrap_or(0),
                got: 0,
            });
        }
        for (i, (layer, p)) in layers.iter().zip(&params).enumerate() {
            if p.len() != layer.param_len() {
                return Err(ModelError::ParamLen { index: i, expected: layer.param_len(), got: p.len() });
            }
        }
        let _ = shapes;
        Ok(ModelWeights { input_shape, layers, params })
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        let (h, w, c) = self.input_shape;
        h * w * c
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Vec<f32>] {
        &self.params
    }

    pub fn class_count(&self) -> usize {
        let mut shape = Shape::Map(self.input_shape.0, self.input_shape.1, self.input_shape.2);
        for (i, layer) in self.layers.iter().enumerate() {
            shape = output_shape(i, layer, shape).expect("validated at construction");
        }
        shape.len()
    }
}

/// Validates the whole shape chain and returns every intermediate shape
/// (input shape first, output shape last).
fn check_shapes(input: (usize, usize, usize), layers: &[LayerSpec]) -> Result<Vec<Shape>, ModelError> {
    let (h, w, c) = input;
    if h == 0 || w == 0 || c == 0 {
        return Err(ModelError::BadLayer { index: 0, reason: "zero-sized input shape".into() });
    }
    let mut shapes = vec![Shape::Map(h, w, c)];
    for (i, layer) in layers.iter().enumerate() {
        let next = output_shape(i, layer, *shapes.last().unwrap())?;
        shapes.push(next);
    }
    match shapes.last() {
        Some(Shape::Vector(k)) if *k >= 2 => Ok(shapes),
        Some(other) => Err(ModelError::BadOutput { shape: other.to_string() }),
        None => Err(ModelError::BadOutput { shape: "empty model".into() }),
    }
}

/// Runtime inference engine: 64-bit copies of the parameters plus cached
/// shapes.
#[derive(Debug, Clone)]
pub struct NnModel {
    layers: Vec<LayerSpec>,
    params: Vec<Vec<f64>>,
    shapes: Vec<Shape>,
    input_shape: (usize, usize, usize),
}

impl NnModel {
    pub fn from_weights(weights: &ModelWeights) -> Self {
        let shapes = check_shapes(weights.input_shape, &weights.layers).expect("weights validated");
        NnModel {
            layers: weights.layers.clone(),
            params: weights.params.iter().map(|p| p.iter().map(|&v| f64::from(v)).collect()).collect(),
            shapes,
            input_shape: weights.input_shape,
        }
    }

    /// Builds directly from 64-bit parameters (used by the trainer and by
    /// gradient tests). Fails if shapes or parameter lengths are inconsistent.
    pub fn from_f64_params(
        input_shape: (usize, usize, usize),
        layers: Vec<LayerSpec>,
        params: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let shapes = check_shapes(input_shape, &layers)?;
        for (i, (layer, p)) in layers.iter().zip(&params).enumerate() {
            if p.len() != layer.param_len() {
                return Err(ModelError::ParamLen { index: i, expected: layer.param_len(), got: p.len() });
            }
        }
        Ok(NnModel { layers, params, shapes, input_shape })
    }

    /// Rounds the runtime parameters to the canonical 32-bit form.
    pub fn snapshot(&self) -> ModelWeights {
        ModelWeights {
            input_shape: self.input_shape,
            layers: self.layers.clone(),
            params: self.params.iter().map(|p| p.iter().map(|&v| v as f32).collect()).collect(),
        }
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.shapes[0].len()
    }

    pub fn class_count(&self) -> usize {
        self.shapes.last().unwrap().len()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub(crate) fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.params
    }

    /// Class logits for a flat input of length [`Self::input_len`].
    pub fn logits(&self, x: &[f32]) -> Vec<f64> {
        self.forward_trace(x).pop().unwrap()
    }

    /// Runs the forward pass keeping every intermediate activation. The first
    /// entry is the input promoted to 64 bits; the last is the logits.
    pub fn forward_trace(&self, x: &[f32]) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.input_len(), "input length mismatch");
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.iter().map(|&v| f64::from(v)).collect());
        for (i, layer) in self.layers.iter().enumerate() {
            let out = self.apply(i, layer, acts.last().unwrap());
            acts.push(out);
        }
        acts
    }

    fn apply(&self, index: usize, layer: &LayerSpec, input: &[f64]) -> Vec<f64> {
        match *layer {
            LayerSpec::Dense { inputs, outputs } => {
                let p = &self.params[index];
                let (w, b) = p.split_at(outputs * inputs);
                let mut out = Vec::with_capacity(outputs);
                for o in 0..outputs {
                    let row = &w[o * inputs..(o + 1) * inputs];
                    let mut acc = b[o];
                    for (wi, xi) in row.iter().zip(input) {
                        acc += wi * xi;
                    }
                    out.push(acc);
                }
                out
            }
            LayerSpec::Conv2d { kernel, in_channels, out_channels, stride, padding } => {
                let (h, w, _) = match self.shapes[index] {
                    Shape::Map(h, w, c) => (h, w, c),
                    Shape::Vector(_) => unreachable!("validated at construction"),
                };
                let (oh, ow, _) = match self.shapes[index + 1] {
                    Shape::Map(h, w, c) => (h, w, c),
                    Shape::Vector(_) => unreachable!(),
                };
                let p = &self.params[index];
                let (wts, b) = p.split_at(out_channels * in_channels * kernel * kernel);
                let mut out = vec![0.0; oh * ow * out_channels];
                for oy in 0..oh {
                    for ox in 0..ow {
                        for oc in 0..out_channels {
                            let mut acc = b[oc];
                            for ky in 0..kernel {
                                let iy = oy * stride + ky;
                                if iy < padding || iy - padding >= h {
                                    continue;
                                }
                                for kx in 0..kernel {
                                    let ix = ox * stride + kx;
                                    if ix < padding || ix - padding >= w {
                                        continue;
                                    }
                                    let base = ((iy - padding) * w + (ix - padding)) * in_channels;
                                    let wbase = ((oc * in_channels) * kernel + ky) * kernel + kx;
                                    for ic in 0..in_channels {
                                        // weight index: (((oc*ci + ic)*k + ky)*k + kx)
                                        let wi = wbase + ic * kernel * kernel;
                                        acc += wts[wi] * input[base + ic];
                                    }
                                }
                            }
                            out[(oy * ow + ox) * out_channels + oc] = acc;
                        }
                    }
                }
                out
            }
            LayerSpec::Relu => input.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            LayerSpec::Flatten => input.to_vec(),
        }
    }

    /// Gradient of a scalar objective with respect to the input, given the
    /// objective's gradient with respect to the logits.
    pub fn input_gradient(&self, x: &[f32], dlogits: &[f64]) -> Vec<f64> {
        let acts = self.forward_trace(x);
        self.backward(&acts, dlogits, None)
    }

    /// Reverse pass. When `param_grads` is supplied, per-layer parameter
    /// gradients are accumulated into it (same layout as the parameters).
    /// Returns the gradient with respect to the input.
    pub(crate) fn backward(
        &self,
        acts: &[Vec<f64>],
        dlogits: &[f64],
        mut param_grads: Option<&mut [Vec<f64>]>,
    ) -> Vec<f64> {
        assert_eq!(dlogits.len(), self.class_count(), "logit gradient length mismatch");
        let mut grad = dlogits.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[i];
            grad = match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let p = &self.params[i];
                    let w = &p[..outputs * inputs];
                    if let Some(pg) = param_grads.as_deref_mut() {
                        let (wg, bg) = pg[i].split_at_mut(outputs * inputs);
                        for o in 0..outputs {
                            let g = grad[o];
                            bg[o] += g;
                            let row = &mut wg[o * inputs..(o + 1) * inputs];
                            for (slot, xi) in row.iter_mut().zip(input) {
                                *slot += g * xi;
                            }
                        }
                    }
                    let mut dx = vec![0.0; inputs];
                    for o in 0..outputs {
                        let g = grad[o];
                        let row = &w[o * inputs..(o + 1) * inputs];
                        for (slot, wi) in dx.iter_mut().zip(row) {
                            *slot += g * wi;
                        }
                    }
                    dx
                }
                LayerSpec::Conv2d { kernel, in_channels, out_channels, stride, padding } => {
                    let (h, w, _) = match self.shapes[i] {
                        Shape::Map(h, w, c) => (h, w, c),
                        Shape::Vector(_) => unreachable!(),
                    };
                    let (oh, ow, _) = match self.shapes[i + 1] {
                        Shape::Map(h, w, c) => (h, w, c),
                        Shape::Vector(_) => unreachable!(),
                    };
                    let p = &self.params[i];
                    let wlen = out_channels * in_channels * kernel * kernel;
                    let wts = &p[..wlen];
                    let mut dx = vec![0.0; h * w * in_channels];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for oc in 0..out_channels {
                                let g = grad[(oy * ow + ox) * out_channels + oc];
                                if let Some(pg) = param_grads.as_deref_mut() {
                                    pg[i][wlen + oc] += g;
                                }
                                for ky in 0..kernel {
                                    let iy = oy * stride + ky;
                                    if iy < padding || iy - padding >= h {
                                        continue;
                                    }
                                    for kx in 0..kernel {
                                        let ix = ox * stride + kx;
                                        if ix < padding || ix - padding >= w {
                                            continue;
                                        }
                                        let base = ((iy - padding) * w + (ix - padding)) * in_channels;
                                        let wbase = ((oc * in_channels) * kernel + ky) * kernel + kx;
                                        for ic in 0..in_channels {
                                            let wi = wbase + ic * kernel * kernel;
                                            dx[base + ic] += g * wts[wi];
                                            if let Some(pg) = param_grads.as_deref_mut() {
                                                pg[i][wi] += g * acts[i][base + ic];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    dx
                }
                // ReLU subgradient: zero at the kink.
                LayerSpec::Relu => {
                    input.iter().zip(&grad).map(|(&x, &g)| if x > 0.0 { g } else { 0.0 }).collect()
                }
                LayerSpec::Flatten => grad,
            };
        }
        grad
    }
}

impl super::oracle::Model for NnModel {
    fn raw_logits(&self, input: &[f32]) -> Vec<f64> {
        self.logits(input)
    }
    fn input_len(&self) -> usize {
        NnModel::input_len(self)
    }
    fn class_count(&self) -> usize {
        NnModel::class_count(self)
    }
}
