//! Binary weight-file format.
//!
//! Layout:
//!
//! ```text
//! "SRSW1\n"                            magic
//! {"input":[h,w,c],"layers":[...]}\n   one-line JSON manifest
//! <raw little-endian f32 values>       parameters, layer order
//! ```
//!
//! The manifest fully determines every parameter count, so the payload length
//! is validated exactly; save followed by load reproduces the weights bit for
//! bit.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nn::{LayerSpec, ModelError, ModelWeights};

const MAGIC: &[u8] = b"SRSW1\n";

/// Errors for weight-file encoding and decoding.
#[derive(Debug)]
pub enum WeightFileError {
    Io { path: String, source: io::Error },
    /// The file does not begin with the `SRSW1` magic.
    BadMagic,
    /// The manifest line is missing or not valid JSON.
    BadManifest { reason: String },
    /// The manifest describes an invalid model.
    BadModel(ModelError),
    /// Payload shorter than the manifest promises.
    Truncated { expected: usize, got: usize },
    /// Payload longer than the manifest promises.
    TrailingBytes { extra: usize },
}

impl fmt::Display for WeightFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightFileError::Io { path, source } => write!(f, "io error on {path}: {source}"),
            WeightFileError::BadMagic => write!(f, "not a SRSW1 weight file"),
            WeightFileError::BadManifest { reason } => write!(f, "bad manifest: {reason}"),
            WeightFileError::BadModel(e) => write!(f, "manifest describes an invalid model: {e}"),
            WeightFileError::Truncated { expected, got } => {
                write!(f, "truncated parameters: expected {expected} bytes, got {got}")
            }
            WeightFileError::TrailingBytes { extra } => {
                write!(f, "{extra} unexpected bytes after parameters")
            }
        }
    }
}

impl std::error::Error for WeightFileError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            WeightFileError::Io { source, .. } => Some(source),
            WeightFileError::BadModel(e) => Some(e),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    input: [usize; 3],
    layers: Vec<LayerSpec>,
}

/// Serializes weights to the `SRSW1` byte format.
pub fn model_to_bytes(weights: &ModelWeights) -> Vec<u8> {
    let manifest = Manifest {
        input: [weights.input_shape().0, weights.input_shape().1, weights.input_shape().2],
        layers: weights.layers().to_vec(),
    };
    let mut out = MAGIC.to_vec();
    out.extend(serde_json::to_string(&manifest).expect("manifest serializes").into_bytes());
    out.push(b'\n');
    for layer in weights.params() {
        for v in layer {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses the `SRSW1` byte format back into validated weights.
pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelWeights, WeightFileError> {
    let rest = bytes.strip_prefix(MAGIC).ok_or(WeightFileError::BadMagic)?;
    let newline = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(WeightFileError::BadManifest { reason: "missing manifest line".into() })?;
    let manifest: Manifest = serde_json::from_slice(&rest[..newline])
        .map_err(|e| WeightFileError::BadManifest { reason: e.to_string() })?;
    let payload = &rest[newline + 1..];

    let expected_values: usize = manifest.layers.iter().map(LayerSpec::param_len).sum();
    let expected_bytes = expected_values * 4;
    if payload.len() < expected_bytes {
        return Err(WeightFileError::Truncated { expected: expected_bytes, got: payload.len() });
    }
    if payload.len() > expected_bytes {
        return Err(WeightFileError::TrailingBytes { extra: payload.len() - expected_bytes });
    }

    let mut params = Vec::with_capacity(manifest.layers.len());
    let mut offset = 0;
    for layer in &manifest.layers {
        let n = layer.param_len();
        let mut p = Vec::with_capacity(n);
        for i in 0..n {
            let at = offset + i * 4;
            p.push(f32::from_le_bytes([payload[at], payload[at + 1], payload[at + 2], payload[at + 3]]));
        }
        offset += n * 4;
        params.push(p);
    }
    ModelWeights::new(
        (manifest.input[0], manifest.input[1], manifest.input[2]),
        manifest.layers,
        params,
    )
    .map_err(WeightFileError::BadModel)
}

/// Writes a weight file to disk.
pub fn save_model(weights: &ModelWeights, path: &Path) -> Result<(), WeightFileError> {
    fs::write(path, model_to_bytes(weights))
        .map_err(|e| WeightFileError::Io { path: path.display().to_string(), source: e })
}

/// Reads a weight file from disk.
pub fn load_model(path: &Path) -> Result<ModelWeights, WeightFileError> {
    let bytes =
        fs::read(path).map_err(|e| WeightFileError::Io { path: path.display().to_string(), source: e })?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_weights() -> ModelWeights {
        ModelWeights::new(
            (2, 2, 1),
            vec![
                LayerSpec::Conv2d { kernel: 2, in_channels: 1, out_channels: 2, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 18, outputs: 3 },
            ],
            vec![
                (0..10).map(|i| i as f32 * 0.25 - 1.0).collect(),
                vec![],
                vec![],
                (0..57).map(|i| (i as f32).sin()).collect(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bitwise_identical() {
        let w = sample_weights();
        let bytes = model_to_bytes(&w);
        assert!(bytes.starts_with(b"SRSW1\n"));
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back.input_shape(), w.input_shape());
        assert_eq!(back.layers(), w.layers());
        for (a, b) in back.params().iter().zip(w.params()) {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // Canonical form: encoding the decoded weights gives identical bytes.
        assert_eq!(model_to_bytes(&back), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.srsw");
        let w = sample_weights();
        save_model(&w, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn decode_error_paths() {
        let w = sample_weights();
        let bytes = model_to_bytes(&w);

        assert!(matches!(model_from_bytes(b"WRONG\n{}"), Err(WeightFileError::BadMagic)));

        let mut no_manifest = MAGIC.to_vec();
        no_manifest.extend(b"{\"input\":[1,1,1]");
        assert!(matches!(model_from_bytes(&no_manifest), Err(WeightFileError::BadManifest { .. })));

        let mut bad_json = MAGIC.to_vec();
        bad_json.extend(b"{nope}\n");
        assert!(matches!(model_from_bytes(&bad_json), Err(WeightFileError::BadManifest { .. })));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(model_from_bytes(truncated), Err(WeightFileError::Truncated { .. })));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(model_from_bytes(&trailing), Err(WeightFileError::TrailingBytes { extra: 1 })));

        // Structurally valid JSON but inconsistent shapes.
        let mut bad_model = MAGIC.to_vec();
        bad_model.extend(
            br#"{"input":[2,2,1],"layers":[{"kind":"dense","inputs":3,"outputs":2}]}"#.iter(),
        );
        bad_model.push(b'\n');
        bad_model.extend(std::iter::repeat(0u8).take(8 * 4));
        assert!(matches!(model_from_bytes(&bad_model), Err(WeightFileError::BadModel(_))));
    }
}
