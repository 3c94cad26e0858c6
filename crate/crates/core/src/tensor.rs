//! Data containers and on-disk dataset formats.
//!
//! Images are dense row-major `(row, col, channel)` tensors with values in
//! `[0, 1]`. On disk they are binary PPM (`P6`, three channels) or PGM (`P5`,
//! one channel) files with maxval 255; a dataset directory pairs the image
//! files with a `labels.csv` of `filename,label` rows (no header, UTF-8, LF
//! line endings). Byte value `v` maps to the real `v / 255`.
//!
//! Binary feature vectors model tabular 0/1 inputs (for example program
//! feature indicators) where only a subset of features may legally be
//! modified.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::RngStream;

/// Errors raised by container validation and dataset IO.
#[derive(Debug)]
pub enum DataError {
    /// Underlying file IO failed; carries the offending path.
    Io { path: String, source: io::Error },
    /// The file does not start with a supported PNM magic number.
    BadMagic { found: String },
    /// The PNM header is structurally invalid.
    BadHeader { reason: String },
    /// Only maxval 255 is supported.
    UnsupportedMaxval { maxval: u32 },
    /// Fewer pixel bytes than the header promises.
    TruncatedPixels { expected: usize, got: usize },
    /// More pixel bytes than the header promises.
    TrailingBytes { extra: usize },
    /// A constructed tensor is inconsistent (length/range/shape).
    InvalidTensor { reason: String },
    /// `labels.csv` is missing from the dataset directory.
    MissingLabels { dir: String },
    /// A `labels.csv` row could not be parsed.
    BadLabelRow { line: usize, content: String },
    /// A label value is out of range for the declared class count.
    LabelOutOfRange { label: usize, class_count: usize },
    /// Dataset images do not all share one shape.
    ShapeMismatch { expected: (usize, usize, usize), found: (usize, usize, usize), file: String },
    /// The dataset contains no samples.
    EmptyDataset,
    /// An argument combination is invalid (for example `n < classes`).
    InvalidArgument { reason: String },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Io { path, source } => write!(f, "io error on {path}: {source}"),
            DataError::BadMagic { found } => write!(f, "not a binary PPM/PGM file (magic {found:?})"),
            DataError::BadHeader { reason } => write!(f, "malformed PNM header: {reason}"),
            DataError::UnsupportedMaxval { maxval } => {
                write!(f, "unsupported maxval {maxval} (only 255 is handled)")
            }
            DataError::TruncatedPixels { expected, got } => {
                write!(f, "truncated pixel data: expected {expected} bytes, got {got}")
            }
            DataError::TrailingBytes { extra } => {
                write!(f, "{extra} unexpected trailing bytes after pixel data")
            }
            DataError::InvalidTensor { reason } => write!(f, "invalid tensor: {reason}"),
            DataError::MissingLabels { dir } => write!(f, "no labels.csv in {dir}"),
            DataError::BadLabelRow { line, content } => {
                write!(f, "labels.csv line {line} is not `filename,label`: {content:?}")
            }
            DataError::LabelOutOfRange { label, class_count } => {
                write!(f, "label {label} out of range for {class_count} classes")
            }
            DataError::ShapeMismatch { expected, found, file } => write!(
                f,
                "image {file} has shape {}x{}x{} but the dataset uses {}x{}x{}",
                found.0, found.1, found.2, expected.0, expected.1, expected.2
            ),
            DataError::EmptyDataset => write!(f, "dataset has no samples"),
            DataError::InvalidArgument { reason } => write!(f, "invalid argument: {reason}"),
        }
    }
}

impl std::error::Error for DataError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            DataError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

fn io_err(path: &Path, source: io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

/// Dense `(row, col, channel)` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    /// Builds a tensor, validating dimensions, length, and value range.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self, DataError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(DataError::InvalidTensor { reason: "zero-sized dimension".into() });
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(DataError::InvalidTensor {
                reason: format!("expected {expected} values, got {}", data.len()),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(DataError::InvalidTensor { reason: format!("value {v} outside [0, 1]") });
        }
        Ok(ImageTensor { height, width, channels, data })
    }

    /// All-zero (black) image.
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        ImageTensor { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Number of pixels (`height * width`).
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Number of scalars (`height * width * channels`).
    pub fn scalar_len(&self) -> usize {
        self.data.len()
    }

    /// Flat index of `(row, col, channel)`.
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        debug_assert!(row < self.height && col < self.width && channel < self.channels);
        (row * self.width + col) * self.channels + channel
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[self.index(row, col, channel)]
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f32) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Same scalars viewed as a `(h*w*c) x 1` single-channel image. Useful for
    /// running pixel-wise machinery over individual scalars.
    pub fn reshape_scalars(&self) -> ImageTensor {
        ImageTensor { height: self.data.len(), width: 1, channels: 1, data: self.data.clone() }
    }
}

/// 0/1 feature vector plus a mask of features that may legally be modified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryFeatureVector {
    bits: Vec<u8>,
    mutable: Vec<bool>,
}

impl BinaryFeatureVector {
    pub fn new(bits: Vec<u8>, mutable: Vec<bool>) -> Result<Self, DataError> {
        if bits.is_empty() {
            return Err(DataError::InvalidTensor { reason: "empty feature vector".into() });
        }
        if bits.len() != mutable.len() {
            return Err(DataError::InvalidTensor {
                reason: format!("{} bits but {} mask entries", bits.len(), mutable.len()),
            });
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(DataError::InvalidTensor { reason: "feature bits must be 0 or 1".into() });
        }
        Ok(BinaryFeatureVector { bits, mutable })
    }

    pub fn dim(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn is_mutable(&self, i: usize) -> bool {
        self.mutable[i]
    }

    /// Indices that are mutable and currently zero — the only features an
    /// addition-only attack may set.
    pub fn addable_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.mutable[i] && self.bits[i] == 0).collect()
    }

    /// The vector as model input scalars.
    pub fn to_input(&self) -> Vec<f32> {
        self.bits.iter().map(|&b| f32::from(b)).collect()
    }
}

/// Images plus integer labels in `0..class_count`, all sharing one shape.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    images: Vec<ImageTensor>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(images: Vec<ImageTensor>, labels: Vec<usize>, class_count: usize) -> Result<Self, DataError> {
        if images.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        if images.len() != labels.len() {
            return Err(DataError::InvalidArgument {
                reason: format!("{} images but {} labels", images.len(), labels.len()),
            });
        }
        let shape = images[0].shape();
        for img in &images {
            if img.shape() != shape {
                return Err(DataError::ShapeMismatch {
                    expected: shape,
                    found: img.shape(),
                    file: String::new(),
                });
            }
        }
        if class_count == 0 {
            return Err(DataError::InvalidArgument { reason: "class_count must be positive".into() });
        }
        for &l in &labels {
            if l >= class_count {
                return Err(DataError::LabelOutOfRange { label: l, class_count });
            }
        }
        Ok(LabeledDataset { images, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, i: usize) -> &ImageTensor {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.images[0].shape()
    }

    /// Splits off the first `n` samples into one dataset and the rest into
    /// another, preserving order.
    pub fn split_at(&self, n: usize) -> Result<(LabeledDataset, LabeledDataset), DataError> {
        if n == 0 || n >= self.len() {
            return Err(DataError::InvalidArgument {
                reason: format!("split point {n} outside 1..{}", self.len()),
            });
        }
        let head = LabeledDataset::new(
            self.images[..n].to_vec(),
            self.labels[..n].to_vec(),
            self.class_count,
        )?;
        let tail = LabeledDataset::new(
            self.images[n..].to_vec(),
            self.labels[n..].to_vec(),
            self.class_count,
        )?;
        Ok((head, tail))
    }
}

// ---------------------------------------------------------------------------
// Binary PNM (PPM P6 / PGM P5) encoding and decoding.
// ---------------------------------------------------------------------------

/// Parses a binary PPM (`P6`) or PGM (`P5`) byte buffer with maxval 255.
pub fn read_pnm(bytes: &[u8]) -> Result<ImageTensor, DataError> {
    if bytes.len() < 2 {
        return Err(DataError::BadMagic { found: String::from_utf8_lossy(bytes).into_owned() });
    }
    let channels = match &bytes[..2] {
        b"P6" => 3,
        b"P5" => 1,
        other => {
            return Err(DataError::BadMagic { found: String::from_utf8_lossy(other).into_owned() })
        }
    };
    let mut pos = 2;
    let width = read_header_int(bytes, &mut pos)?;
    let height = read_header_int(bytes, &mut pos)?;
    let maxval = read_header_int(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(DataError::UnsupportedMaxval { maxval });
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(DataError::BadHeader {
                reason: "missing whitespace between maxval and pixel data".into(),
            })
        }
    }
    let expected = (width as usize) * (height as usize) * channels;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(DataError::TruncatedPixels { expected, got: raster.len() });
    }
    if raster.len() > expected {
        return Err(DataError::TrailingBytes { extra: raster.len() - expected });
    }
    let data: Vec<f32> = raster.iter().map(|&b| f32::from(b) / 255.0).collect();
    ImageTensor::new(height as usize, width as usize, channels, data)
}

/// Reads one whitespace/comment-delimited decimal integer from a PNM header.
fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<u32, DataError> {
    // Skip whitespace and `#` comments (which run to end of line).
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(DataError::BadHeader { reason: "unexpected end of header".into() }),
        }
    }
    let start = *pos;
    while matches!(bytes.get(*pos), Some(b) if b.is_ascii_digit()) {
        *pos += 1;
    }
    if *pos == start {
        return Err(DataError::BadHeader { reason: "expected a decimal integer".into() });
    }
    let text = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| DataError::BadHeader { reason: "non-UTF8 header".into() })?;
    let value: u64 = text.parse().map_err(|_| DataError::BadHeader {
        reason: format!("integer {text} out of range"),
    })?;
    if value == 0 || value > u64::from(u32::MAX) {
        return Err(DataError::BadHeader { reason: format!("dimension {value} out of range") });
    }
    Ok(value as u32)
}

/// Serializes a 1- or 3-channel image as a canonical binary PGM/PPM buffer.
///
/// The header is always `P5`/`P6`, one line of `width height`, then `255`,
/// so decoding followed by encoding reproduces canonical files byte for byte.
pub fn write_pnm(img: &ImageTensor) -> Result<Vec<u8>, DataError> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(DataError::InvalidArgument {
                reason: format!("PNM supports 1 or 3 channels, image has {c}"),
            })
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    Ok(out)
}

/// Loads a PPM/PGM file from disk.
pub fn load_pnm(path: &Path) -> Result<ImageTensor, DataError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    read_pnm(&bytes)
}

/// Saves an image as a PPM/PGM file.
pub fn save_pnm(img: &ImageTensor, path: &Path) -> Result<(), DataError> {
    let bytes = write_pnm(img)?;
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Dataset directory loading.
// ---------------------------------------------------------------------------

/// Loads a dataset directory: `labels.csv` rows of `filename,label` plus the
/// referenced PPM/PGM files. The class count is inferred as `max(label) + 1`.
pub fn load_dataset(dir: &Path) -> Result<LabeledDataset, DataError> {
    let labels_path = dir.join("labels.csv");
    if !labels_path.is_file() {
        return Err(DataError::MissingLabels { dir: dir.display().to_string() });
    }
    let text = fs::read_to_string(&labels_path).map_err(|e| io_err(&labels_path, e))?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (name, label_text) = line.rsplit_once(',').ok_or(DataError::BadLabelRow {
            line: lineno + 1,
            content: line.to_string(),
        })?;
        let label: usize = label_text.trim().parse().map_err(|_| DataError::BadLabelRow {
            line: lineno + 1,
            content: line.to_string(),
        })?;
        let img_path = dir.join(name);
        let img = load_pnm(&img_path)?;
        if let Some(first) = images.first() {
            let first: &ImageTensor = first;
            if img.shape() != first.shape() {
                return Err(DataError::ShapeMismatch {
                    expected: first.shape(),
                    found: img.shape(),
                    file: name.to_string(),
                });
            }
        }
        images.push(img);
        labels.push(label);
    }
    if images.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let class_count = labels.iter().copied().max().unwrap_or(0) + 1;
    LabeledDataset::new(images, labels, class_count)
}

/// Writes a dataset as a directory of PNM files plus `labels.csv`.
pub fn save_dataset(data: &LabeledDataset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let ext = if data.shape().2 == 3 { "ppm" } else { "pgm" };
    let mut rows = String::new();
    for i in 0..data.len() {
        let name = format!("img{i:05}.{ext}");
        save_pnm(data.image(i), &dir.join(&name))?;
        rows.push_str(&format!("{name},{}\n", data.label(i)));
    }
    let labels_path = dir.join("labels.csv");
    fs::write(&labels_path, rows).map_err(|e| io_err(&labels_path, e))
}

// ---------------------------------------------------------------------------
// Synthetic dataset generation.
// ---------------------------------------------------------------------------

/// Amplitude of the per-sample Gaussian pixel noise in [`synth_dataset`].
const SYNTH_NOISE_SIGMA: f64 = 0.18;

/// Generates a deterministic synthetic classification dataset.
///
/// Each class owns a smooth random template (a bilinearly upsampled low-
/// resolution random field mixed with a shared background); samples are the
/// class template plus Gaussian pixel noise, clipped to `[0, 1]`. Labels cycle
/// through the classes, so class counts are balanced to within one sample.
pub fn synth_dataset(
    seed: u64,
    n: usize,
    height: usize,
    width: usize,
    channels: usize,
    classes: usize,
) -> Result<LabeledDataset, DataError> {
    if classes == 0 {
        return Err(DataError::InvalidArgument { reason: "classes must be positive".into() });
    }
    if n < classes {
        return Err(DataError::InvalidArgument {
            reason: format!("need at least one sample per class ({n} < {classes})"),
        });
    }
    if height == 0 || width == 0 || channels == 0 {
        return Err(DataError::InvalidArgument { reason: "zero-sized image shape".into() });
    }
    let stream = RngStream::new(seed);

    // Shared background keeps the classes from being trivially separable
    // everywhere in the image; class fields carry the signal.
    let mut bg_rng = stream.substream("background");
    let background = smooth_field(height, width, channels, &mut bg_rng);
    let mut templates = Vec::with_capacity(classes);
    for class in 0..classes {
        let mut t_rng = stream.derive("template", class as u64).substream("field");
        let field = smooth_field(height, width, channels, &mut t_rng);
        let template: Vec<f32> = background
            .iter()
            .zip(&field)
            .map(|(&b, &t)| 0.5 + 0.22 * (b - 0.5) + 0.55 * (t - 0.5))
            .collect();
        templates.push(template);
    }

    let mut noise_rng = stream.substream("noise");
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let data: Vec<f32> = templates[class]
            .iter()
            .map(|&t| {
                let eps: f64 = noise_rng.sample(StandardNormal);
                (f64::from(t) + SYNTH_NOISE_SIGMA * eps).clamp(0.0, 1.0) as f32
            })
            .collect();
        images.push(ImageTensor::new(height, width, channels, data)?);
        labels.push(class);
    }
    LabeledDataset::new(images, labels, classes)
}

/// Smooth random field in `[0, 1]`: a 4x4 uniform grid per channel upsampled
/// bilinearly to the full resolution.
fn smooth_field(height: usize, width: usize, channels: usize, rng: &mut impl Rng) -> Vec<f32> {
    const G: usize = 4;
    let grid: Vec<f32> = (0..G * G * channels).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut out = Vec::with_capacity(height * width * channels);
    for r in 0..height {
        let fy = ((r as f32 + 0.5) / height as f32 * G as f32 - 0.5).clamp(0.0, (G - 1) as f32);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(G - 1);
        let ty = fy - y0 as f32;
        for c in 0..width {
            let fx = ((c as f32 + 0.5) / width as f32 * G as f32 - 0.5).clamp(0.0, (G - 1) as f32);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(G - 1);
            let tx = fx - x0 as f32;
            for ch in 0..channels {
                let g = |y: usize, x: usize| grid[(y * G + x) * channels + ch];
                let top = g(y0, x0) * (1.0 - tx) + g(y0, x1) * tx;
                let bot = g(y1, x0) * (1.0 - tx) + g(y1, x1) * tx;
                out.push(top * (1.0 - ty) + bot * ty);
            }
        }
    }
    out
}
