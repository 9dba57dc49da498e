//! Shared domain types and the angular-error metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear-light RGB image, row-major, stored in double precision.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl LinearImage {
    /// Builds an image from row-major pixels, checking size and that every
    /// value is finite and non-negative.
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!("image dimensions must be at least 1x1, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Input(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        for (i, px) in data.iter().enumerate() {
            for &v in px {
                if v.is_nan() {
                    return Err(Error::Input(format!("NaN at pixel {i}")));
                }
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Input(format!("pixel {i} has value {v}; intensities must be finite and >= 0")));
                }
            }
        }
        Ok(Self { width, height, data })
    }

    pub fn constant(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Internal constructor for pixel maps that preserve validity.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<[f64; 3]>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn into_pixels(self) -> Vec<[f64; 3]> {
        self.data
    }

    /// Multiplies every value by `k`, which must be finite and non-negative.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        if !k.is_finite() || k < 0.0 {
            return Err(Error::Input(format!("scale factor {k} must be finite and >= 0")));
        }
        Ok(self.map_channels([k; 3]))
    }

    /// Per-channel multiplication by non-negative gains.
    pub(crate) fn map_channels(&self, gains: [f64; 3]) -> Self {
        let data = self.data.iter().map(|p| [p[0] * gains[0], p[1] * gains[1], p[2] * gains[2]]).collect();
        Self::from_raw(self.width, self.height, data)
    }

    /// Copies the `w`x`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Input(format!("crop {w}x{h}+{x0}+{y0} outside {}x{} image", self.width, self.height)));
        }
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
        }
        Ok(Self::from_raw(w, h, data))
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().flat_map(|p| p.iter().copied()).fold(0.0, f64::max)
    }

    pub fn mean_intensity(&self) -> f64 {
        let sum: f64 = self.data.iter().map(|p| p[0] + p[1] + p[2]).sum();
        sum / (3 * self.data.len()) as f64
    }
}

/// Unit-length, non-negative RGB illuminant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Illuminant([f64; 3]);

impl Illuminant {
    pub fn new(raw: [f64; 3]) -> Result<Self> {
        normalize_illuminant(raw)
    }

    /// Equal-energy white, `(1/√3, 1/√3, 1/√3)`.
    pub fn neutral() -> Self {
        Illuminant([1.0 / 3f64.sqrt(); 3])
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.0
    }
}

impl<'de> Deserialize<'de> for Illuminant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = <[f64; 3]>::deserialize(d)?;
        normalize_illuminant(raw).map_err(serde::de::Error::custom)
    }
}

/// Scales `raw` to unit Euclidean length.
pub fn normalize_illuminant(raw: [f64; 3]) -> Result<Illuminant> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidIlluminant(format!("non-finite component in {raw:?}")));
    }
    if raw.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidIlluminant(format!("negative component in {raw:?}")));
    }
    if !raw.iter().any(|&v| v > 0.0) {
        return Err(Error::InvalidIlluminant(format!("zero vector {raw:?}")));
    }
    // Rescale first so that tiny or huge inputs do not under/overflow the norm.
    let m = raw.iter().copied().fold(0.0, f64::max);
    let s = [raw[0] / m, raw[1] / m, raw[2] / m];
    let norm = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
    Ok(Illuminant([s[0] / norm, s[1] / norm, s[2] / norm]))
}

/// Angle in degrees between two illuminants.
///
/// Computed as `atan2(|a × b|, a · b)`, which equals the arccosine of the
/// normalized inner product but stays accurate for nearly parallel vectors
/// and never returns NaN for valid inputs.
pub fn angular_error(estimate: &Illuminant, ground_truth: &Illuminant) -> f64 {
    angular_error_raw(estimate.0, ground_truth.0).expect("illuminants have unit norm")
}

/// Angular error between arbitrary non-zero 3-vectors, in degrees.
pub fn angular_error_raw(a: [f64; 3], b: [f64; 3]) -> Result<f64> {
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if !(na > 0.0 && nb > 0.0 && na.is_finite() && nb.is_finite()) {
        return Err(Error::InvalidIlluminant(format!(
            "zero-norm or non-finite vector in angular error ({a:?}, {b:?})"
        )));
    }
    let (a, b) = (a.map(|v| v / na), b.map(|v| v / nb));
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    Ok(sin.atan2(dot).to_degrees())
}

/// A d-dimensional feature vector tagged with the extractor that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
    source_tag: String,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, source_tag: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("feature vector must have d >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("feature value {i} is not finite")));
        }
        Ok(Self { values, source_tag: source_tag.into() })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub target: Illuminant,
    pub image_id: String,
}

impl LabeledSample {
    pub fn new(image_id: impl Into<String>, features: FeatureVector, target: Illuminant) -> Self {
        Self { features, target, image_id: image_id.into() }
    }
}

/// Checks that every vector shares the first one's dimension and tag.
pub fn check_consistent(features: &[&FeatureVector]) -> Result<usize> {
    let first = features.first().ok_or_else(|| Error::Input("no feature vectors".into()))?;
    for (i, f) in features.iter().enumerate() {
        if f.dim() != first.dim() {
            return Err(Error::Input(format!("feature {i} has dimension {}, expected {}", f.dim(), first.dim())));
        }
        if f.source_tag() != first.source_tag() {
            return Err(Error::Input(format!(
                "feature {i} has tag {:?}, expected {:?}",
                f.source_tag(),
                first.source_tag()
            )));
        }
    }
    Ok(first.dim())
}
