//! Statistics-based illuminant estimators.
//!
//! Every estimator here is an instance of one Minkowski-pooling framework
//! parameterized by derivative order `n`, norm `p` and Gaussian scale `σ`:
//! each channel is smoothed with `G_σ`, differentiated `n` times, and the
//! p-th power mean of the absolute response is taken. The resulting triple is
//! scaled to unit length.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{normalize_illuminant, Illuminant, LinearImage};

/// Spatial derivative order applied before pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeOrder {
    Zero,
    First,
    Second,
}

impl DerivativeOrder {
    pub fn from_index(n: u8) -> Result<Self> {
        match n {
            0 => Ok(Self::Zero),
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            _ => Err(Error::Config(format!("derivative order must be 0, 1 or 2, got {n}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::Zero => 0,
            Self::First => 1,
            Self::Second => 2,
        }
    }
}

/// Minkowski pooling norm; `Infinity` is an exact channel maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MinkowskiNorm {
    Finite(f64),
    Infinity,
}

impl fmt::Display for MinkowskiNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(p) => write!(f, "{p}"),
            Self::Infinity => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinkowskiParams {
    pub order: DerivativeOrder,
    pub norm: MinkowskiNorm,
    pub sigma: f64,
}

/// Literature default Minkowski norm for shades of gray and gray edge.
pub const DEFAULT_P: f64 = 6.0;

impl MinkowskiParams {
    pub fn new(order: DerivativeOrder, norm: MinkowskiNorm, sigma: f64) -> Result<Self> {
        let params = Self { order, norm, sigma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if let MinkowskiNorm::Finite(p) = self.norm {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(Error::Config(format!("Minkowski norm must be >= 1, got {p}")));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Estimates the scene illuminant from image statistics.
pub fn estimate_statistic(image: &LinearImage, params: &MinkowskiParams) -> Result<Illuminant> {
    params.validate()?;
    let (w, h) = (image.width(), image.height());
    let max = image.max_value();
    if max <= 0.0 {
        return Err(Error::InvalidIlluminant("image is entirely zero".into()));
    }

    let mut pooled = [0.0; 3];
    for (c, out) in pooled.iter_mut().enumerate() {
        // Dividing by the global maximum first keeps large p from overflowing
        // and makes power-of-two exposure changes bit-exact no-ops.
        let mut plane: Vec<f64> = image.pixels().iter().map(|p| p[c] / max).collect();
        if params.sigma > 0.0 {
            plane = gaussian_smooth(&plane, w, h, params.sigma);
        }
        let response = match params.order {
            DerivativeOrder::Zero => plane,
            DerivativeOrder::First => gradient_magnitude(&plane, w, h),
            DerivativeOrder::Second => hessian_magnitude(&plane, w, h),
        };
        *out = minkowski_pool(&response, params.norm);
    }
    normalize_illuminant(pooled)
}

fn minkowski_pool(values: &[f64], norm: MinkowskiNorm) -> f64 {
    match norm {
        MinkowskiNorm::Infinity => values.iter().map(|v| v.abs()).fold(0.0, f64::max),
        MinkowskiNorm::Finite(p) => {
            let n = values.len() as f64;
            let sum: f64 = if p.fract() == 0.0 && p <= i32::MAX as f64 {
                let k = p as i32;
                values.iter().map(|v| v.abs().powi(k)).sum()
            } else {
                values.iter().map(|v| v.abs().powf(p)).sum()
            };
            (sum / n).powf(1.0 / p)
        }
    }
}

/// Symmetric (edge-repeating) reflection of `i` into `0..n`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur with a kernel truncated at `ceil(3σ)`.
pub(crate) fn gaussian_smooth(plane: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                let xx = reflect(x as isize + j as isize - r, w);
                acc += kv * plane[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                let yy = reflect(y as isize + j as isize - r, h);
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

struct Sampler<'a> {
    plane: &'a [f64],
    w: usize,
    h: usize,
}

impl Sampler<'_> {
    fn at(&self, x: usize, y: usize, dx: isize, dy: isize) -> f64 {
        let xx = reflect(x as isize + dx, self.w);
        let yy = reflect(y as isize + dy, self.h);
        self.plane[yy * self.w + xx]
    }
}

/// Per-pixel gradient magnitude from central differences.
pub(crate) fn gradient_magnitude(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let s = Sampler { plane, w, h };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = 0.5 * (s.at(x, y, 1, 0) - s.at(x, y, -1, 0));
            let gy = 0.5 * (s.at(x, y, 0, 1) - s.at(x, y, 0, -1));
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Per-pixel Frobenius norm of the 2x2 Hessian.
pub(crate) fn hessian_magnitude(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let s = Sampler { plane, w, h };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let c = s.at(x, y, 0, 0);
            let fxx = s.at(x, y, 1, 0) - 2.0 * c + s.at(x, y, -1, 0);
            let fyy = s.at(x, y, 0, 1) - 2.0 * c + s.at(x, y, 0, -1);
            let fxy = 0.25 * (s.at(x, y, 1, 1) - s.at(x, y, 1, -1) - s.at(x, y, -1, 1) + s.at(x, y, -1, -1));
            out.push((fxx * fxx + 2.0 * fxy * fxy + fyy * fyy).sqrt());
        }
    }
    out
}

/// The named members of the framework.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Statistic {
    GrayWorld,
    WhitePatch,
    ShadesOfGray { p: f64 },
    GeneralGrayWorld { p: f64, sigma: f64 },
    GrayEdge1 { p: f64, sigma: f64 },
    GrayEdge2 { p: f64, sigma: f64 },
}

impl Statistic {
    pub fn params(&self) -> MinkowskiParams {
        use DerivativeOrder::*;
        use MinkowskiNorm::*;
        let (order, norm, sigma) = match *self {
            Self::GrayWorld => (Zero, Finite(1.0), 0.0),
            Self::WhitePatch => (Zero, Infinity, 0.0),
            Self::ShadesOfGray { p } => (Zero, Finite(p), 0.0),
            Self::GeneralGrayWorld { p, sigma } => (Zero, Finite(p), sigma),
            Self::GrayEdge1 { p, sigma } => (First, Finite(p), sigma),
            Self::GrayEdge2 { p, sigma } => (Second, Finite(p), sigma),
        };
        MinkowskiParams { order, norm, sigma }
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match *self {
            Self::GrayWorld => "GW".into(),
            Self::WhitePatch => "WP".into(),
            Self::ShadesOfGray { p } => format!("SoG(p={p})"),
            Self::GeneralGrayWorld { p, sigma } => format!("gGW(p={p},sigma={sigma})"),
            Self::GrayEdge1 { p, sigma } => format!("1stGE(p={p},sigma={sigma})"),
            Self::GrayEdge2 { p, sigma } => format!("2ndGE(p={p},sigma={sigma})"),
        }
    }

    pub fn estimate(&self, image: &LinearImage) -> Result<Illuminant> {
        estimate_statistic(image, &self.params())
    }
}

pub fn gray_world(image: &LinearImage) -> Result<Illuminant> {
    Statistic::GrayWorld.estimate(image)
}

pub fn white_patch(image: &LinearImage) -> Result<Illuminant> {
    Statistic::WhitePatch.estimate(image)
}

pub fn shades_of_gray(image: &LinearImage, p: f64) -> Result<Illuminant> {
    Statistic::ShadesOfGray { p }.estimate(image)
}

pub fn general_gray_world(image: &LinearImage, p: f64, sigma: f64) -> Result<Illuminant> {
    Statistic::GeneralGrayWorld { p, sigma }.estimate(image)
}

pub fn gray_edge_1(image: &LinearImage, p: f64, sigma: f64) -> Result<Illuminant> {
    Statistic::GrayEdge1 { p, sigma }.estimate(image)
}

pub fn gray_edge_2(image: &LinearImage, p: f64, sigma: f64) -> Result<Illuminant> {
    Statistic::GrayEdge2 { p, sigma }.estimate(image)
}
