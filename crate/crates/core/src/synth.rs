//! Synthetic Lambertian Mondrians with known illumination.
//!
//! Pixel values follow the discretized formation model
//! `ρ_c = Σ_λ I(λ) S_c(λ) R(λ) Δλ` (rectangle rule), and the ground-truth
//! illuminant is the normalized response to a perfect white reflector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{normalize_illuminant, Illuminant, LinearImage};

/// 400-700 nm in 10 nm steps.
pub fn default_wavelengths() -> Vec<f64> {
    (0..31).map(|i| 400.0 + 10.0 * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub wavelengths: Vec<f64>,
    pub illuminant_spd: Vec<f64>,
    pub sensors: [Vec<f64>; 3],
    pub reflectances: Vec<Vec<f64>>,
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.wavelengths.len();
        if n == 0 {
            return Err(Error::Input("spectral grid is empty".into()));
        }
        if self.wavelengths.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::Input("wavelengths must be strictly increasing".into()));
        }
        let arrays = std::iter::once(&self.illuminant_spd).chain(self.sensors.iter());
        for a in arrays {
            if a.len() != n {
                return Err(Error::Input(format!("spectral array of length {} on a {n}-sample grid", a.len())));
            }
            if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Input("spectral power and sensor responses must be finite and >= 0".into()));
            }
        }
        for (i, r) in self.reflectances.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Input(format!("reflectance {i} has {} samples, grid has {n}", r.len())));
            }
            if r.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Input(format!("reflectance {i} leaves [0, 1]")));
            }
        }
        Ok(())
    }

    /// Rectangle-rule widths: forward differences, the last sample reusing
    /// the previous width. A single-sample grid has width 1.
    fn widths(&self) -> Vec<f64> {
        let w = &self.wavelengths;
        if w.len() == 1 {
            return vec![1.0];
        }
        (0..w.len()).map(|i| if i + 1 < w.len() { w[i + 1] - w[i] } else { w[i] - w[i - 1] }).collect()
    }

    /// Camera response to a surface, unnormalized.
    pub fn response(&self, reflectance: &[f64]) -> [f64; 3] {
        let widths = self.widths();
        let mut out = [0.0; 3];
        for (c, sensor) in self.sensors.iter().enumerate() {
            out[c] = (0..self.wavelengths.len())
                .map(|i| self.illuminant_spd[i] * sensor[i] * reflectance[i] * widths[i])
                .sum();
        }
        out
    }

    /// Response to a perfect white reflector, unnormalized.
    pub fn white_response(&self) -> [f64; 3] {
        self.response(&vec![1.0; self.wavelengths.len()])
    }

    pub fn ground_truth(&self) -> Result<Illuminant> {
        let w = self.white_response();
        if w.iter().any(|&v| v <= 0.0) {
            return Err(Error::DegenerateConfig(format!("illuminant produces zero response in a channel: {w:?}")));
        }
        normalize_illuminant(w)
    }

    pub fn with_illuminant(&self, spd: Vec<f64>) -> Self {
        Self { illuminant_spd: spd, ..self.clone() }
    }
}

/// Planck's law at `temperature_k`, normalized to 1 at 560 nm.
pub fn blackbody_spd(wavelengths: &[f64], temperature_k: f64) -> Vec<f64> {
    const C2: f64 = 1.438_776_877e-2; // hc/k in m·K
    let planck = |nm: f64| {
        let l = nm * 1e-9;
        1.0 / (l.powi(5) * ((C2 / (l * temperature_k)).exp() - 1.0))
    };
    let reference = planck(560.0);
    wavelengths.iter().map(|&nm| planck(nm) / reference).collect()
}

/// Broad Gaussian RGB sensitivities peaking at 600, 540 and 450 nm.
pub fn broadband_sensors(wavelengths: &[f64]) -> [Vec<f64>; 3] {
    let g = |peak: f64, width: f64| -> Vec<f64> {
        wavelengths.iter().map(|&l| (-0.5 * ((l - peak) / width).powi(2)).exp()).collect()
    };
    [g(600.0, 35.0), g(540.0, 35.0), g(450.0, 30.0)]
}

/// Delta-like sensors: unit response at the grid sample nearest 610, 540 and
/// 450 nm, zero elsewhere.
pub fn narrowband_sensors(wavelengths: &[f64]) -> [Vec<f64>; 3] {
    let delta = |peak: f64| -> Vec<f64> {
        let nearest = wavelengths
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - peak).abs().total_cmp(&(b.1 - peak).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (0..wavelengths.len()).map(|i| if i == nearest { 1.0 } else { 0.0 }).collect()
    };
    [delta(610.0), delta(540.0), delta(450.0)]
}

/// Smooth random reflectance in (0.02, 0.98).
pub fn random_reflectance(wavelengths: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let offset = rng.random_range(-1.5..1.5);
    let terms: Vec<(f64, f64)> =
        (0..3).map(|_| (rng.random_range(-2.0..2.0), rng.random_range(0.0..std::f64::consts::TAU))).collect();
    let (lo, hi) = (wavelengths[0], wavelengths[wavelengths.len() - 1].max(wavelengths[0] + 1.0));
    wavelengths
        .iter()
        .map(|&l| {
            let t = (l - lo) / (hi - lo);
            let s: f64 = offset
                + terms
                    .iter()
                    .enumerate()
                    .map(|(k, (a, ph))| a * ((k + 1) as f64 * std::f64::consts::PI * t + ph).cos())
                    .sum::<f64>();
            0.02 + 0.96 / (1.0 + (-s).exp())
        })
        .collect()
}

/// `n_pairs` reflectances together with their complements `1 - R`; every
/// pair averages to a flat 0.5 spectrum.
pub fn complementary_reflectances(wavelengths: &[f64], n_pairs: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * n_pairs);
    for _ in 0..n_pairs {
        let r = random_reflectance(wavelengths, rng);
        let comp = r.iter().map(|v| 1.0 - v).collect();
        out.push(r);
        out.push(comp);
    }
    out
}

/// Grid of reflectance indices, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MondrianLayout {
    pub cols: usize,
    pub rows: usize,
    pub indices: Vec<usize>,
}

impl MondrianLayout {
    pub fn new(cols: usize, rows: usize, indices: Vec<usize>) -> Result<Self> {
        if cols == 0 || rows == 0 || indices.len() != cols * rows {
            return Err(Error::Input(format!(
                "layout {cols}x{rows} needs {} indices, got {}",
                cols * rows,
                indices.len()
            )));
        }
        Ok(Self { cols, rows, indices })
    }
}

/// Renders a patchwork of flat reflectances. Returns the image and the
/// white-reflector ground truth.
pub fn render_mondrian(
    config: &SpectralConfig,
    layout: &MondrianLayout,
    patch_size: usize,
) -> Result<(LinearImage, Illuminant)> {
    config.validate()?;
    if patch_size == 0 {
        return Err(Error::Input("patch size must be >= 1".into()));
    }
    if let Some(&bad) = layout.indices.iter().find(|&&i| i >= config.reflectances.len()) {
        return Err(Error::Input(format!(
            "layout references reflectance {bad}, only {} available",
            config.reflectances.len()
        )));
    }
    let truth = config.ground_truth()?;
    let colors: Vec<[f64; 3]> = config.reflectances.iter().map(|r| config.response(r)).collect();
    let (w, h) = (layout.cols * patch_size, layout.rows * patch_size);
    let image =
        LinearImage::from_fn(w, h, |x, y| colors[layout.indices[(y / patch_size) * layout.cols + x / patch_size]])?;
    Ok((image, truth))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Broadband,
    Narrowband,
}

/// Parameters for random scene generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGenerator {
    pub wavelengths: Vec<f64>,
    pub sensors: SensorKind,
    /// Size of the shared reflectance library.
    pub library_size: usize,
    pub grid: usize,
    pub patch_size: usize,
    pub temperature_range: (f64, f64),
}

impl Default for SceneGenerator {
    fn default() -> Self {
        Self {
            wavelengths: default_wavelengths(),
            sensors: SensorKind::Broadband,
            library_size: 64,
            grid: 8,
            patch_size: 8,
            temperature_range: (2500.0, 9500.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub image_id: String,
    pub image: LinearImage,
    pub illuminant: Illuminant,
    pub temperature: f64,
    /// The same layout under an equal-energy illuminant, each channel scaled
    /// so a white reflector renders as (1, 1, 1).
    pub canonical: LinearImage,
}

/// Per-item seed derived from a root seed (SplitMix64 finalizer).
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates `n_scenes` Mondrians lit by blackbody illuminants drawn
/// uniformly from the temperature range. Deterministic in `seed`.
pub fn render_dataset(generator: &SceneGenerator, n_scenes: usize, seed: u64) -> Result<Vec<SyntheticScene>> {
    if n_scenes == 0 {
        return Err(Error::Input("n_scenes must be >= 1".into()));
    }
    let (t_lo, t_hi) = generator.temperature_range;
    if !(t_lo > 0.0 && t_hi >= t_lo && t_hi.is_finite()) {
        return Err(Error::Config(format!("invalid temperature range {t_lo}..{t_hi}")));
    }
    if generator.library_size == 0 || generator.grid == 0 {
        return Err(Error::Config("library size and grid must be >= 1".into()));
    }
    let wl = &generator.wavelengths;
    let mut lib_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let library: Vec<Vec<f64>> = (0..generator.library_size).map(|_| random_reflectance(wl, &mut lib_rng)).collect();
    let sensors = match generator.sensors {
        SensorKind::Broadband => broadband_sensors(wl),
        SensorKind::Narrowband => narrowband_sensors(wl),
    };
    let base =
        SpectralConfig { wavelengths: wl.clone(), illuminant_spd: vec![1.0; wl.len()], sensors, reflectances: library };
    let flat_white = base.white_response();
    if flat_white.iter().any(|&w| w <= 0.0) {
        return Err(Error::DegenerateConfig(format!("sensors have zero white response: {flat_white:?}")));
    }

    let digits = n_scenes.to_string().len().max(4);
    (0..n_scenes)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let temperature = if t_hi > t_lo { rng.random_range(t_lo..=t_hi) } else { t_lo };
            let cells = generator.grid * generator.grid;
            let indices = (0..cells).map(|_| rng.random_range(0..generator.library_size)).collect();
            let layout = MondrianLayout::new(generator.grid, generator.grid, indices)?;
            let config = base.with_illuminant(blackbody_spd(wl, temperature));
            let (image, illuminant) = render_mondrian(&config, &layout, generator.patch_size)?;
            let (flat, _) = render_mondrian(&base, &layout, generator.patch_size)?;
            let canonical = flat.map_channels(flat_white.map(|w| 1.0 / w));
            Ok(SyntheticScene { image_id: format!("scene_{i:0digits$}"), image, illuminant, temperature, canonical })
        })
        .collect()
}
