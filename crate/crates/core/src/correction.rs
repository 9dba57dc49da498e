//! Von Kries (diagonal) chromatic adaptation.
//!
//! Correction maps the estimated illuminant onto equal-energy white
//! `(1/√3, 1/√3, 1/√3)` by scaling each channel independently. Output is not
//! clipped; values may exceed 1.

use crate::error::{Error, Result};
use crate::types::{Illuminant, LinearImage};

const INV_SQRT3: f64 = 0.577_350_269_189_625_8;

/// Strictly positive per-channel gains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagonalTransform {
    gains: [f64; 3],
}

impl DiagonalTransform {
    pub fn new(gains: [f64; 3]) -> Result<Self> {
        if gains.iter().all(|g| g.is_finite() && *g > 0.0) {
            Ok(Self { gains })
        } else {
            Err(Error::Input(format!("diagonal gains must be finite and > 0, got {gains:?}")))
        }
    }

    /// Gains that send `illuminant` to equal-energy white.
    pub fn correcting(illuminant: &Illuminant) -> Result<Self> {
        let l = illuminant.rgb();
        if l.iter().any(|&v| v <= 0.0) {
            return Err(Error::DegenerateIlluminant(l));
        }
        Self::new(l.map(|v| INV_SQRT3 / v))
    }

    /// Gains that send equal-energy white to `illuminant`.
    pub fn relighting(illuminant: &Illuminant) -> Self {
        let l = illuminant.rgb();
        Self { gains: l.map(|v| v / INV_SQRT3) }
    }

    pub fn gains(&self) -> [f64; 3] {
        self.gains
    }

    pub fn apply(&self, image: &LinearImage) -> LinearImage {
        image.map_channels(self.gains)
    }
}

/// Removes the colour cast of `illuminant` from `image`.
pub fn correct_image(image: &LinearImage, illuminant: &Illuminant) -> Result<LinearImage> {
    Ok(DiagonalTransform::correcting(illuminant)?.apply(image))
}

/// Relights a canonical (white-lit) image under `illuminant`; the inverse of
/// [`correct_image`].
pub fn apply_illuminant(image: &LinearImage, illuminant: &Illuminant) -> LinearImage {
    DiagonalTransform::relighting(illuminant).apply(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::gray_world;
    use crate::types::{angular_error, normalize_illuminant};
    use proptest::prelude::*;

    fn img() -> LinearImage {
        LinearImage::from_fn(4, 3, |x, y| [0.1 + x as f64 * 0.2, 0.3 + y as f64 * 0.1, 0.05 * (x + y) as f64]).unwrap()
    }

    #[test]
    fn neutral_is_identity() {
        let n = Illuminant::neutral();
        let a = apply_illuminant(&img(), &n);
        let c = correct_image(&img(), &n).unwrap();
        for ((p, q), r) in img().pixels().iter().zip(a.pixels()).zip(c.pixels()) {
            for ch in 0..3 {
                assert!((p[ch] - q[ch]).abs() < 1e-15);
                assert!((p[ch] - r[ch]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn correction_follows_definition() {
        let l = normalize_illuminant([0.8, 0.5, 0.2]).unwrap();
        let out = correct_image(&img(), &l).unwrap();
        for (p, q) in img().pixels().iter().zip(out.pixels()) {
            for ch in 0..3 {
                assert!((q[ch] - p[ch] * INV_SQRT3 / l.rgb()[ch]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn relighting_gray_gives_illuminant_ratios() {
        let gray = LinearImage::constant(2, 2, [0.5; 3]).unwrap();
        let l = normalize_illuminant([0.8, 0.4, 0.2]).unwrap();
        let p = apply_illuminant(&gray, &l).pixel(1, 1);
        assert!((p[0] / p[2] - 4.0).abs() < 1e-12);
        assert!((p[1] / p[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_component_is_degenerate() {
        let l = normalize_illuminant([1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(correct_image(&img(), &l), Err(Error::DegenerateIlluminant(_))));
        assert!(DiagonalTransform::new([1.0, 0.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_and_gray_world_consistency(r in 0.01f64..1.0, g in 0.01f64..1.0, b in 0.01f64..1.0) {
            let l = normalize_illuminant([r, g, b]).unwrap();
            let relit = apply_illuminant(&img(), &l);
            let back = correct_image(&relit, &l).unwrap();
            for (p, q) in img().pixels().iter().zip(back.pixels()) {
                for ch in 0..3 {
                    prop_assert!((p[ch] - q[ch]).abs() < 1e-9);
                    prop_assert!(q[ch] >= 0.0);
                }
            }
            let e = angular_error(&gray_world(&back).unwrap(), &gray_world(&img()).unwrap());
            prop_assert!(e < 1e-6);
        }
    }
}
