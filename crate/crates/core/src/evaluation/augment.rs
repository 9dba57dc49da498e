//! Patch-based training-set augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::resize_max_side;
use crate::types::{Illuminant, LinearImage};

pub const PATCH_SIZE: usize = 224;
/// Longer side of the image random patches are cropped from.
pub const RANDOM_PATCH_SOURCE_SIDE: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Augmentation {
    RandomPatches { n: usize, size: usize },
    SlidingWindow { size: usize, stride: usize },
}

impl Augmentation {
    pub fn label(&self) -> String {
        match self {
            Self::RandomPatches { n, size } => format!("random{n}x{size}"),
            Self::SlidingWindow { size, stride } => format!("sliding{size}s{stride}"),
        }
    }

    /// Patches of `image`, both variants working on the image resized to
    /// a 1000-pixel longer side.
    pub fn patches(&self, image: &LinearImage, seed: u64) -> Result<Vec<LinearImage>> {
        match *self {
            Self::RandomPatches { n, size } => augment_random_patches(image, n, size, seed),
            Self::SlidingWindow { size, stride } => {
                let resized = resize_max_side(image, RANDOM_PATCH_SOURCE_SIDE)?;
                augment_sliding_window(&resized, size, stride)
            }
        }
    }
}

/// A patch carrying its parent's ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub image: LinearImage,
    pub ground_truth: Illuminant,
}

pub fn with_ground_truth(patches: Vec<LinearImage>, ground_truth: Illuminant) -> Vec<Patch> {
    patches.into_iter().map(|image| Patch { image, ground_truth }).collect()
}

/// `n` random `size`x`size` crops of the image resized so its longer side is
/// 1000 pixels. Deterministic in `seed`.
pub fn augment_random_patches(image: &LinearImage, n: usize, size: usize, seed: u64) -> Result<Vec<LinearImage>> {
    let resized = resize_max_side(image, RANDOM_PATCH_SOURCE_SIDE)?;
    check_fits(&resized, size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = rng.random_range(0..=resized.width() - size);
            let y = rng.random_range(0..=resized.height() - size);
            resized.crop(x, y, size, size)
        })
        .collect()
}

/// Square windows scanning the whole image. Positions step by `stride`; a
/// final window flush with the border is added when the stride does not
/// land on it.
pub fn augment_sliding_window(image: &LinearImage, size: usize, stride: usize) -> Result<Vec<LinearImage>> {
    if stride == 0 {
        return Err(Error::Augmentation("stride must be >= 1".into()));
    }
    check_fits(image, size)?;
    let xs = positions(image.width(), size, stride);
    let ys = positions(image.height(), size, stride);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            out.push(image.crop(x, y, size, size)?);
        }
    }
    Ok(out)
}

fn positions(len: usize, size: usize, stride: usize) -> Vec<usize> {
    let last = len - size;
    let mut p: Vec<usize> = (0..=last).step_by(stride).collect();
    if *p.last().unwrap() != last {
        p.push(last);
    }
    p
}

fn check_fits(image: &LinearImage, size: usize) -> Result<()> {
    if size == 0 || size > image.width() || size > image.height() {
        return Err(Error::Augmentation(format!(
            "patch size {size} does not fit a {}x{} image",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::normalize_illuminant;

    fn ramp(w: usize, h: usize) -> LinearImage {
        LinearImage::from_fn(w, h, |x, y| [x as f64, y as f64, 1.0]).unwrap()
    }

    #[test]
    fn sliding_window_exact_fit() {
        let img = ramp(224, 224);
        let p = augment_sliding_window(&img, 224, 224).unwrap();
        assert_eq!(p, vec![img]);
    }

    #[test]
    fn sliding_window_tiles() {
        let img = ramp(448, 448);
        let p = augment_sliding_window(&img, 224, 224).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p[1].pixel(0, 0), [224.0, 0.0, 1.0]);
        assert_eq!(p[2].pixel(0, 0), [0.0, 224.0, 1.0]);
        assert_eq!(p[3].pixel(223, 223), [447.0, 447.0, 1.0]);
    }

    #[test]
    fn sliding_window_covers_border() {
        assert_eq!(positions(500, 224, 224), vec![0, 224, 276]);
        assert_eq!(positions(224, 224, 10), vec![0]);
    }

    #[test]
    fn random_patches_are_deterministic() {
        let img = ramp(300, 200);
        let a = augment_random_patches(&img, 10, 224, 7).unwrap();
        let b = augment_random_patches(&img, 10, 224, 7).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.width() == 224 && p.height() == 224));
        assert_ne!(a, augment_random_patches(&img, 10, 224, 8).unwrap());
    }

    #[test]
    fn too_small_is_an_error() {
        let img = ramp(100, 100);
        assert!(matches!(augment_sliding_window(&img, 224, 224), Err(Error::Augmentation(_))));
        // 1000x100 after resizing: the short side cannot hold a 224 patch.
        let wide = ramp(1000, 100);
        assert!(matches!(augment_random_patches(&wide, 1, 224, 0), Err(Error::Augmentation(_))));
    }

    #[test]
    fn patches_inherit_ground_truth() {
        let gt = normalize_illuminant([0.2, 0.5, 0.9]).unwrap();
        let p = with_ground_truth(augment_sliding_window(&ramp(448, 224), 224, 112).unwrap(), gt);
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|q| q.ground_truth == gt));
    }
}
