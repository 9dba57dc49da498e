//! Image file I/O and atomic writes.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Rgb};

use crate::error::{Error, Result};
use crate::types::LinearImage;

/// Gamma used to linearize non-linear inputs.
pub const DISPLAY_GAMMA: f64 = 2.2;

/// Writes `bytes` to a temporary sibling and renames it over `path`.
/// Missing parent directories are created.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent)?;
    let name = path.file_name().ok_or_else(|| Error::Input(format!("{} has no file name", path.display())))?;
    let tmp = parent.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Loads an 8/16-bit (or float) PNG or TIFF into `[0, 1]` linear values.
/// With `linear == false` the values are raised to the 2.2 power.
pub fn load_image(path: &Path, linear: bool) -> Result<LinearImage> {
    let img = image::open(path).map_err(|cause| Error::Image { path: path.to_path_buf(), cause })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<[f64; 3]> = match img {
        DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_) => {
            img.to_rgb32f().pixels().map(|p| p.0.map(|v| (v as f64).max(0.0))).collect()
        }
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => img.to_rgb8().pixels().map(|p| p.0.map(|v| v as f64 / 255.0)).collect(),
        _ => img.to_rgb16().pixels().map(|p| p.0.map(|v| v as f64 / 65535.0)).collect(),
    };
    let data = if linear { data } else { data.into_iter().map(|p| p.map(|v| v.powf(DISPLAY_GAMMA))).collect() };
    LinearImage::new(w, h, data)
}

/// Quantizes to 16 bits so that the largest value maps to 65535.
/// Returns the encoded PNG and the factor `s` with `stored = round(value * s)`.
pub fn encode_png16(image: &LinearImage) -> Result<(Vec<u8>, f64)> {
    let max = image.max_value();
    let scale = if max > 0.0 { 65535.0 / max } else { 1.0 };
    let raw: Vec<u16> =
        image.pixels().iter().flat_map(|p| p.map(|v| (v * scale).round().clamp(0.0, 65535.0) as u16)).collect();
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_raw(image.width() as u32, image.height() as u32, raw)
        .ok_or_else(|| Error::Input("image buffer size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    DynamicImage::ImageRgb16(buf)
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|cause| Error::Image { path: "<memory>".into(), cause })?;
    Ok((out.into_inner(), scale))
}

/// Writes a 16-bit PNG atomically and returns the quantization scale.
pub fn save_png16(image: &LinearImage, path: &Path) -> Result<f64> {
    let (bytes, scale) = encode_png16(image)?;
    write_atomic(path, &bytes)?;
    Ok(scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = LinearImage::from_fn(7, 5, |x, y| [x as f64 * 0.1, y as f64 * 0.2, 0.05]).unwrap();
        let path = dir.path().join("nested/out.png");
        let scale = save_png16(&img, &path).unwrap();
        let back = load_image(&path, true).unwrap();
        let max = img.max_value();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            for c in 0..3 {
                // back = round(a * scale) / 65535 and scale = 65535 / max.
                assert!((b[c] * max - a[c]).abs() <= 0.5 / scale + 1e-12);
            }
        }
    }

    #[test]
    fn gamma_is_applied_for_nonlinear_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let img = LinearImage::constant(2, 2, [1.0, 0.5, 0.25]).unwrap();
        let path = dir.path().join("g.png");
        save_png16(&img, &path).unwrap();
        let back = load_image(&path, false).unwrap();
        let want = 0.5f64.powf(2.2);
        assert!((back.pixel(0, 0)[1] - want).abs() < 1e-4);
    }

    #[test]
    fn missing_file_is_an_image_error() {
        assert!(matches!(load_image(Path::new("/nonexistent/x.png"), true), Err(Error::Image { .. })));
    }
}
