//! Feature extraction and the binary feature-file container.
//!
//! The built-in extractor is a binarized rg-chromaticity histogram. Deep-net
//! activations (fc6/fc7/fc8) are produced elsewhere and arrive as
//! [`FeatureFile`]s.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "ILKFEAT1"
//! version  u32      1
//! count    u32      N
//! dim      u32      d
//! tag      u16 length + UTF-8 bytes
//! N x { u16 id length + UTF-8 id, d x f32 }
//! ```

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::types::{FeatureVector, LinearImage};

pub const FEATURE_MAGIC: &[u8; 8] = b"ILKFEAT1";
pub const FEATURE_VERSION: u32 = 1;
pub const DEFAULT_BINS: usize = 25;
pub const CNN_INPUT_SIZE: usize = 224;

/// Tag written for built-in histogram features.
pub fn histogram_tag(bins_per_axis: usize) -> String {
    format!("hist{bins_per_axis}")
}

/// Parses a tag produced by [`histogram_tag`].
pub fn parse_histogram_tag(tag: &str) -> Option<usize> {
    tag.strip_prefix("hist")?.parse().ok().filter(|&b| b >= 2)
}

/// Binarized chromaticity-occupancy histogram with `bins_per_axis²` cells.
pub fn extract_histogram_features(image: &LinearImage, bins_per_axis: usize) -> Result<FeatureVector> {
    if bins_per_axis < 2 {
        return Err(Error::Input(format!("bins_per_axis must be >= 2, got {bins_per_axis}")));
    }
    let bins = bins_per_axis;
    let mut occupancy = vec![0.0; bins * bins];
    let mut any = false;
    for p in image.pixels() {
        let sum = p[0] + p[1] + p[2];
        if sum <= 0.0 {
            continue;
        }
        any = true;
        let r = p[0] / sum;
        let g = p[1] / sum;
        let ri = ((r * bins as f64) as usize).min(bins - 1);
        let gi = ((g * bins as f64) as usize).min(bins - 1);
        occupancy[ri * bins + gi] = 1.0;
    }
    if !any {
        return Err(Error::Input("image has no pixel with positive intensity".into()));
    }
    FeatureVector::new(occupancy, histogram_tag(bins))
}

/// Bilinear resize with pixel-centre alignment.
pub fn resize_bilinear(image: &LinearImage, width: usize, height: usize) -> Result<LinearImage> {
    if width == 0 || height == 0 {
        return Err(Error::Input("resize target must be at least 1x1".into()));
    }
    if width == image.width() && height == image.height() {
        return Ok(image.clone());
    }
    let (sw, sh) = (image.width(), image.height());
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    let src = |x: usize, y: usize| image.pixel(x, y);

    let axis = |dst: usize, scale: f64, n: usize| -> (usize, usize, f64) {
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, pos - i0 as f64)
    };

    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1, fy) = axis(y, sy, sh);
        for x in 0..width {
            let (x0, x1, fx) = axis(x, sx, sw);
            let (a, b, c, d) = (src(x0, y0), src(x1, y0), src(x0, y1), src(x1, y1));
            let mut px = [0.0; 3];
            for ch in 0..3 {
                let top = a[ch] + (b[ch] - a[ch]) * fx;
                let bottom = c[ch] + (d[ch] - c[ch]) * fx;
                px[ch] = (top + (bottom - top) * fy).max(0.0);
            }
            data.push(px);
        }
    }
    Ok(LinearImage::from_raw(width, height, data))
}

/// Stretches the image to the 224x224 network input size.
pub fn resize_for_cnn(image: &LinearImage) -> Result<LinearImage> {
    resize_bilinear(image, CNN_INPUT_SIZE, CNN_INPUT_SIZE)
}

/// Resizes so that the longer side equals `max_side`, keeping aspect.
pub fn resize_max_side(image: &LinearImage, max_side: usize) -> Result<LinearImage> {
    let (w, h) = (image.width(), image.height());
    let long = w.max(h) as f64;
    let nw = ((w as f64 * max_side as f64 / long).round() as usize).max(1);
    let nh = ((h as f64 * max_side as f64 / long).round() as usize).max(1);
    resize_bilinear(image, nw, nh)
}

/// In-memory view of a feature file.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFile {
    pub source_tag: String,
    pub dim: usize,
    pub records: Vec<(String, FeatureVector)>,
}

impl FeatureFile {
    pub fn get(&self, image_id: &str) -> Option<&FeatureVector> {
        self.records.iter().find(|(id, _)| id == image_id).map(|(_, f)| f)
    }
}

pub fn save_feature_file(records: &[(String, FeatureVector)], source_tag: &str, path: &Path) -> Result<()> {
    let bytes = encode_feature_file(records, source_tag)?;
    write_atomic(path, &bytes)
}

pub fn encode_feature_file(records: &[(String, FeatureVector)], source_tag: &str) -> Result<Vec<u8>> {
    let first = records.first().ok_or_else(|| Error::Input("cannot save an empty feature file".into()))?;
    let dim = first.1.dim();
    let mut seen = HashSet::new();
    for (id, f) in records {
        if f.dim() != dim {
            return Err(Error::Input(format!("record {id:?} has dimension {}, expected {dim}", f.dim())));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::Input(format!("duplicate image id {id:?}")));
        }
    }
    let len_u16 = |s: &str, what: &str| {
        u16::try_from(s.len()).map_err(|_| Error::Input(format!("{what} longer than 65535 bytes")))
    };
    let count = u32::try_from(records.len()).map_err(|_| Error::Input("too many records".into()))?;
    let dim_u32 = u32::try_from(dim).map_err(|_| Error::Input("dimension too large".into()))?;

    let mut out = Vec::with_capacity(26 + records.len() * (4 * dim + 16));
    out.write_all(FEATURE_MAGIC)?;
    out.write_all(&FEATURE_VERSION.to_le_bytes())?;
    out.write_all(&count.to_le_bytes())?;
    out.write_all(&dim_u32.to_le_bytes())?;
    out.write_all(&len_u16(source_tag, "tag")?.to_le_bytes())?;
    out.write_all(source_tag.as_bytes())?;
    for (id, f) in records {
        out.write_all(&len_u16(id, "image id")?.to_le_bytes())?;
        out.write_all(id.as_bytes())?;
        for &v in f.values() {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(out)
}

pub fn load_feature_file(path: &Path) -> Result<FeatureFile> {
    let bytes = std::fs::read(path)?;
    decode_feature_file(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(self.pos as u64, format!("unexpected end of file reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let at = self.pos as u64;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format(at, format!("{what} is not UTF-8")))
    }
}

pub fn decode_feature_file(bytes: &[u8]) -> Result<FeatureFile> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != FEATURE_MAGIC {
        return Err(Error::format(0, "bad magic, not a feature file"));
    }
    let version = r.u32("version")?;
    if version != FEATURE_VERSION {
        return Err(Error::format(8, format!("unsupported version {version}")));
    }
    let count = r.u32("record count")? as usize;
    let dim = r.u32("dimension")? as usize;
    if dim == 0 {
        return Err(Error::format(16, "dimension must be >= 1"));
    }
    let source_tag = r.string("tag")?;

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let at = r.pos as u64;
        let id = r.string("image id")?;
        if !seen.insert(id.clone()) {
            return Err(Error::format(at, format!("duplicate image id {id:?}")));
        }
        let at = r.pos as u64;
        let raw = r
            .take(4 * dim, "feature values")
            .map_err(|_| Error::format(at, format!("record {i} ({id:?}) is shorter than dimension {dim}")))?;
        let values: Vec<f64> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        let f = FeatureVector::new(values, source_tag.clone())
            .map_err(|e| Error::format(at, format!("record {i} ({id:?}): {e}")))?;
        records.push((id, f));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos as u64,
            format!("{} trailing bytes; a record length disagrees with the header", bytes.len() - r.pos),
        ));
    }
    Ok(FeatureFile { source_tag, dim, records })
}
