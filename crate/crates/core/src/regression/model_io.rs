//! Versioned binary container for trained models.
//!
//! ```text
//! magic      7 bytes "ILKMDL1"
//! version    u32
//! kind       u8   (0 RR, 1 SVR, 2 MRR, 3 MSVR)
//! kernel     u8   (0 linear, 1 rbf), then f64 gamma (0 for linear)
//! C          f64
//! epsilon    u8 flag + f64
//! tag        u16 length + UTF-8
//! N, d       u32, u32
//! inputs     N*d f64, row-major
//! weights    N*3 f64, row-major
//! bias       3 f64
//! converged  u8, iterations u32, trace length u32 + f64 values
//! ```
//!
//! Everything is little-endian; floats are stored by bit pattern.

use std::path::Path;

use nalgebra::DMatrix;

use super::{FitInfo, Hyperparams, KernelSpec, ModelKind, RegressionModel};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const MODEL_MAGIC: &[u8; 7] = b"ILKMDL1";
pub const MODEL_VERSION: u32 = 1;

pub fn save_model(model: &RegressionModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode_model(model)?)
}

pub fn load_model(path: &Path) -> Result<RegressionModel> {
    decode_model(&std::fs::read(path)?)
}

fn kind_code(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Rr => 0,
        ModelKind::Svr => 1,
        ModelKind::Mrr => 2,
        ModelKind::Msvr => 3,
    }
}

pub fn encode_model(model: &RegressionModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let f = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_bits().to_le_bytes());
    let u32_of = |v: usize, what: &str| u32::try_from(v).map_err(|_| Error::Input(format!("{what} too large")));

    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(kind_code(model.kind));
    match model.kernel {
        KernelSpec::Linear => {
            out.push(0);
            f(&mut out, 0.0);
        }
        KernelSpec::Rbf { gamma } => {
            out.push(1);
            f(&mut out, gamma);
        }
    }
    f(&mut out, model.hyper.c);
    out.push(model.hyper.epsilon.is_some() as u8);
    f(&mut out, model.hyper.epsilon.unwrap_or(0.0));
    let tag_len = u16::try_from(model.source_tag.len()).map_err(|_| Error::Input("tag too long".into()))?;
    out.extend_from_slice(&tag_len.to_le_bytes());
    out.extend_from_slice(model.source_tag.as_bytes());
    out.extend_from_slice(&u32_of(model.inputs.nrows(), "support count")?.to_le_bytes());
    out.extend_from_slice(&u32_of(model.inputs.ncols(), "dimension")?.to_le_bytes());
    for row in model.inputs.row_iter() {
        row.iter().for_each(|&v| f(&mut out, v));
    }
    for row in model.weights.row_iter() {
        row.iter().for_each(|&v| f(&mut out, v));
    }
    model.bias.iter().for_each(|&v| f(&mut out, v));
    out.push(model.fit.converged as u8);
    out.extend_from_slice(&u32_of(model.fit.iterations, "iterations")?.to_le_bytes());
    out.extend_from_slice(&u32_of(model.fit.objective_trace.len(), "trace")?.to_le_bytes());
    model.fit.objective_trace.iter().for_each(|&v| f(&mut out, v));
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len().saturating_sub(self.pos) < n {
            return Err(Error::format(self.pos as u64, format!("unexpected end of model reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_bits(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap())))
    }
    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
        let total = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::format(self.pos as u64, format!("{what} size overflows")))?;
        let raw = self.take(total, what)?;
        let vals: Vec<f64> =
            raw.chunks_exact(8).map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap()))).collect();
        Ok(DMatrix::from_row_slice(rows, cols, &vals))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<RegressionModel> {
    let mut r = Cursor { buf: bytes, pos: 0 };
    if r.take(7, "magic")? != MODEL_MAGIC {
        return Err(Error::format(0, "bad magic, not a model file"));
    }
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::format(7, format!("unsupported model version {version}")));
    }
    let at = r.pos as u64;
    let kind = match r.u8("kind")? {
        0 => ModelKind::Rr,
        1 => ModelKind::Svr,
        2 => ModelKind::Mrr,
        3 => ModelKind::Msvr,
        k => return Err(Error::format(at, format!("unknown model kind {k}"))),
    };
    let at = r.pos as u64;
    let kernel_code = r.u8("kernel")?;
    let gamma = r.f64("gamma")?;
    let kernel = match kernel_code {
        0 => KernelSpec::Linear,
        1 => KernelSpec::Rbf { gamma },
        k => return Err(Error::format(at, format!("unknown kernel {k}"))),
    };
    let c = r.f64("C")?;
    let has_eps = r.u8("epsilon flag")? != 0;
    let eps = r.f64("epsilon")?;
    let tag_len = r.u16("tag")? as usize;
    let at = r.pos as u64;
    let source_tag =
        String::from_utf8(r.take(tag_len, "tag")?.to_vec()).map_err(|_| Error::format(at, "tag is not UTF-8"))?;
    let n = r.u32("support count")? as usize;
    let d = r.u32("dimension")? as usize;
    let inputs = r.matrix(n, d, "inputs")?;
    let weights = r.matrix(n, 3, "weights")?;
    let bias = [r.f64("bias")?, r.f64("bias")?, r.f64("bias")?];
    let converged = r.u8("converged")? != 0;
    let iterations = r.u32("iterations")? as usize;
    let trace_len = r.u32("trace length")? as usize;
    let trace = r.matrix(trace_len, 1, "trace")?;
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after model"));
    }
    RegressionModel::from_parts(
        kind,
        kernel,
        Hyperparams { c, epsilon: has_eps.then_some(eps) },
        source_tag,
        inputs,
        weights,
        bias,
        FitInfo { converged, iterations, objective_trace: trace.iter().copied().collect() },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{train_msvr, train_rr};
    use crate::types::{normalize_illuminant, FeatureVector, LabeledSample};

    fn samples() -> Vec<LabeledSample> {
        (0..6)
            .map(|i| {
                let x = i as f64 / 5.0;
                LabeledSample::new(
                    format!("s{i}"),
                    FeatureVector::new(vec![x, 1.0 - x, x * x], "hist4").unwrap(),
                    normalize_illuminant([0.5 + x, 0.6, 1.2 - x]).unwrap(),
                )
            })
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for model in [
            train_msvr(&samples(), 10.0, 0.01, KernelSpec::rbf(0.7).unwrap()).unwrap(),
            train_rr(&samples(), 0.3, KernelSpec::Linear).unwrap(),
        ] {
            let bytes = encode_model(&model).unwrap();
            let back = decode_model(&bytes).unwrap();
            assert_eq!(back, model);
            assert_eq!(encode_model(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ilkm");
        let model = train_msvr(&samples(), 1.0, 0.0, KernelSpec::Linear).unwrap();
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(decode_model(&bytes), Err(Error::Format { .. })));
        assert!(matches!(decode_model(b"ILKFEAT1xxxx"), Err(Error::Format { offset: 0, .. })));
    }
}
