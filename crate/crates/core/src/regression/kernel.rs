use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    /// `exp(-gamma * |x - y|^2)`
    Rbf {
        gamma: f64,
    },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let k = KernelSpec::Rbf { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            KernelSpec::Rbf { gamma } => Err(Error::Config(format!("rbf gamma must be finite and > 0, got {gamma}"))),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            KernelSpec::Linear => None,
            KernelSpec::Rbf { gamma } => Some(gamma),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Pairwise statistics of a fixed input set from which any kernel's Gram
/// matrix can be formed cheaply. Used to share work across a grid search.
#[derive(Clone, Debug)]
pub struct PairwiseCache {
    dots: DMatrix<f64>,
    sqdist: DMatrix<f64>,
}

impl PairwiseCache {
    /// `inputs` is N x d, one sample per row.
    pub fn new(inputs: &DMatrix<f64>) -> Self {
        let dots = inputs * inputs.transpose();
        let n = dots.nrows();
        let sqdist = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                (dots[(i, i)] + dots[(j, j)] - 2.0 * dots[(i, j)]).max(0.0)
            }
        });
        Self { dots, sqdist }
    }

    pub fn gram(&self, kernel: &KernelSpec) -> DMatrix<f64> {
        match *kernel {
            KernelSpec::Linear => self.dots.clone(),
            KernelSpec::Rbf { gamma } => self.sqdist.map(|d| (-gamma * d).exp()),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), rows.len(), |i, j| m[(rows[i], rows[j])]);
        Self { dots: pick(&self.dots), sqdist: pick(&self.sqdist) }
    }
}

/// Gram matrix between the rows of `a` (N x d) and `b` (M x d), computed
/// directly from the kernel definition.
pub fn cross_gram(kernel: &KernelSpec, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ra: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
    let rb: Vec<Vec<f64>> = b.row_iter().map(|r| r.iter().copied().collect()).collect();
    DMatrix::from_fn(ra.len(), rb.len(), |i, j| kernel.eval(&ra[i], &rb[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rbf_values() {
        let k = KernelSpec::rbf(0.5).unwrap();
        assert_eq!(k.eval(&[1.0, 2.0], &[1.0, 2.0]), 1.0);
        assert!((k.eval(&[0.0, 0.0], &[1.0, 1.0]) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::rbf(f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn gram_is_symmetric_psd(
            rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 4), 2..9),
            gamma in 0.01f64..10.0,
        ) {
            let n = rows.len();
            let x = DMatrix::from_fn(n, 4, |i, j| rows[i][j]);
            let cache = PairwiseCache::new(&x);
            for kernel in [KernelSpec::Linear, KernelSpec::Rbf { gamma }] {
                let k = cache.gram(&kernel);
                let direct = cross_gram(&kernel, &x, &x);
                for i in 0..n {
                    for j in 0..n {
                        prop_assert_eq!(k[(i, j)], k[(j, i)]);
                        prop_assert!((k[(i, j)] - direct[(i, j)]).abs() < 1e-9);
                    }
                }
                let eig = k.clone().symmetric_eigen();
                prop_assert!(eig.eigenvalues.min() >= -1e-8);
            }
        }
    }
}
