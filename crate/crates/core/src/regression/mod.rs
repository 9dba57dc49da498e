//! Kernel regressors mapping feature vectors to illuminants.
//!
//! Four model kinds share one dual representation:
//!
//! * `Mrr` - multi-output ridge regression, closed form.
//! * `Msvr` - multi-output SVR. The ε-tube is a sphere around the target
//!   RGB vector, so a sample's slack depends on all three channels at once.
//! * `Rr`, `Svr` - the single-output counterparts, trained independently for
//!   each channel.

mod kernel;
mod model_io;
pub mod solver;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_consistent, normalize_illuminant, FeatureVector, Illuminant, LabeledSample};

pub use kernel::{cross_gram, KernelSpec, PairwiseCache};
pub use model_io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use solver::{fit_ridge, fit_tube, DualSolution, SolverSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rr,
    Svr,
    Mrr,
    Msvr,
}

impl ModelKind {
    pub fn uses_epsilon(self) -> bool {
        matches!(self, ModelKind::Svr | ModelKind::Msvr)
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Rr => "RR",
            ModelKind::Svr => "SVR",
            ModelKind::Mrr => "MRR",
            ModelKind::Msvr => "MSVR",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rr" => Ok(ModelKind::Rr),
            "svr" => Ok(ModelKind::Svr),
            "mrr" => Ok(ModelKind::Mrr),
            "msvr" => Ok(ModelKind::Msvr),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Regularization trade-off `C` and, for the SVR kinds, the tube radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub c: f64,
    pub epsilon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub converged: bool,
    pub iterations: usize,
    /// Training objective after each accepted iteration.
    pub objective_trace: Vec<f64>,
}

impl FitInfo {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionModel {
    pub kind: ModelKind,
    pub kernel: KernelSpec,
    pub hyper: Hyperparams,
    pub source_tag: String,
    /// Stored inputs, one per row (only those with non-zero dual weight).
    inputs: DMatrix<f64>,
    /// Dual weights, one row per stored input.
    weights: DMatrix<f64>,
    bias: [f64; 3],
    pub fit: FitInfo,
}

impl RegressionModel {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        kind: ModelKind,
        kernel: KernelSpec,
        hyper: Hyperparams,
        source_tag: String,
        inputs: DMatrix<f64>,
        weights: DMatrix<f64>,
        bias: [f64; 3],
        fit: FitInfo,
    ) -> Result<Self> {
        if inputs.nrows() != weights.nrows() || weights.ncols() != 3 {
            return Err(Error::Input("dual weights do not match stored inputs".into()));
        }
        if inputs.iter().chain(weights.iter()).chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("model contains non-finite values".into()));
        }
        Ok(Self { kind, kernel, hyper, source_tag, inputs, weights, bias, fit })
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn support_count(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn dual_weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn bias(&self) -> [f64; 3] {
        self.bias
    }

    /// Unnormalized output `Σ_i k(x_i, x) A_i + b`.
    pub fn predict_raw(&self, x: &[f64]) -> Result<[f64; 3]> {
        if x.len() != self.dim() {
            return Err(Error::Input(format!(
                "feature dimension {} does not match model dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let mut out = self.bias;
        for (row, w) in self.inputs.row_iter().zip(self.weights.row_iter()) {
            let xi: Vec<f64> = row.iter().copied().collect();
            let kv = self.kernel.eval(&xi, x);
            for c in 0..3 {
                out[c] += kv * w[c];
            }
        }
        Ok(out)
    }

    /// Clamps the raw output at zero and normalizes it.
    pub fn predict(&self, features: &FeatureVector) -> Result<Illuminant> {
        illuminant_from_raw(self.predict_raw(features.values())?)
    }
}

/// Turns a raw regression output into an illuminant by clamping negative
/// components to zero and normalizing.
pub fn illuminant_from_raw(raw: [f64; 3]) -> Result<Illuminant> {
    normalize_illuminant(raw.map(|v| v.max(0.0)))
}

/// Inputs and targets in matrix form, with kernel statistics cached for
/// repeated training at different hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
    source_tag: String,
    cache: PairwiseCache,
}

impl TrainingSet {
    pub fn new(samples: &[LabeledSample]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Input(format!("need at least 2 training samples, got {}", samples.len())));
        }
        let features: Vec<&FeatureVector> = samples.iter().map(|s| &s.features).collect();
        let d = check_consistent(&features)?;
        let n = samples.len();
        let inputs = DMatrix::from_fn(n, d, |i, j| samples[i].features.values()[j]);
        let targets = DMatrix::from_fn(n, 3, |i, j| samples[i].target.rgb()[j]);
        let cache = PairwiseCache::new(&inputs);
        Ok(Self { inputs, targets, source_tag: samples[0].features.source_tag().to_string(), cache })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gram(&self, kernel: &KernelSpec) -> DMatrix<f64> {
        self.cache.gram(kernel)
    }

    pub fn train(
        &self,
        kind: ModelKind,
        kernel: KernelSpec,
        hyper: Hyperparams,
        settings: &SolverSettings,
    ) -> Result<RegressionModel> {
        kernel.validate()?;
        let k = self.gram(&kernel);
        let epsilon = match (kind.uses_epsilon(), hyper.epsilon) {
            (true, Some(e)) => e,
            (true, None) => return Err(Error::Config(format!("{kind} requires epsilon"))),
            (false, _) => 0.0,
        };
        let hyper = Hyperparams { c: hyper.c, epsilon: kind.uses_epsilon().then_some(epsilon) };
        let (weights, bias, fit) = match kind {
            ModelKind::Mrr => joint(fit_ridge(&k, &self.targets, hyper.c)?),
            ModelKind::Msvr => joint(fit_tube(&k, &self.targets, hyper.c, epsilon, settings)?),
            ModelKind::Rr => per_channel(&self.targets, |y| fit_ridge(&k, y, hyper.c))?,
            ModelKind::Svr => per_channel(&self.targets, |y| fit_tube(&k, y, hyper.c, epsilon, settings))?,
        };

        // Keep only inputs that carry weight; predictions are unchanged.
        let keep: Vec<usize> = (0..weights.nrows()).filter(|&i| weights.row(i).iter().any(|&v| v != 0.0)).collect();
        let inputs = self.inputs.select_rows(&keep);
        let weights = weights.select_rows(&keep);
        RegressionModel::from_parts(
            kind,
            kernel,
            hyper,
            self.source_tag.clone(),
            inputs,
            weights,
            [bias[0], bias[1], bias[2]],
            fit,
        )
    }
}

fn joint(sol: DualSolution) -> (DMatrix<f64>, RowDVector<f64>, FitInfo) {
    let fit = FitInfo { converged: sol.converged, iterations: sol.iterations, objective_trace: sol.objective_trace };
    (sol.weights, sol.bias, fit)
}

/// Fits each target column independently. The combined trace sums the
/// per-channel objectives, holding finished channels at their final value.
fn per_channel(
    targets: &DMatrix<f64>,
    mut fit: impl FnMut(&DMatrix<f64>) -> Result<DualSolution>,
) -> Result<(DMatrix<f64>, RowDVector<f64>, FitInfo)> {
    let n = targets.nrows();
    let mut weights = DMatrix::zeros(n, 3);
    let mut bias = RowDVector::zeros(3);
    let mut traces = Vec::with_capacity(3);
    let mut converged = true;
    let mut iterations = 0;
    for c in 0..3 {
        let y = targets.columns(c, 1).into_owned();
        let sol = fit(&y)?;
        weights.set_column(c, &sol.weights.column(0));
        bias[c] = sol.bias[0];
        converged &= sol.converged;
        iterations = iterations.max(sol.iterations);
        traces.push(sol.objective_trace);
    }
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    let objective_trace = (0..len).map(|t| traces.iter().map(|tr| tr[t.min(tr.len() - 1)]).sum()).collect();
    Ok((weights, bias, FitInfo { converged, iterations, objective_trace }))
}

pub fn train_mrr(samples: &[LabeledSample], c: f64, kernel: KernelSpec) -> Result<RegressionModel> {
    TrainingSet::new(samples)?.train(
        ModelKind::Mrr,
        kernel,
        Hyperparams { c, epsilon: None },
        &SolverSettings::default(),
    )
}

pub fn train_rr(samples: &[LabeledSample], c: f64, kernel: KernelSpec) -> Result<RegressionModel> {
    TrainingSet::new(samples)?.train(
        ModelKind::Rr,
        kernel,
        Hyperparams { c, epsilon: None },
        &SolverSettings::default(),
    )
}

pub fn train_msvr(samples: &[LabeledSample], c: f64, epsilon: f64, kernel: KernelSpec) -> Result<RegressionModel> {
    TrainingSet::new(samples)?.train(
        ModelKind::Msvr,
        kernel,
        Hyperparams { c, epsilon: Some(epsilon) },
        &SolverSettings::default(),
    )
}

pub fn train_svr(samples: &[LabeledSample], c: f64, epsilon: f64, kernel: KernelSpec) -> Result<RegressionModel> {
    TrainingSet::new(samples)?.train(
        ModelKind::Svr,
        kernel,
        Hyperparams { c, epsilon: Some(epsilon) },
        &SolverSettings::default(),
    )
}
