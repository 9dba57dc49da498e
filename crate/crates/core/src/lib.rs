//! Illuminant estimation for linear RGB images.
//!
//! * [`stats`]: Minkowski-framework statistics (gray world, white patch,
//!   shades of gray, general gray world, gray edge).
//! * [`features`] and [`regression`]: chromaticity-histogram features and
//!   single/multi-output kernel ridge and support vector regression.
//! * [`correction`]: diagonal (von Kries) white balancing.
//! * [`synth`]: spectral Mondrian scenes with known ground truth.
//! * [`evaluation`]: manifests, repeated splits, grid search and reports.

pub mod correction;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod io;
pub mod regression;
pub mod stats;
pub mod synth;
pub mod types;

pub use correction::{apply_illuminant, correct_image, DiagonalTransform};
pub use error::{Error, Result};
pub use features::{extract_histogram_features, load_feature_file, save_feature_file, FeatureFile};
pub use regression::{load_model, save_model, KernelSpec, ModelKind, RegressionModel};
pub use stats::{estimate_statistic, DerivativeOrder, MinkowskiNorm, MinkowskiParams, Statistic};
pub use types::{angular_error, normalize_illuminant, FeatureVector, Illuminant, LabeledSample, LinearImage};
