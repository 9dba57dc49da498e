//! Datasets, evaluation protocol, hyperparameter search and reports.

pub mod augment;
pub mod grid;
pub mod manifest;
pub mod protocol;
pub mod report;
pub mod split;

pub use augment::{augment_random_patches, augment_sliding_window, Augmentation};
pub use grid::{
    decades, evaluate_items, grid_search, grid_search_items, predict_grouped, EvalItem, Grid, GridPoint,
    GridSearchResult,
};
pub use manifest::{load_manifest, parse_manifest, DatasetManifest, ManifestEntry};
pub use protocol::{
    extract_all, run_evaluation, run_protocol, ImageSource, LearnerConfig, Method, PatchFeatures, ProtocolData,
};
pub use report::{Aggregation, ErrorStats, EvaluationReport, MethodReport, RepeatResult};
pub use split::{holdout_split, Split, SplitPlan};
