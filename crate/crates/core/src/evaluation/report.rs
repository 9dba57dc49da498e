use serde::{Deserialize, Serialize};

use super::grid::GridPoint;
use super::split::SplitPlan;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl ErrorStats {
    /// Summary of a non-empty error list. The median of an even-length list
    /// is the mean of the two middle values.
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::Protocol("no errors to aggregate".into()));
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Ok(Self { min: sorted[0], median, mean: errors.iter().sum::<f64>() / n as f64, max: sorted[n - 1] })
    }

    /// Component-wise average of several summaries.
    pub fn average(stats: &[ErrorStats]) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::Protocol("no repeats to average".into()));
        }
        let n = stats.len() as f64;
        let avg = |f: fn(&ErrorStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
        Ok(Self { min: avg(|s| s.min), median: avg(|s| s.median), mean: avg(|s| s.mean), max: avg(|s| s.max) })
    }

    fn max_abs_diff(&self, other: &ErrorStats) -> f64 {
        [self.min - other.min, self.median - other.median, self.mean - other.mean, self.max - other.max]
            .iter()
            .fold(0.0, |m, d| m.max(d.abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub test_ids: Vec<String>,
    /// Angular errors in degrees, aligned with `test_ids`.
    pub errors: Vec<f64>,
    pub stats: ErrorStats,
    /// Hyperparameters picked on the validation split (learned methods).
    pub hyperparams: Option<GridPoint>,
    /// Test images whose prediction was invalid and fell back to neutral.
    pub fallbacks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub repeats: Vec<RepeatResult>,
    /// Each statistic averaged over repeats (default reporting mode).
    pub mean_of_repeats: ErrorStats,
    /// Statistics over all test errors of all repeats pooled together.
    pub pooled: ErrorStats,
}

impl MethodReport {
    pub fn from_repeats(method: impl Into<String>, repeats: Vec<RepeatResult>) -> Result<Self> {
        let per: Vec<ErrorStats> = repeats.iter().map(|r| r.stats).collect();
        let all: Vec<f64> = repeats.iter().flat_map(|r| r.errors.iter().copied()).collect();
        Ok(Self {
            method: method.into(),
            mean_of_repeats: ErrorStats::average(&per)?,
            pooled: ErrorStats::from_errors(&all)?,
            repeats,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub dataset: String,
    pub n_images: usize,
    pub split: SplitPlan,
    pub methods: Vec<MethodReport>,
}

/// Which cross-repeat aggregate a table shows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregation {
    #[default]
    MeanOfRepeats,
    Pooled,
}

impl EvaluationReport {
    pub fn new(dataset: impl Into<String>, n_images: usize, split: SplitPlan, methods: Vec<MethodReport>) -> Self {
        Self { schema_version: REPORT_SCHEMA_VERSION, dataset: dataset.into(), n_images, split, methods }
    }

    /// Recomputes every aggregate from the stored per-image errors and
    /// returns the largest absolute discrepancy.
    pub fn aggregate_discrepancy(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for m in &self.methods {
            let mut per = Vec::new();
            let mut all = Vec::new();
            for r in &m.repeats {
                if r.errors.len() != r.test_ids.len() {
                    return Err(Error::Protocol(format!("{}: repeat {} has misaligned errors", m.method, r.repeat)));
                }
                let s = ErrorStats::from_errors(&r.errors)?;
                worst = worst.max(s.max_abs_diff(&r.stats));
                per.push(s);
                all.extend_from_slice(&r.errors);
            }
            worst = worst.max(ErrorStats::average(&per)?.max_abs_diff(&m.mean_of_repeats));
            worst = worst.max(ErrorStats::from_errors(&all)?.max_abs_diff(&m.pooled));
        }
        Ok(worst)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Plain-text table with Median, Mean and Max columns in degrees.
    pub fn to_table(&self, aggregation: Aggregation) -> String {
        let width = self.methods.iter().map(|m| m.method.len()).max().unwrap_or(6).max("Method".len());
        let mut out = format!("{:<width$}  {:>8}  {:>8}  {:>8}\n", "Method", "Median", "Mean", "Max");
        out.push_str(&format!("{}\n", "-".repeat(width + 30)));
        for m in &self.methods {
            let s = match aggregation {
                Aggregation::MeanOfRepeats => m.mean_of_repeats,
                Aggregation::Pooled => m.pooled,
            };
            out.push_str(&format!("{:<width$}  {:>8.2}  {:>8.2}  {:>8.2}\n", m.method, s.median, s.mean, s.max));
        }
        out
    }
}
