//! Exhaustive hyperparameter search scored by median validation error.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::ErrorStats;
use crate::error::{Error, Result};
use crate::regression::{
    illuminant_from_raw, Hyperparams, KernelSpec, ModelKind, RegressionModel, SolverSettings, TrainingSet,
};
use crate::types::{angular_error, FeatureVector, Illuminant, LabeledSample};

/// `10^x` for `x = from, from + step, ..., <= to` (MATLAB `from:step:to`).
pub fn decades(from: i32, step: i32, to: i32) -> Vec<f64> {
    assert!(step > 0, "decade step must be positive");
    (from..=to).step_by(step as usize).map(|e| 10f64.powi(e)).collect()
}

/// Candidate values per hyperparameter. An empty `gamma` list means the
/// linear kernel; `epsilon` is ignored for the ridge kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl Grid {
    /// Ridge kinds: linear kernel, `C ∈ 10^(-2:1:2)`. SVR kinds: RBF kernel,
    /// `C ∈ 10^(-3:1:5)`, `γ ∈ 10^(-4:1:4)`, `ε ∈ 10^(-4:2:3)`.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Rr | ModelKind::Mrr => Self { c: decades(-2, 1, 2), gamma: Vec::new(), epsilon: Vec::new() },
            ModelKind::Svr | ModelKind::Msvr => {
                Self { c: decades(-3, 1, 5), gamma: decades(-4, 1, 4), epsilon: decades(-4, 2, 3) }
            }
        }
    }

    pub fn single(point: GridPoint) -> Self {
        Self {
            c: vec![point.c],
            gamma: point.gamma.into_iter().collect(),
            epsilon: point.epsilon.into_iter().collect(),
        }
    }

    pub fn points(&self, kind: ModelKind) -> Result<Vec<GridPoint>> {
        let gammas: Vec<Option<f64>> =
            if self.gamma.is_empty() { vec![None] } else { self.gamma.iter().copied().map(Some).collect() };
        let epsilons: Vec<Option<f64>> =
            if kind.uses_epsilon() { self.epsilon.iter().copied().map(Some).collect() } else { vec![None] };
        let mut out = Vec::new();
        for &c in &self.c {
            for &gamma in &gammas {
                for &epsilon in &epsilons {
                    out.push(GridPoint { c, gamma, epsilon });
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config(format!("empty hyperparameter grid for {kind}")));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    /// RBF coefficient; `None` selects the linear kernel.
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
}

/// `C=10 gamma=0.1 eps=0.01`; a linear kernel shows as `kernel=linear`.
impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C={}", self.c)?;
        match self.gamma {
            Some(g) => write!(f, " gamma={g}")?,
            None => f.write_str(" kernel=linear")?,
        }
        if let Some(e) = self.epsilon {
            write!(f, " eps={e}")?;
        }
        Ok(())
    }
}

impl GridPoint {
    pub fn kernel(&self) -> Result<KernelSpec> {
        match self.gamma {
            None => Ok(KernelSpec::Linear),
            Some(g) => KernelSpec::rbf(g),
        }
    }

    pub fn hyper(&self) -> Hyperparams {
        Hyperparams { c: self.c, epsilon: self.epsilon }
    }

    /// Tie-break order: smaller C, then smaller γ, then larger ε.
    fn tie_break(&self, other: &Self) -> Ordering {
        self.c
            .total_cmp(&other.c)
            .then(self.gamma.unwrap_or(0.0).total_cmp(&other.gamma.unwrap_or(0.0)))
            .then(other.epsilon.unwrap_or(0.0).total_cmp(&self.epsilon.unwrap_or(0.0)))
    }
}

/// A validation or test image: one feature vector, or several (patches)
/// whose raw predictions are averaged.
#[derive(Clone, Debug)]
pub struct EvalItem {
    pub features: Vec<FeatureVector>,
    pub target: Illuminant,
}

impl From<&LabeledSample> for EvalItem {
    fn from(s: &LabeledSample) -> Self {
        Self { features: vec![s.features.clone()], target: s.target }
    }
}

/// Averages raw predictions over `features`, then clamps and normalizes.
pub fn predict_grouped(model: &RegressionModel, features: &[FeatureVector]) -> Result<Illuminant> {
    if features.is_empty() {
        return Err(Error::Input("no feature vectors to predict from".into()));
    }
    let mut acc = [0.0; 3];
    for f in features {
        let raw = model.predict_raw(f.values())?;
        for c in 0..3 {
            acc[c] += raw[c];
        }
    }
    illuminant_from_raw(acc.map(|v| v / features.len() as f64))
}

/// Angular errors on `items`; invalid predictions fall back to the neutral
/// illuminant. Returns the errors and the number of fallbacks.
pub fn evaluate_items(model: &RegressionModel, items: &[EvalItem]) -> Result<(Vec<f64>, usize)> {
    let mut fallbacks = 0;
    let mut errors = Vec::with_capacity(items.len());
    for item in items {
        let est = match predict_grouped(model, &item.features) {
            Ok(e) => e,
            Err(Error::InvalidIlluminant(_)) => {
                fallbacks += 1;
                Illuminant::neutral()
            }
            Err(e) => return Err(e),
        };
        errors.push(angular_error(&est, &item.target));
    }
    Ok((errors, fallbacks))
}

#[derive(Clone, Debug)]
pub struct GridSearchResult {
    pub best: GridPoint,
    pub best_median: f64,
    /// Every grid point with its median validation error (infinite when
    /// training failed).
    pub scores: Vec<(GridPoint, f64)>,
    /// Model trained on the training split at `best`.
    pub model: RegressionModel,
}

pub fn grid_search(
    train: &[LabeledSample],
    val: &[LabeledSample],
    kind: ModelKind,
    grid: &Grid,
    settings: &SolverSettings,
) -> Result<GridSearchResult> {
    let items: Vec<EvalItem> = val.iter().map(EvalItem::from).collect();
    grid_search_items(&TrainingSet::new(train)?, &items, kind, grid, settings)
}

pub fn grid_search_items(
    train: &TrainingSet,
    val: &[EvalItem],
    kind: ModelKind,
    grid: &Grid,
    settings: &SolverSettings,
) -> Result<GridSearchResult> {
    if val.is_empty() {
        return Err(Error::Input("validation set is empty".into()));
    }
    let points = grid.points(kind)?;
    let scores: Vec<(GridPoint, f64)> = points
        .par_iter()
        .map(|p| {
            let median = p
                .kernel()
                .and_then(|k| train.train(kind, k, p.hyper(), settings))
                .and_then(|m| evaluate_items(&m, val))
                .and_then(|(errors, _)| ErrorStats::from_errors(&errors))
                .map(|s| s.median)
                .unwrap_or(f64::INFINITY);
            (*p, if median.is_nan() { f64::INFINITY } else { median })
        })
        .collect();

    let (best, best_median) =
        scores.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.tie_break(&b.0))).expect("grid is non-empty");
    if !best_median.is_finite() {
        return Err(Error::Numerical(format!("training failed at every grid point for {kind}")));
    }
    let model = train.train(kind, best.kernel()?, best.hyper(), settings)?;
    Ok(GridSearchResult { best, best_median, scores, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::normalize_illuminant;

    #[test]
    fn grid_point_display() {
        let rbf = GridPoint { c: 10.0, gamma: Some(0.5), epsilon: Some(0.01) };
        assert_eq!(rbf.to_string(), "C=10 gamma=0.5 eps=0.01");
        let lin = GridPoint { c: 0.1, gamma: None, epsilon: None };
        assert_eq!(lin.to_string(), "C=0.1 kernel=linear");
    }

    #[test]
    fn default_grid_sizes() {
        assert_eq!(Grid::default_for(ModelKind::Msvr).points(ModelKind::Msvr).unwrap().len(), 9 * 9 * 4);
        assert_eq!(Grid::default_for(ModelKind::Mrr).points(ModelKind::Mrr).unwrap().len(), 5);
        assert_eq!(decades(-4, 2, 3), vec![1e-4, 1e-2, 1.0, 1e2]);
        assert_eq!(decades(-2, 1, 2), vec![1e-2, 1e-1, 1.0, 1e1, 1e2]);
    }

    #[test]
    fn empty_grid_is_config_error() {
        let g = Grid { c: vec![], gamma: vec![1.0], epsilon: vec![0.1] };
        assert!(matches!(g.points(ModelKind::Msvr), Err(Error::Config(_))));
        let g = Grid { c: vec![1.0], gamma: vec![], epsilon: vec![] };
        assert!(g.points(ModelKind::Msvr).is_err());
        assert_eq!(g.points(ModelKind::Mrr).unwrap().len(), 1);
    }

    #[test]
    fn tie_break_order() {
        let p = |c, g, e| GridPoint { c, gamma: Some(g), epsilon: Some(e) };
        assert_eq!(p(1.0, 1.0, 0.1).tie_break(&p(10.0, 0.1, 1.0)), Ordering::Less);
        assert_eq!(p(1.0, 0.1, 0.1).tie_break(&p(1.0, 1.0, 1.0)), Ordering::Less);
        assert_eq!(p(1.0, 1.0, 1.0).tie_break(&p(1.0, 1.0, 0.1)), Ordering::Less);
    }

    fn sample(i: usize) -> LabeledSample {
        let x = i as f64 / 10.0;
        LabeledSample::new(
            i.to_string(),
            FeatureVector::new(vec![x, x * x], "t").unwrap(),
            normalize_illuminant([1.0 + x, 1.0, 2.0 - x]).unwrap(),
        )
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let train: Vec<_> = (0..8).map(sample).collect();
        let val: Vec<_> = (8..12).map(sample).collect();
        let point = GridPoint { c: 3.0, gamma: Some(0.5), epsilon: Some(0.01) };
        let r = grid_search(&train, &val, ModelKind::Msvr, &Grid::single(point), &SolverSettings::default()).unwrap();
        assert_eq!(r.best, point);
        assert_eq!(r.scores.len(), 1);
    }

    #[test]
    fn ties_prefer_small_c() {
        // With a huge tube every point predicts the training mean, so all
        // medians tie and the smallest C / gamma with the largest epsilon wins.
        let train: Vec<_> = (0..6).map(sample).collect();
        let val: Vec<_> = (6..9).map(sample).collect();
        let grid = Grid { c: vec![10.0, 1.0], gamma: vec![2.0, 0.5], epsilon: vec![50.0, 100.0] };
        let r = grid_search(&train, &val, ModelKind::Msvr, &grid, &SolverSettings::default()).unwrap();
        assert_eq!(r.best, GridPoint { c: 1.0, gamma: Some(0.5), epsilon: Some(100.0) });
    }

    #[test]
    fn best_is_exhaustive_minimum() {
        let train: Vec<_> = (0..10).map(sample).collect();
        let val: Vec<_> = (10..15).map(sample).collect();
        let grid = Grid { c: decades(-1, 1, 2), gamma: decades(-2, 1, 1), epsilon: vec![1e-3, 1e-1] };
        let r = grid_search(&train, &val, ModelKind::Msvr, &grid, &SolverSettings::default()).unwrap();
        let min = r.scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_median, min);
        assert!(r.scores.iter().any(|(p, _)| *p == r.best));
        assert_eq!(r.scores.len(), grid.points(ModelKind::Msvr).unwrap().len());
    }
}
