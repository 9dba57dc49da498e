//! Repeated split / tune / test evaluation.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::Augmentation;
use super::grid::{evaluate_items, grid_search_items, EvalItem, Grid};
use super::manifest::DatasetManifest;
use super::report::{ErrorStats, EvaluationReport, MethodReport, RepeatResult};
use super::split::SplitPlan;
use crate::error::{Error, Result};
use crate::features::{extract_histogram_features, FeatureFile};
use crate::regression::{ModelKind, SolverSettings, TrainingSet};
use crate::stats::Statistic;
use crate::synth::derive_seed;
use crate::types::{angular_error, FeatureVector, Illuminant, LabeledSample, LinearImage};

/// Random access to a dataset's images.
pub trait ImageSource: Sync {
    fn len(&self) -> usize;
    fn load(&self, index: usize) -> Result<LinearImage>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ImageSource for DatasetManifest {
    fn len(&self) -> usize {
        self.entries.len()
    }
    fn load(&self, index: usize) -> Result<LinearImage> {
        self.load_image(index)
    }
}

impl ImageSource for Vec<LinearImage> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn load(&self, index: usize) -> Result<LinearImage> {
        Ok(self[index].clone())
    }
}

/// Histogram features of every image, one result per image so callers can
/// report all failures at once.
pub fn extract_all(images: &dyn ImageSource, bins: usize) -> Vec<Result<FeatureVector>> {
    (0..images.len()).into_par_iter().map(|i| extract_histogram_features(&images.load(i)?, bins)).collect()
}

/// Everything a protocol run needs, aligned by index.
pub struct ProtocolData<'a> {
    pub name: String,
    pub ids: Vec<String>,
    pub ground_truth: Vec<Illuminant>,
    pub images: Option<&'a dyn ImageSource>,
    pub features: Option<Vec<FeatureVector>>,
}

impl<'a> ProtocolData<'a> {
    pub fn from_manifest(manifest: &'a DatasetManifest) -> Self {
        Self {
            name: manifest.name.clone(),
            ids: manifest.ids(),
            ground_truth: manifest.entries.iter().map(|e| e.ground_truth).collect(),
            images: Some(manifest),
            features: None,
        }
    }

    pub fn in_memory(
        name: impl Into<String>,
        ids: Vec<String>,
        ground_truth: Vec<Illuminant>,
        images: &'a Vec<LinearImage>,
    ) -> Result<Self> {
        if ids.len() != ground_truth.len() || ids.len() != images.len() {
            return Err(Error::Input("ids, ground truth and images differ in length".into()));
        }
        Ok(Self { name: name.into(), ids, ground_truth, images: Some(images), features: None })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn images(&self) -> Result<&'a dyn ImageSource> {
        self.images.ok_or_else(|| Error::Protocol("this method needs images but none are attached".into()))
    }

    /// Attaches built-in histogram features extracted from every image.
    pub fn with_histogram_features(mut self, bins: usize) -> Result<Self> {
        let features = extract_all(self.images()?, bins)
            .into_iter()
            .enumerate()
            .map(|(i, f)| f.map_err(|e| Error::Protocol(format!("{}: {e}", self.ids[i]))))
            .collect::<Result<Vec<_>>>()?;
        self.features = Some(features);
        Ok(self)
    }

    /// Attaches features from a file; every dataset id must be present.
    pub fn with_feature_file(mut self, file: &FeatureFile) -> Result<Self> {
        let by_id: HashMap<&str, &FeatureVector> = file.records.iter().map(|(id, f)| (id.as_str(), f)).collect();
        let missing: Vec<&str> =
            self.ids.iter().filter(|id| !by_id.contains_key(id.as_str())).map(String::as_str).collect();
        if !missing.is_empty() {
            return Err(Error::Manifest(format!("feature file lacks {} dataset ids: {missing:?}", missing.len())));
        }
        self.features = Some(self.ids.iter().map(|id| by_id[id.as_str()].clone()).collect());
        Ok(self)
    }

    fn samples(&self, indices: &[usize]) -> Result<Vec<LabeledSample>> {
        let features =
            self.features.as_ref().ok_or_else(|| Error::Protocol("learned methods need a feature source".into()))?;
        Ok(indices
            .iter()
            .map(|&i| LabeledSample::new(self.ids[i].clone(), features[i].clone(), self.ground_truth[i]))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchFeatures {
    pub augmentation: Augmentation,
    pub bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub kind: ModelKind,
    pub grid: Grid,
    pub settings: SolverSettings,
    /// Train on histogram features of image patches instead of whole images.
    pub augmentation: Option<PatchFeatures>,
}

impl LearnerConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self { kind, grid: Grid::default_for(kind), settings: SolverSettings::default(), augmentation: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Method {
    /// Always predicts equal-energy white.
    DoingNothing,
    Statistic(Statistic),
    Learned(LearnerConfig),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::DoingNothing => "DN".into(),
            Method::Statistic(s) => s.label(),
            Method::Learned(l) => match &l.augmentation {
                None => l.kind.label().into(),
                Some(p) => format!("{}+{}", l.kind.label(), p.augmentation.label()),
            },
        }
    }
}

const PATCH_SEED_SALT: u64 = 0x0070_6174_6368_6573;

/// Runs one method through every repeat of the plan.
pub fn run_protocol(data: &ProtocolData<'_>, method: &Method, plan: &SplitPlan) -> Result<MethodReport> {
    plan.validate()?;
    if data.len() < 3 {
        return Err(Error::Protocol(format!("need at least 3 images, got {}", data.len())));
    }
    let repeats = match method {
        Method::DoingNothing => {
            let estimates: Vec<Result<Illuminant>> = (0..data.len()).map(|_| Ok(Illuminant::neutral())).collect();
            fixed_estimates(data, &estimates, plan)?
        }
        Method::Statistic(stat) => {
            let images = data.images()?;
            let estimates: Vec<Result<Illuminant>> =
                (0..data.len()).into_par_iter().map(|i| stat.estimate(&images.load(i)?)).collect();
            fixed_estimates(data, &estimates, plan)?
        }
        Method::Learned(cfg) => learned(data, cfg, plan)?,
    };
    MethodReport::from_repeats(method.label(), repeats)
}

pub fn run_evaluation(data: &ProtocolData<'_>, methods: &[Method], plan: &SplitPlan) -> Result<EvaluationReport> {
    let reports = methods.iter().map(|m| run_protocol(data, m, plan)).collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport::new(data.name.clone(), data.len(), plan.clone(), reports))
}

/// Methods without training: per-image estimates are computed once and the
/// repeats only select test subsets.
fn fixed_estimates(
    data: &ProtocolData<'_>,
    estimates: &[Result<Illuminant>],
    plan: &SplitPlan,
) -> Result<Vec<RepeatResult>> {
    let mut per_image = Vec::with_capacity(estimates.len());
    for (i, est) in estimates.iter().enumerate() {
        per_image.push(match est {
            Ok(e) => (angular_error(e, &data.ground_truth[i]), false),
            Err(Error::InvalidIlluminant(_)) => (angular_error(&Illuminant::neutral(), &data.ground_truth[i]), true),
            Err(e) => return Err(Error::Protocol(format!("{}: {e}", data.ids[i]))),
        });
    }
    (0..plan.n_repeats)
        .map(|r| {
            let split = plan.split(data.len(), r)?;
            let errors: Vec<f64> = split.test.iter().map(|&i| per_image[i].0).collect();
            Ok(RepeatResult {
                repeat: r,
                test_ids: split.test.iter().map(|&i| data.ids[i].clone()).collect(),
                stats: ErrorStats::from_errors(&errors)?,
                errors,
                hyperparams: None,
                fallbacks: split.test.iter().filter(|&&i| per_image[i].1).count(),
            })
        })
        .collect()
}

fn learned(data: &ProtocolData<'_>, cfg: &LearnerConfig, plan: &SplitPlan) -> Result<Vec<RepeatResult>> {
    let patches = match &cfg.augmentation {
        None => None,
        Some(p) => {
            let images = data.images()?;
            let per_image = (0..data.len())
                .into_par_iter()
                .map(|i| {
                    let img = images.load(i)?;
                    p.augmentation
                        .patches(&img, derive_seed(plan.seed ^ PATCH_SEED_SALT, i as u64))?
                        .iter()
                        .map(|patch| extract_histogram_features(patch, p.bins))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Some(per_image)
        }
    };

    let items = |indices: &[usize]| -> Result<Vec<EvalItem>> {
        match &patches {
            None => Ok(data.samples(indices)?.iter().map(EvalItem::from).collect()),
            Some(p) => {
                Ok(indices.iter().map(|&i| EvalItem { features: p[i].clone(), target: data.ground_truth[i] }).collect())
            }
        }
    };

    (0..plan.n_repeats)
        .map(|r| {
            let split = plan.split(data.len(), r)?;
            let train = match &patches {
                None => data.samples(&split.train)?,
                Some(p) => split
                    .train
                    .iter()
                    .flat_map(|&i| {
                        p[i].iter().enumerate().map(move |(k, f)| {
                            LabeledSample::new(format!("{}#{k}", data.ids[i]), f.clone(), data.ground_truth[i])
                        })
                    })
                    .collect(),
            };
            let train = TrainingSet::new(&train)?;
            let search = grid_search_items(&train, &items(&split.val)?, cfg.kind, &cfg.grid, &cfg.settings)?;
            let (errors, fallbacks) = evaluate_items(&search.model, &items(&split.test)?)?;
            Ok(RepeatResult {
                repeat: r,
                test_ids: split.test.iter().map(|&i| data.ids[i].clone()).collect(),
                stats: ErrorStats::from_errors(&errors)?,
                errors,
                hyperparams: Some(search.best),
                fallbacks,
            })
        })
        .collect()
}
