//! Parsing of estimator, feature-source, augmentation and illuminant strings.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ilk_core::evaluation::{Augmentation, Grid};
use ilk_core::features::{parse_histogram_tag, DEFAULT_BINS};
use ilk_core::stats::DEFAULT_P;
use ilk_core::{normalize_illuminant, Illuminant, ModelKind, Statistic};

use crate::UsageError;

const DEFAULT_SIGMA: f64 = 1.0;

/// Hyperparameters fixed on the command line; `None` leaves the grid axis
/// untouched.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fixed {
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub linear: bool,
}

impl Fixed {
    /// The kind's default grid with fixed values pinned and the `overrides`
    /// lists replacing whole axes.
    pub fn grid(&self, kind: ModelKind, overrides: &GridOverrides) -> Grid {
        let mut g = Grid::default_for(kind);
        if !overrides.c.is_empty() {
            g.c = overrides.c.clone();
        }
        if !overrides.gamma.is_empty() {
            g.gamma = overrides.gamma.clone();
        }
        if !overrides.epsilon.is_empty() {
            g.epsilon = overrides.epsilon.clone();
        }
        if let Some(c) = self.c {
            g.c = vec![c];
        }
        if let Some(e) = self.epsilon {
            g.epsilon = vec![e];
        }
        if let Some(gm) = self.gamma {
            g.gamma = vec![gm];
        }
        if self.linear {
            g.gamma.clear();
        }
        g
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridOverrides {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Estimator {
    DoingNothing,
    Statistic(Statistic),
    /// A regression kind still to be trained (grid-searched).
    Learner {
        kind: ModelKind,
        fixed: Fixed,
    },
    /// A serialized model.
    Model(PathBuf),
}

impl Estimator {
    pub fn is_learned(&self) -> bool {
        matches!(self, Estimator::Learner { .. } | Estimator::Model(_))
    }
}

fn parse_params(name: &str, rest: Option<&str>) -> Result<BTreeMap<String, String>, UsageError> {
    let mut out = BTreeMap::new();
    let Some(rest) = rest else { return Ok(out) };
    for item in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| UsageError(format!("estimator {name}: expected key=value, got {item:?}")))?;
        if out.insert(k.trim().to_ascii_lowercase(), v.trim().to_string()).is_some() {
            return Err(UsageError(format!("estimator {name}: parameter {k:?} given twice")));
        }
    }
    Ok(out)
}

fn number(name: &str, key: &str, v: &str) -> Result<f64, UsageError> {
    match v.to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        s => s
            .parse::<f64>()
            .ok()
            .filter(|x| !x.is_nan())
            .ok_or_else(|| UsageError(format!("estimator {name}: {key}={v:?} is not a number"))),
    }
}

struct Params<'a> {
    name: &'a str,
    map: BTreeMap<String, String>,
}

impl Params<'_> {
    fn take(&mut self, key: &str) -> Result<Option<f64>, UsageError> {
        self.map.remove(key).map(|v| number(self.name, key, &v)).transpose()
    }

    fn take_or(&mut self, key: &str, default: f64) -> Result<f64, UsageError> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn finish(self) -> Result<(), UsageError> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(k) => Err(UsageError(format!("estimator {}: unknown parameter {k:?}", self.name))),
        }
    }
}

/// Parses `name[:key=value,...]`, e.g. `gw`, `sog:p=8`, `ge1:p=6,sigma=2`,
/// `msvr:c=10,gamma=1,eps=0.01`, `mrr:kernel=linear` or `model:PATH`.
pub fn parse_estimator(spec: &str) -> Result<Estimator, UsageError> {
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n.trim().to_ascii_lowercase(), Some(r)),
        None => (spec.trim().to_ascii_lowercase(), None),
    };
    if name == "model" {
        let path = rest
            .map(|r| r.strip_prefix("path=").unwrap_or(r))
            .filter(|p| !p.is_empty())
            .ok_or_else(|| UsageError("estimator model needs a path: model:PATH".into()))?;
        return Ok(Estimator::Model(PathBuf::from(path)));
    }
    let mut p = Params { name: &name, map: parse_params(&name, rest)? };
    let est = match name.as_str() {
        "dn" | "none" => Estimator::DoingNothing,
        "gw" => Estimator::Statistic(Statistic::GrayWorld),
        "wp" => Estimator::Statistic(Statistic::WhitePatch),
        "sog" => Estimator::Statistic(Statistic::ShadesOfGray { p: p.take_or("p", DEFAULT_P)? }),
        "ggw" | "ge0" => Estimator::Statistic(Statistic::GeneralGrayWorld {
            p: p.take_or("p", DEFAULT_P)?,
            sigma: p.take_or("sigma", DEFAULT_SIGMA)?,
        }),
        "ge1" => Estimator::Statistic(Statistic::GrayEdge1 {
            p: p.take_or("p", DEFAULT_P)?,
            sigma: p.take_or("sigma", DEFAULT_SIGMA)?,
        }),
        "ge2" => Estimator::Statistic(Statistic::GrayEdge2 {
            p: p.take_or("p", DEFAULT_P)?,
            sigma: p.take_or("sigma", DEFAULT_SIGMA)?,
        }),
        "rr" | "svr" | "mrr" | "msvr" => {
            let kind: ModelKind = name.parse().expect("matched above");
            let linear = match p.map.remove("kernel").as_deref() {
                None | Some("rbf") => false,
                Some("linear") => true,
                Some(other) => return Err(UsageError(format!("estimator {name}: unknown kernel {other:?}"))),
            };
            let fixed = Fixed {
                c: p.take("c")?,
                gamma: p.take("gamma")?,
                epsilon: if kind.uses_epsilon() { p.take("eps")? } else { None },
                linear,
            };
            if linear && fixed.gamma.is_some() {
                return Err(UsageError(format!("estimator {name}: gamma given with a linear kernel")));
            }
            Estimator::Learner { kind, fixed }
        }
        _ => return Err(UsageError(format!("unknown estimator {name:?}"))),
    };
    if let Estimator::Statistic(s) = &est {
        s.params().validate().map_err(|e| UsageError(format!("estimator {name}: {e}")))?;
    }
    p.finish()?;
    Ok(est)
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureSource {
    Histogram { bins: usize },
    File(PathBuf),
}

/// `builtin:hist`, `builtin:hist25`, `builtin:hist:16` or `file:PATH`.
pub fn parse_feature_source(s: &str) -> Result<FeatureSource, UsageError> {
    if let Some(path) = s.strip_prefix("file:") {
        if path.is_empty() {
            return Err(UsageError("feature source file: needs a path".into()));
        }
        return Ok(FeatureSource::File(PathBuf::from(path)));
    }
    let spec = s.strip_prefix("builtin:").unwrap_or(s);
    let bins = match spec {
        "hist" => Some(DEFAULT_BINS),
        _ => parse_histogram_tag(spec).or_else(|| spec.strip_prefix("hist:").and_then(|b| b.parse().ok())),
    };
    match bins {
        Some(bins) if bins >= 1 => Ok(FeatureSource::Histogram { bins }),
        _ => Err(UsageError(format!("unknown feature source {s:?} (expected builtin:hist[N] or file:PATH)"))),
    }
}

/// `random[:n=10,size=224]` or `sliding[:stride=224,size=224]`.
pub fn parse_augmentation(s: &str) -> Result<Augmentation, UsageError> {
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n, Some(r)),
        None => (s, None),
    };
    let mut map = parse_params(name, rest)?;
    let mut int = |key: &str, default: usize| -> Result<usize, UsageError> {
        map.remove(key).map_or(Ok(default), |v| {
            v.parse()
                .ok()
                .filter(|&x: &usize| x > 0)
                .ok_or_else(|| UsageError(format!("augmentation {name}: {key}={v:?} must be a positive integer")))
        })
    };
    let size = int("size", ilk_core::evaluation::augment::PATCH_SIZE)?;
    let aug = match name {
        "random" => Augmentation::RandomPatches { n: int("n", 10)?, size },
        "sliding" => Augmentation::SlidingWindow { stride: int("stride", size)?, size },
        _ => return Err(UsageError(format!("unknown augmentation {name:?} (expected random or sliding)"))),
    };
    if let Some(k) = map.keys().next() {
        return Err(UsageError(format!("augmentation {name}: unknown parameter {k:?}")));
    }
    Ok(aug)
}

/// Three comma- or space-separated components.
pub fn parse_illuminant(s: &str) -> Result<Illuminant, UsageError> {
    let parts: Vec<f64> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| UsageError(format!("illuminant {s:?} must be three numbers")))?;
    let rgb: [f64; 3] =
        parts.try_into().map_err(|_| UsageError(format!("illuminant {s:?} must have exactly three components")))?;
    normalize_illuminant(rgb).map_err(|e| UsageError(e.to_string()))
}
