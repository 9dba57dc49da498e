//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use ilk_core::evaluation::{
    extract_all, grid_search, holdout_split, load_manifest, run_evaluation, Aggregation, DatasetManifest,
    LearnerConfig, ManifestEntry, Method, PatchFeatures, ProtocolData, SplitPlan,
};
use ilk_core::features::{histogram_tag, load_feature_file, parse_histogram_tag};
use ilk_core::io::{encode_png16, load_image, save_png16, write_atomic};
use ilk_core::regression::{SolverSettings, TrainingSet};
use ilk_core::synth::{render_dataset, SceneGenerator, SensorKind};
use ilk_core::{
    correct_image, extract_histogram_features, load_model, save_feature_file, save_model, FeatureVector, Illuminant,
    LabeledSample, LinearImage, RegressionModel,
};

use crate::spec::{
    parse_augmentation, parse_estimator, parse_feature_source, parse_illuminant, Estimator, FeatureSource,
    GridOverrides,
};
use crate::{
    Command, CorrectArgs, EstimateArgs, EvaluateArgs, ExtractArgs, GridArgs, SensorArg, SynthArgs, TrainArgs,
    UsageError,
};

pub const SIDECAR_SCHEMA_VERSION: u32 = 1;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Extract(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Estimate(a) => estimate(a),
        Command::Correct(a) => correct(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
    }
}

fn open_manifest(path: &Path) -> Result<DatasetManifest> {
    let m = load_manifest(path)?;
    if m.is_empty() {
        bail!("manifest {} lists no images", path.display());
    }
    Ok(m)
}

impl From<&GridArgs> for GridOverrides {
    fn from(g: &GridArgs) -> Self {
        Self { c: g.grid_c.clone(), gamma: g.grid_gamma.clone(), epsilon: g.grid_eps.clone() }
    }
}

/// Attaches features from `source` to every manifest image.
fn attach_features<'a>(data: ProtocolData<'a>, source: &FeatureSource) -> Result<ProtocolData<'a>> {
    Ok(match source {
        FeatureSource::Histogram { bins } => data.with_histogram_features(*bins)?,
        FeatureSource::File(path) => data.with_feature_file(&load_feature_file(path)?)?,
    })
}

fn extract(args: ExtractArgs) -> Result<()> {
    if args.bins == 0 {
        return Err(UsageError("--bins must be >= 1".into()).into());
    }
    let manifest = open_manifest(&args.manifest)?;
    let mut records = Vec::with_capacity(manifest.len());
    let mut failures = 0;
    for (entry, result) in manifest.entries.iter().zip(extract_all(&manifest, args.bins)) {
        match result {
            Ok(f) => records.push((entry.image_id.clone(), f)),
            Err(e) => {
                failures += 1;
                eprintln!("{}: {e}", entry.image_id);
            }
        }
    }
    if failures > 0 {
        bail!("{failures} of {} images failed; no feature file written", manifest.len());
    }
    save_feature_file(&records, &histogram_tag(args.bins), &args.out)?;
    eprintln!(
        "wrote {} feature vectors of dimension {} to {}",
        records.len(),
        args.bins * args.bins,
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let (kind, fixed) = match parse_estimator(&args.estimator)? {
        Estimator::Learner { kind, fixed } => (kind, fixed),
        _ => {
            return Err(
                UsageError(format!("train needs a learner (rr, svr, mrr, msvr), got {:?}", args.estimator)).into()
            )
        }
    };
    let source = parse_feature_source(&args.features)?;
    let manifest = open_manifest(&args.manifest)?;
    let data = attach_features(ProtocolData::from_manifest(&manifest), &source)?;
    let features = data.features.as_ref().expect("attached above");
    let samples: Vec<LabeledSample> = (0..data.len())
        .map(|i| LabeledSample::new(data.ids[i].clone(), features[i].clone(), data.ground_truth[i]))
        .collect();

    let grid = fixed.grid(kind, &GridOverrides::from(&args.grid));
    let points = grid.points(kind)?;
    let settings = SolverSettings::default();
    let point = if points.len() == 1 {
        points[0]
    } else {
        let (tr, val) = holdout_split(samples.len(), args.val_fraction, args.seed)?;
        let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
        let search = grid_search(&pick(&tr), &pick(&val), kind, &grid, &settings)?;
        eprintln!(
            "selected {} from {} grid points (validation median {:.3} deg)",
            search.best,
            points.len(),
            search.best_median
        );
        search.best
    };
    let model = TrainingSet::new(&samples)?.train(kind, point.kernel()?, point.hyper(), &settings)?;
    save_model(&model, &args.out)?;
    eprintln!(
        "trained {kind} on {} images ({} support vectors, converged: {}); wrote {}",
        samples.len(),
        model.support_count(),
        model.fit.converged,
        args.out.display()
    );
    Ok(())
}

/// How single images are turned into illuminant estimates.
enum Estimate {
    Fixed(Method),
    Model { model: RegressionModel, bins: Option<usize>, file: Option<PathBuf> },
}

fn build_estimate(spec: &str, features: Option<&str>) -> Result<Estimate> {
    match parse_estimator(spec)? {
        Estimator::DoingNothing => Ok(Estimate::Fixed(Method::DoingNothing)),
        Estimator::Statistic(s) => Ok(Estimate::Fixed(Method::Statistic(s))),
        Estimator::Learner { kind, .. } => {
            Err(UsageError(format!("{kind} must be trained first: run `ilk train` and pass model:PATH")).into())
        }
        Estimator::Model(path) => {
            let model = load_model(&path).with_context(|| format!("loading model {}", path.display()))?;
            let (bins, file) = match features.map(parse_feature_source).transpose()? {
                Some(FeatureSource::Histogram { bins }) => (Some(bins), None),
                Some(FeatureSource::File(p)) => (None, Some(p)),
                None => match parse_histogram_tag(&model.source_tag) {
                    Some(bins) => (Some(bins), None),
                    None => {
                        return Err(UsageError(format!(
                            "model was trained on {:?} features; pass --features file:PATH",
                            model.source_tag
                        ))
                        .into())
                    }
                },
            };
            if let Some(b) = bins {
                if histogram_tag(b) != model.source_tag {
                    return Err(UsageError(format!(
                        "model expects {:?} features, not {}",
                        model.source_tag,
                        histogram_tag(b)
                    ))
                    .into());
                }
            }
            Ok(Estimate::Model { model, bins, file })
        }
    }
}

impl Estimate {
    /// Estimates for `ids`, loading images lazily through `load`.
    fn run(
        &self,
        ids: &[String],
        load: &dyn Fn(usize) -> ilk_core::Result<LinearImage>,
    ) -> Result<Vec<Result<Illuminant>>> {
        match self {
            Estimate::Fixed(Method::DoingNothing) => Ok(ids.iter().map(|_| Ok(Illuminant::neutral())).collect()),
            Estimate::Fixed(Method::Statistic(s)) => Ok((0..ids.len()).map(|i| Ok(s.estimate(&load(i)?)?)).collect()),
            Estimate::Fixed(Method::Learned(_)) => unreachable!("learners are rejected when parsing"),
            Estimate::Model { model, bins, file } => {
                let features: Vec<Result<FeatureVector>> = match (bins, file) {
                    (Some(b), _) => (0..ids.len()).map(|i| Ok(extract_histogram_features(&load(i)?, *b)?)).collect(),
                    (None, Some(path)) => {
                        let ff = load_feature_file(path)?;
                        if ff.source_tag != model.source_tag {
                            return Err(UsageError(format!(
                                "feature file holds {:?} features, model expects {:?}",
                                ff.source_tag, model.source_tag
                            ))
                            .into());
                        }
                        ids.iter()
                            .map(|id| {
                                ff.get(id).cloned().with_context(|| format!("feature file has no record for {id:?}"))
                            })
                            .collect()
                    }
                    (None, None) => unreachable!("a feature source is always resolved"),
                };
                Ok(features.into_iter().map(|f| Ok(model.predict(&f?)?)).collect())
            }
        }
    }
}

fn fmt_rgb(e: &Illuminant) -> String {
    let [r, g, b] = e.rgb();
    format!("{r:.4} {g:.4} {b:.4}")
}

#[derive(Serialize)]
struct EstimateRecord<'a> {
    image_id: &'a str,
    illuminant: [f64; 3],
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let est = build_estimate(&args.estimator, args.features.as_deref())?;
    if let Some(path) = &args.image {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let linear = !args.encoded;
        let load = |_: usize| load_image(path, linear);
        let e = est.run(std::slice::from_ref(&id), &load)?.remove(0)?;
        if args.json {
            println!("{}", serde_json::to_string(&EstimateRecord { image_id: &id, illuminant: e.rgb() })?);
        } else {
            println!("{}", fmt_rgb(&e));
        }
        return Ok(());
    }

    let manifest = open_manifest(args.manifest.as_deref().expect("clap requires image or manifest"))?;
    let ids = manifest.ids();
    let results = est.run(&ids, &|i| manifest.load_image(i))?;
    let mut failures = 0;
    let mut records = Vec::new();
    for (id, r) in ids.iter().zip(results) {
        match r {
            Ok(e) => {
                if args.json {
                    records.push(EstimateRecord { image_id: id, illuminant: e.rgb() });
                } else {
                    println!("{id} {}", fmt_rgb(&e));
                }
            }
            Err(e) => {
                failures += 1;
                eprintln!("{id}: {e:#}");
            }
        }
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&records)?);
    }
    if failures > 0 {
        bail!("{failures} of {} images failed", ids.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct Sidecar {
    schema_version: u32,
    source: String,
    illuminant: [f64; 3],
    /// `stored = round(linear * scale)`.
    scale: f64,
    estimator: Option<String>,
}

/// `out.png` -> `out.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn correct(args: CorrectArgs) -> Result<()> {
    let image = load_image(&args.image, !args.encoded)?;
    let illuminant = match (&args.illuminant, &args.estimator) {
        (Some(s), _) => parse_illuminant(s)?,
        (None, Some(spec)) => {
            let est = build_estimate(spec, None)?;
            let id = args.image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let load = |_: usize| Ok(image.clone());
            est.run(&[id], &load)?.remove(0)?
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    let corrected = correct_image(&image, &illuminant)?;
    let (png, scale) = encode_png16(&corrected)?;
    write_atomic(&args.out, &png)?;
    let sidecar = Sidecar {
        schema_version: SIDECAR_SCHEMA_VERSION,
        source: args.image.display().to_string(),
        illuminant: illuminant.rgb(),
        scale,
        estimator: args.estimator.clone(),
    };
    let mut json = serde_json::to_string_pretty(&sidecar)?;
    json.push('\n');
    write_atomic(&sidecar_path(&args.out), json.as_bytes())?;
    eprintln!("illuminant {}; wrote {}", fmt_rgb(&illuminant), args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let estimators = args.estimators.iter().map(|s| parse_estimator(s)).collect::<Result<Vec<_>, _>>()?;
    let source = args.features.as_deref().map(parse_feature_source).transpose()?;
    let augmentation = args.augment.as_deref().map(parse_augmentation).transpose()?;
    let overrides = GridOverrides::from(&args.grid);
    let any_learned = estimators.iter().any(Estimator::is_learned);

    let augmentation = match (augmentation, &source) {
        (None, _) => None,
        (Some(_), Some(FeatureSource::File(_))) => {
            return Err(UsageError(
                "--augment extracts histogram features per patch; use --features builtin:hist[N]".into(),
            )
            .into())
        }
        (Some(a), Some(FeatureSource::Histogram { bins })) => Some(PatchFeatures { augmentation: a, bins: *bins }),
        (Some(a), None) => Some(PatchFeatures { augmentation: a, bins: ilk_core::features::DEFAULT_BINS }),
    };
    if any_learned && source.is_none() && augmentation.is_none() {
        return Err(UsageError("learned estimators need --features builtin:hist[N] or file:PATH".into()).into());
    }

    let mut methods = Vec::with_capacity(estimators.len());
    for (spec, est) in args.estimators.iter().zip(estimators) {
        methods.push(match est {
            Estimator::DoingNothing => Method::DoingNothing,
            Estimator::Statistic(s) => Method::Statistic(s),
            Estimator::Learner { kind, fixed } => Method::Learned(LearnerConfig {
                kind,
                grid: fixed.grid(kind, &overrides),
                settings: SolverSettings::default(),
                augmentation: augmentation.clone(),
            }),
            Estimator::Model(_) => {
                return Err(UsageError(format!(
                    "evaluate trains its own models on each split; use a learner name instead of {spec:?}"
                ))
                .into())
            }
        });
    }

    let plan = SplitPlan::new(args.seed, args.repeats, [1.0 / 3.0; 3])?;
    let manifest = open_manifest(&args.manifest)?;
    manifest.check_files()?;
    let mut data = ProtocolData::from_manifest(&manifest);
    let needs_features = methods.iter().any(|m| matches!(m, Method::Learned(c) if c.augmentation.is_none()));
    if needs_features {
        data = attach_features(data, source.as_ref().expect("checked above"))?;
    }
    let report = run_evaluation(&data, &methods, &plan)?;
    let json = report.to_json()?;
    if let Some(out) = &args.out {
        write_atomic(out, json.as_bytes())?;
    }
    if args.json {
        print!("{json}");
    } else {
        let aggregation = if args.pooled { Aggregation::Pooled } else { Aggregation::MeanOfRepeats };
        print!("{}", report.to_table(aggregation));
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    if args.n == 0 || args.grid == 0 || args.patch_size == 0 {
        return Err(UsageError("--n, --grid and --patch-size must be >= 1".into()).into());
    }
    let generator = SceneGenerator {
        sensors: match args.sensors {
            SensorArg::Broadband => SensorKind::Broadband,
            SensorArg::Narrowband => SensorKind::Narrowband,
        },
        grid: args.grid,
        patch_size: args.patch_size,
        ..Default::default()
    };
    let scenes = render_dataset(&generator, args.n, args.seed)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut entries = Vec::with_capacity(scenes.len());
    for scene in &scenes {
        let filename = format!("{}.png", scene.image_id);
        save_png16(&scene.image, &args.out.join(&filename))?;
        if args.canonical {
            save_png16(&scene.canonical, &args.out.join(format!("{}_canonical.png", scene.image_id)))?;
        }
        entries.push(ManifestEntry { image_id: scene.image_id.clone(), filename, ground_truth: scene.illuminant });
    }
    let mut manifest = DatasetManifest::new(&args.out, &args.name, entries)?;
    manifest.bit_depth = Some(16);
    manifest.linear = true;
    let path = args.out.join("manifest.csv");
    manifest.save(&path)?;
    eprintln!("wrote {} scenes and {}", scenes.len(), path.display());
    Ok(())
}
