use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use urbantag::context::{filter_location_outliers, rebalance_time, TimeBlock};
use urbantag::corpus::wav::read_wav;
use urbantag::corpus::{load_manifest, resample, save_manifest, synth_corpus, CorpusRecipe};
use urbantag::eval::{
    distractor_analysis, fuse, labels_from_records, macro_auprc, masks_from_assignment, read_matrix_csv,
    select_best_per_class, write_matrix_csv, write_pr_curves, AuprcReport, ScoreMatrix,
};
use urbantag::features::{read_feature_cache, write_feature_cache, FeatureCache, FeatureExtractor};
use urbantag::nn::derive_seed;
use urbantag::train::{load_checkpoint, predict, save_checkpoint, Checkpoint, Dataset, Trainer};
use urbantag::{AnnotationRecord, Error, FeatureKind, FeatureParams, Split};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "urbantag", version, about = "Multimodal urban sound tagging pipeline")]
pub struct Cli {
    /// Log progress at info level.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus (manifest.csv and audio/*.wav).
    Synth(SynthArgs),
    /// Compute spectrogram features for every manifest clip into a cache directory.
    Extract(ExtractArgs),
    /// Drop location outliers and rebalance time bins of the training split.
    FilterContext(FilterArgs),
    /// Train a model from a TOML run configuration.
    Train(TrainArgs),
    /// Score clips with a trained checkpoint.
    Predict(PredictArgs),
    /// Class-wise and macro AUPRC of a prediction file.
    Evaluate(EvaluateArgs),
    /// Per-class best-model fusion of two or more prediction files.
    Fuse(FuseArgs),
    /// Distractor analysis on single-label clips.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitChoice {
    Train,
    Validate,
    All,
}

impl SplitChoice {
    fn keep(self, r: &AnnotationRecord) -> bool {
        match self {
            SplitChoice::Train => r.split == Split::Train,
            SplitChoice::Validate => r.split == Split::Validate,
            SplitChoice::All => true,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `two-class`, `hour-correlated`, or a path to a JSON recipe.
    #[arg(long, default_value = "two-class")]
    pub recipe: String,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Cache output directory.
    #[arg(long)]
    pub cache: PathBuf,
    /// Comma-separated feature kinds: log-mel, log-linear, hpss-h, hpss-p.
    #[arg(long, value_delimiter = ',', default_value = "log-mel")]
    pub kinds: Vec<FeatureKind>,
    #[arg(long, default_value_t = 22050)]
    pub sample_rate: u32,
    #[arg(long, default_value_t = 1024)]
    pub n_fft: usize,
    #[arg(long, default_value_t = 512)]
    pub hop: usize,
    #[arg(long, default_value_t = 64)]
    pub bands: usize,
    #[arg(long, default_value_t = -100.0, allow_hyphen_values = true)]
    pub floor_db: f64,
    #[arg(long, default_value_t = 30)]
    pub hpss_iterations: usize,
    #[arg(long, default_value_t = 0.09)]
    pub hpss_sigma_h2: f64,
    #[arg(long, default_value_t = 0.09)]
    pub hpss_sigma_p2: f64,
    /// Z-score each feature grid after the decibel step.
    #[arg(long, default_value_t = false)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Filtered manifest path.
    #[arg(long)]
    pub out: PathBuf,
    /// Distance from the centroid of the other records beyond which a record is dropped.
    #[arg(long, default_value_t = 20.0)]
    pub outlier_km: f64,
    /// Skip location outlier removal.
    #[arg(long, default_value_t = false)]
    pub keep_outliers: bool,
    /// Time block to rebalance: hour, day or week.
    #[arg(long)]
    pub rebalance: Option<TimeBlock>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `io.out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed` [config default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `train.lr` [config default: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Overrides `train.batch_size` [config default: 64].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Overrides `train.patience` [config default: 3].
    #[arg(long)]
    pub patience: Option<usize>,
    /// Overrides `train.max_epochs` [config default: 100].
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Validate)]
    pub split: SplitChoice,
    /// Prediction CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabelSource {
    /// Manifest supplying labels.
    #[arg(long, required_unless_present = "labels", conflicts_with = "labels")]
    pub manifest: Option<PathBuf>,
    /// Label CSV (clip_id plus one 0/1 column per class).
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[command(flatten)]
    pub source: LabelSource,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for per-class PR-curve CSVs.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Prediction CSVs, one per model (at least two).
    #[arg(long, num_args = 2.., required = true)]
    pub predictions: Vec<PathBuf>,
    #[command(flatten)]
    pub source: LabelSource,
    /// Fused prediction CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Class-to-model assignment JSON path.
    #[arg(long)]
    pub assignment: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[command(flatten)]
    pub source: LabelSource,
    /// Score threshold for counting a class as predicted.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Single-line JSON error record.
pub fn error_line(kind: &str, code: i32, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "code": code, "message": message } }).to_string()
}

pub fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::FilterContext(a) => filter_context(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Fuse(a) => fuse_cmd(a),
        Command::Analyze(a) => analyze(a),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), Error> {
    let recipe = match a.recipe.as_str() {
        "two-class" => CorpusRecipe::two_class(),
        "hour-correlated" => CorpusRecipe::hour_correlated(),
        path => {
            let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{path}: {e}")))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{path}: {e}")))?
        }
    };
    let corpus = synth_corpus(&recipe, a.seed)?;
    corpus.write_to(&a.out)?;
    println!("wrote {} clips to {}", corpus.records.len(), a.out.display());
    Ok(())
}

fn resolve(manifest: &Path, clip: &str) -> PathBuf {
    let p = Path::new(clip);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn extract(a: ExtractArgs) -> Result<(), Error> {
    let params = FeatureParams {
        sample_rate: a.sample_rate,
        n_fft: a.n_fft,
        hop: a.hop,
        bands: a.bands,
        floor_db: a.floor_db,
        hpss: urbantag::features::HpssParams {
            sigma_h2: a.hpss_sigma_h2,
            sigma_p2: a.hpss_sigma_p2,
            iterations: a.hpss_iterations,
        },
        normalize: a.normalize,
    };
    if a.kinds.is_empty() {
        return Err(Error::Config("no feature kinds requested".into()));
    }
    let mut kinds = a.kinds.clone();
    kinds.sort();
    kinds.dedup();
    let extractor = FeatureExtractor::new(params)?;
    let records = load_manifest(&a.manifest)?;
    let mut entries = Vec::new();
    for r in &records {
        let path = resolve(&a.manifest, &r.path);
        let clip = read_wav(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let clip = if clip.sample_rate() != params.sample_rate {
            resample(&clip, params.sample_rate)?
        } else {
            clip
        };
        let tensors = extractor
            .extract_many(&clip, &kinds)
            .map_err(|e| Error::Data(format!("clip {}: {e}", r.clip_id)))?;
        entries.extend(tensors.into_iter().map(|t| (r.clip_id.clone(), t)));
    }
    write_feature_cache(&a.cache, &params, &entries)?;
    println!("cached {} feature grids for {} clips in {}", entries.len(), records.len(), a.cache.display());
    Ok(())
}

fn filter_context(a: FilterArgs) -> Result<(), Error> {
    if a.outlier_km.is_nan() || a.outlier_km <= 0.0 {
        return Err(Error::Config("--outlier-km must be positive".into()));
    }
    let records = load_manifest(&a.manifest)?;
    let (train, validate): (Vec<_>, Vec<_>) = records.iter().cloned().partition(|r| r.split == Split::Train);
    let out = filter_training(train, a.keep_outliers, a.outlier_km, a.rebalance, a.seed);
    let kept = out.len();
    let all: Vec<AnnotationRecord> = out.into_iter().chain(validate).collect();
    save_manifest(&a.out, &all)?;
    println!(
        "kept {kept} training records of {}; wrote {}",
        records.iter().filter(|r| r.split == Split::Train).count(),
        a.out.display()
    );
    Ok(())
}

fn filter_training(
    train: Vec<AnnotationRecord>,
    keep_outliers: bool,
    outlier_km: f64,
    rebalance: Option<TimeBlock>,
    seed: u64,
) -> Vec<AnnotationRecord> {
    let train = if keep_outliers {
        train
    } else {
        filter_location_outliers(&train, outlier_km)
    };
    match rebalance {
        Some(block) => rebalance_time(&train, block, derive_seed(seed, "rebalance")),
        None => train,
    }
}

fn load_cache(dir: &Path, kind: FeatureKind) -> Result<FeatureCache, Error> {
    let cache = read_feature_cache(dir)?;
    if cache.is_empty() {
        return Err(Error::Data(format!("feature cache {} is empty", dir.display())));
    }
    log::info!("loaded {} cached grids, using {kind}", cache.len());
    Ok(cache)
}

fn dataset(records: &[AnnotationRecord], cache: &FeatureCache, kind: FeatureKind, norm: Option<&urbantag::NormStats>) -> Result<Dataset, Error> {
    Ok(Dataset::from_records(records, kind, norm, |r| cache.get(&r.clip_id, kind))?)
}

fn train(a: TrainArgs) -> Result<(), Error> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(out) = a.out {
        cfg.io.out_dir = out;
    }
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.train.lr = a.lr.unwrap_or(cfg.train.lr);
    cfg.train.batch_size = a.batch_size.unwrap_or(cfg.train.batch_size);
    cfg.train.patience = a.patience.unwrap_or(cfg.train.patience);
    cfg.train.max_epochs = a.max_epochs.unwrap_or(cfg.train.max_epochs);
    cfg.validate()?;
    let kind = cfg.train.feature;
    let cache = load_cache(&cfg.io.cache_dir, kind)?;
    if cache.params != cfg.features.params() {
        return Err(Error::Config(format!(
            "feature cache {} was built with different parameters than [features]",
            cfg.io.cache_dir.display()
        )));
    }
    let records = load_manifest(&cfg.io.manifest)?;
    let (train, validate): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.split == Split::Train);
    let train = filter_training(
        train,
        !cfg.context.filter_outliers,
        cfg.context.outlier_km,
        cfg.context.rebalance,
        cfg.seed,
    );
    if train.is_empty() || validate.is_empty() {
        return Err(Error::Data(format!(
            "need both splits, found {} train and {} validate records",
            train.len(),
            validate.len()
        )));
    }
    let norm = if cfg.context.mode.uses_context() {
        Some(urbantag::context::fit_normalizer(&train)?)
    } else {
        None
    };
    let train_set = dataset(&train, &cache, kind, norm.as_ref())?;
    let validate_set = dataset(&validate, &cache, kind, norm.as_ref())?;
    let tc = cfg.train_config();
    let mut trainer = Trainer::new(tc.clone())?;
    let report = trainer.fit(&train_set, &validate_set)?;
    fs::create_dir_all(&cfg.io.out_dir)?;
    let ckpt = Checkpoint::capture(
        &mut trainer.model,
        cfg.features.params(),
        norm,
        tc,
        report.best_epoch,
        report.best_metric,
    );
    save_checkpoint(cfg.io.out_dir.join("model.ckpt"), &ckpt)?;
    report.write(cfg.io.out_dir.join("train_report.csv"), cfg.io.out_dir.join("train_report.json"))?;
    println!(
        "best epoch {} of {}: validation macro_auprc {:.6}",
        report.best_epoch, report.stopped_epoch, report.best_metric
    );
    println!("wrote {}", cfg.io.out_dir.join("model.ckpt").display());
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> Result<(), Error> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let kind = ckpt.header.feature;
    let cache = load_cache(&a.cache, kind)?;
    if cache.params != ckpt.header.feature_params {
        return Err(Error::Data("feature cache parameters differ from the checkpoint's".into()));
    }
    let records: Vec<_> = load_manifest(&a.manifest)?.into_iter().filter(|r| a.split.keep(r)).collect();
    if records.is_empty() {
        return Err(Error::Data("no records in the selected split".into()));
    }
    let mut model = ckpt.model()?;
    let norm = if model.config().context.uses_context() {
        Some(ckpt.header.norm.ok_or_else(|| Error::Data("checkpoint lacks location statistics".into()))?)
    } else {
        None
    };
    let data = dataset(&records, &cache, kind, norm.as_ref())?;
    let z = predict(&mut model, &data, ckpt.header.train.batch_size)?;
    let m = ScoreMatrix::new(data.clip_ids.clone(), z)?;
    write_matrix_csv(&a.out, &m)?;
    println!("wrote {} predictions to {}", records.len(), a.out.display());
    Ok(())
}

fn labels_for(source: &LabelSource, ids: &[String]) -> Result<ScoreMatrix, Error> {
    let labels = match (&source.manifest, &source.labels) {
        (Some(m), _) => labels_from_records(&load_manifest(m)?),
        (None, Some(l)) => read_matrix_csv(l)?,
        (None, None) => return Err(Error::Config("a label source is required".into())),
    };
    Ok(labels.select(ids)?)
}

fn evaluate(a: EvaluateArgs) -> Result<(), Error> {
    let z = read_matrix_csv(&a.predictions)?;
    let l = labels_for(&a.source, &z.clip_ids)?;
    let result = macro_auprc(&z.values, &l.values)?;
    let report = AuprcReport::new(&result, &l.values);
    print!("{}", report.to_table());
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    if let Some(dir) = &a.curves {
        write_pr_curves(dir, &z.values, &l.values)?;
    }
    println!("macro_auprc {:?}", result.macro_auprc);
    Ok(())
}

fn fuse_cmd(a: FuseArgs) -> Result<(), Error> {
    let first = read_matrix_csv(&a.predictions[0])?;
    let ids = first.clip_ids.clone();
    let mut models = vec![first.values];
    for p in &a.predictions[1..] {
        models.push(read_matrix_csv(p)?.select(&ids)?.values);
    }
    let l = labels_for(&a.source, &ids)?;
    let assignment = select_best_per_class(&models, &l.values)?;
    let masks = masks_from_assignment(&assignment, ids.len());
    let fused = fuse(&models, &masks)?;
    for (u, z) in models.iter().enumerate() {
        println!("model {u} macro_auprc {:?}", macro_auprc(z, &l.values)?.macro_auprc);
    }
    let fused_score = macro_auprc(&fused, &l.values)?.macro_auprc;
    write_matrix_csv(&a.out, &ScoreMatrix::new(ids, fused)?)?;
    let names: BTreeMap<String, usize> = urbantag::CoarseClass::ALL
        .iter()
        .zip(&assignment.owners)
        .map(|(c, &u)| (c.column_name().to_string(), u))
        .collect();
    let sources: Vec<String> = a.predictions.iter().map(|p| p.display().to_string()).collect();
    write_json(
        &a.assignment,
        &serde_json::json!({ "models": sources, "owners": assignment.owners, "by_class": names }),
    )?;
    println!("fused macro_auprc {fused_score:?}");
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), Error> {
    if !a.tau.is_finite() {
        return Err(Error::Config("--tau must be finite".into()));
    }
    let z = read_matrix_csv(&a.predictions)?;
    let l = labels_for(&a.source, &z.clip_ids)?;
    let report = distractor_analysis(&l.values, &z.values, a.tau)?;
    print!("{}", report.to_table());
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    Ok(())
}
