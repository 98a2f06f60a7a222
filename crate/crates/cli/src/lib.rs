//! Command-line pipeline: synthesize, extract, train, evaluate, predict.

pub mod config;

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use iqdeg::dataset::{
    cache_features, evaluate, CacheSummary, filter_by_camera, filter_by_labels, load_manifest, parse_camera_set, read_cache, split,
    Camera, FeatureCache, Manifest,
};
use iqdeg::filter::LaplacianStencil;
use iqdeg::svm::{grid_search, load_model, save_model, train_multiclass, GridSearchResult, SvmModel};
use iqdeg::synth::{build_corpus, bundled_bases, load_bases, DEFAULT_SIZE};
use iqdeg::{compute_fields, extract_features, load_image, FEATURE_NAMES};
use serde::Serialize;

pub use config::{file_digest, RunConfig, SolverConfig};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "iqdeg", version, about = "Recognize image quality degradation with filter-bank features and an RBF SVM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic corpus from clean base images
    Synth(SynthArgs),
    /// Compute the feature cache for a manifest
    Extract(ExtractArgs),
    /// Grid-search hyperparameters and train a model on the training split
    Train(TrainArgs),
    /// Evaluate a model on the held-out split or another cache
    Eval(EvalArgs),
    /// Classify individual images
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of base images (defaults to the bundled set)
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SIZE.0)]
    pub height: usize,
    #[arg(long, default_value_t = DEFAULT_SIZE.1)]
    pub width: usize,
}

#[derive(Debug, Args)]
pub struct FilterFlags {
    /// TOML run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub radius_rows: Option<usize>,
    #[arg(long)]
    pub radius_cols: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Use the eight-neighbour Laplacian
    #[arg(long)]
    pub eight_neighbor: bool,
}

impl FilterFlags {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(v) = self.radius_rows {
            cfg.filter.radius_rows = v;
        }
        if let Some(v) = self.radius_cols {
            cfg.filter.radius_cols = v;
        }
        if let Some(v) = self.epsilon {
            cfg.filter.epsilon = v;
        }
        if self.eight_neighbor {
            cfg.filter.laplacian = LaplacianStencil::EightNeighbor;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature cache to write (CSV)
    #[arg(long)]
    pub out: PathBuf,
    /// Fail when more than this fraction of images cannot be processed
    #[arg(long, default_value_t = 0.1)]
    pub max_failure_rate: f64,
    #[command(flatten)]
    pub filter: FilterFlags,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub cache: PathBuf,
    /// Model file to write
    #[arg(long)]
    pub model: PathBuf,
    /// Training report (JSON)
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated subset of labels to train on
    #[arg(long)]
    pub labels: Option<String>,
    /// Camera tags allowed in the training split (`all` or e.g. `FV,RV`)
    #[arg(long)]
    pub train_cameras: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub no_stratify: bool,
    /// Comma-separated C grid
    #[arg(long)]
    pub c: Option<String>,
    /// Comma-separated gamma grid
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub class_weight: bool,
    /// Exit with status 3 if any solver run hits the iteration cap
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Cache the model was trained from
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Evaluate every record of this cache instead of the held-out split
    #[arg(long)]
    pub test_cache: Option<PathBuf>,
    /// Camera tags kept in the test set
    #[arg(long)]
    pub test_cameras: Option<String>,
    /// Evaluate on the training split (reported with a warning)
    #[arg(long)]
    pub on_train: bool,
    /// Text report
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    /// Print the 20 raw features
    #[arg(long)]
    pub features: bool,
    /// Write the filter fields of each image as PNGs under this directory
    #[arg(long)]
    pub dump_fields: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterFlags,
}

/// Error carrying the process exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        let code = if error.chain().any(|e| e.downcast_ref::<iqdeg::Error>().is_some()) {
            EXIT_DATA
        } else {
            EXIT_USAGE
        };
        Self { code, error }
    }
}

impl From<iqdeg::Error> for CliError {
    fn from(e: iqdeg::Error) -> Self {
        Self {
            code: EXIT_DATA,
            error: e.into(),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => {
            let m = cmd_synth(&a)?;
            println!("wrote {} images to {}", m.len(), a.out.display());
        }
        Command::Extract(a) => {
            let s = cmd_extract(&a)?;
            println!("extracted {} images into {}", s.records, a.out.display());
        }
        Command::Train(a) => {
            let r = cmd_train(&a)?;
            println!(
                "best C={} gamma={} cv accuracy {:.4}; model written to {}",
                r.grid.best.c,
                r.grid.best.gamma,
                r.grid.best_accuracy,
                a.model.display()
            );
        }
        Command::Eval(a) => print!("{}", cmd_eval(&a)?.to_text()),
        Command::Predict(a) => cmd_predict(&a)?,
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<Manifest, CliError> {
    let bases = match &a.base {
        Some(dir) => load_bases(dir)?,
        None => bundled_bases()?,
    };
    Ok(build_corpus(&bases, a.per_class, a.seed, &a.out, (a.height, a.width))?)
}

pub fn cmd_extract(a: &ExtractArgs) -> Result<CacheSummary, CliError> {
    let cfg = a.filter.resolve()?;
    cfg.validate()?;
    let m = load_manifest(&a.manifest)?;
    let summary = cache_features(&m, &cfg.filter, &a.out)?;
    let n = m.len().max(1);
    for f in &summary.failures {
        log::warn!("{}: {}", f.path, f.error);
    }
    let rate = summary.failures.len() as f64 / n as f64;
    if rate > a.max_failure_rate {
        return Err(CliError {
            code: EXIT_DATA,
            error: anyhow::anyhow!(
                "{} of {} images failed ({:.1}% > {:.1}%)",
                summary.failures.len(),
                m.len(),
                100.0 * rate,
                100.0 * a.max_failure_rate
            ),
        });
    }
    Ok(summary)
}

fn parse_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("invalid number '{t}'")))
        .collect()
}

fn label_filter(m: &Manifest, labels: Option<&str>) -> iqdeg::Result<Manifest> {
    match labels {
        Some(l) => {
            let wanted: Vec<&str> = l.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            filter_by_labels(m, &wanted)
        }
        None => Ok(m.clone()),
    }
}

fn camera_names(tags: &[Camera]) -> String {
    tags.iter().map(Camera::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Serialize)]
pub struct TrainReport {
    pub labels: Vec<String>,
    pub train_size: usize,
    pub test_size: usize,
    pub train_class_counts: Vec<(String, usize)>,
    pub grid: GridSearchResult,
    pub converged: bool,
    pub support_vectors: usize,
    pub config_digest: String,
    pub cache_digest: String,
}

pub fn cmd_train(a: &TrainArgs) -> Result<TrainReport, CliError> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.split.seed = s;
    }
    if let Some(f) = a.train_fraction {
        cfg.split.train_fraction = f;
    }
    if a.no_stratify {
        cfg.split.stratified = false;
    }
    if let Some(c) = &a.c {
        cfg.grid.c = parse_list(c)?;
    }
    if let Some(g) = &a.gamma {
        cfg.grid.gamma = parse_list(g)?;
    }
    if let Some(k) = a.folds {
        cfg.grid.folds = k;
    }
    if a.class_weight {
        cfg.solver.class_weight = true;
    }
    cfg.validate()?;
    let opts = cfg.solver.options();

    let cache = read_cache(&a.cache)?;
    let all = label_filter(&cache.manifest()?, a.labels.as_deref())?;
    let (train_m, test_m) = split(&all, &cfg.split)?;
    let cameras = match &a.train_cameras {
        Some(s) => Some(parse_camera_set(s)?),
        None => None,
    };
    let train_m = match &cameras {
        Some(tags) => filter_by_camera(&train_m, tags)?,
        None => train_m,
    };

    let labels = train_m.labels().to_vec();
    let records = cache.select(&train_m)?;
    let x: Vec<&[f64]> = records.iter().map(|r| r.features.as_slice()).collect();
    let y: Vec<usize> = records
        .iter()
        .map(|r| labels.iter().position(|l| *l == r.label).expect("filtered labels"))
        .collect();

    log::info!(
        "training on {} samples, {} grid cells, {} folds",
        x.len(),
        cfg.grid.c.len() * cfg.grid.gamma.len(),
        cfg.grid.folds
    );
    let grid = grid_search(&x, &y, &labels, &cfg.grid, &opts)?;
    let mut model = train_multiclass(&x, &y, &labels, grid.best, &opts)?;

    let cache_digest = file_digest(&a.cache)?;
    model.set_meta("cache_digest", cache_digest.clone());
    model.set_meta("config_digest", cfg.digest());
    model.set_meta("config", serde_json::to_string(&cfg).expect("config serializes"));
    model.set_meta("labels_filter", a.labels.clone().unwrap_or_default());
    model.set_meta(
        "train_cameras",
        cameras.as_deref().map(camera_names).unwrap_or_else(|| "all".into()),
    );
    model.set_meta("cv_accuracy", iqdeg::svm::fmt_f64(grid.best_accuracy));
    save_model(&model, &a.model)?;

    let converged = model.converged() && grid.table.iter().all(|c| c.converged);
    let report = TrainReport {
        labels: labels.clone(),
        train_size: train_m.len(),
        test_size: test_m.len(),
        train_class_counts: train_m.class_counts(),
        converged,
        support_vectors: model.machines.iter().map(|m| m.svm.support_vectors.len()).sum(),
        grid,
        config_digest: cfg.digest(),
        cache_digest,
    };
    if let Some(p) = &a.report {
        std::fs::write(p, serde_json::to_string_pretty(&report).expect("report serializes"))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    if !converged {
        log::warn!("at least one solver run stopped at the iteration cap");
        if a.strict {
            return Err(CliError {
                code: EXIT_CONVERGENCE,
                error: anyhow::anyhow!("solver did not converge (--strict)"),
            });
        }
    }
    Ok(report)
}

fn model_config(model: &SvmModel) -> anyhow::Result<RunConfig> {
    let text = model.meta("config").context("model has no stored run configuration")?;
    serde_json::from_str(text).context("stored run configuration is invalid")
}

pub fn cmd_eval(a: &EvalArgs) -> Result<iqdeg::dataset::EvalReport, CliError> {
    let model = load_model(&a.model)?;
    model.check_feature_order(iqdeg::features::FEATURE_ORDER_TAG, &FEATURE_NAMES)?;
    let cfg = model_config(&model)?;
    let mut warnings = Vec::new();

    let (cache, selected): (FeatureCache, Manifest) = match &a.test_cache {
        Some(p) => {
            let cache = read_cache(p)?;
            let m = label_filter(&cache.manifest()?, Some(&model.labels.join(",")))?;
            (cache, m)
        }
        None => {
            let cache = read_cache(&a.cache)?;
            if model.meta("cache_digest") != Some(file_digest(&a.cache)?.as_str()) {
                warnings.push("cache differs from the one the model was trained on".to_string());
            }
            let filter = model.meta("labels_filter").filter(|s| !s.is_empty());
            let all = label_filter(&cache.manifest()?, filter)?;
            let (train_m, test_m) = split(&all, &cfg.split)?;
            let m = if a.on_train {
                warnings.push("evaluating on the training split".to_string());
                train_m
            } else {
                test_m
            };
            (cache, m)
        }
    };
    let selected = match &a.test_cameras {
        Some(s) => filter_by_camera(&selected, &parse_camera_set(s)?)?,
        None => selected,
    };
    let records = cache.select(&selected)?;
    let (mut report, _) = evaluate(&model, &records)?;
    report.seed = Some(cfg.split.seed);
    report.config_digest = model.meta("config_digest").map(str::to_string);
    for w in warnings {
        log::warn!("{w}");
        report.warnings.push(w);
    }
    if let Some(p) = &a.out {
        std::fs::write(p, report.to_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.json {
        std::fs::write(p, report.to_json()?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(report)
}

pub fn cmd_predict(a: &PredictArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let mut cfg = model_config(&model).unwrap_or_default();
    let flags = a.filter.resolve()?;
    if a.filter.config.is_some()
        || a.filter.radius_rows.is_some()
        || a.filter.radius_cols.is_some()
        || a.filter.epsilon.is_some()
        || a.filter.eight_neighbor
    {
        cfg.filter = flags.filter;
    }
    for path in &a.images {
        let img = load_image(path)?;
        let fields = compute_fields(&img, &cfg.filter)?;
        let f = extract_features(&fields)?;
        let p = model.predict(f.as_slice())?;
        let votes: Vec<String> = model
            .labels
            .iter()
            .zip(&p.votes)
            .map(|(l, v)| format!("{l}={v}"))
            .collect();
        println!("{}\t{}\tvotes: {}", path.display(), model.labels[p.class], votes.join(" "));
        if a.features {
            for (n, v) in FEATURE_NAMES.iter().zip(f.as_slice()) {
                println!("  {n} {v:.9e}");
            }
        }
        if let Some(dir) = &a.dump_fields {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let out = dir.join(stem);
            fields.export_pngs(&out)?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
