//! The `segeval` command line.
//!
//! Exit codes: 0 on success, 1 when the data is invalid or cannot be read,
//! 2 for usage errors (bad flags or inconsistent configuration values).
//! Every command echoes its fully resolved configuration as one JSON line
//! on standard error before doing any work.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use segeval_core::augment::{offline_augment, GridSpec};
use segeval_core::eval::{evaluate, EvalConfig, EvalMode, EvalReport, IouKind, Predictions};
use segeval_core::io::{
    load_annotation_file, load_dataset, load_images, load_predictions, save_dataset, save_images,
    save_predictions, split_csv, write_atomic, DatasetManifest,
};
use segeval_core::model::{instance_histogram, validate_dataset, Dataset, Split};
use segeval_core::report::{class_table, summary_table, ReportStyle, SummaryEntry, Table};
use segeval_core::split::{split_report, stratified_split, SplitOutcome};
use segeval_core::synth::{
    generate_dataset, paper_scale_dataset, perturb_dataset, PerturbationConfig, SceneConfig,
    ScoreNoise, ShapeFamily,
};
use segeval_core::{AugmentationConfig, Error as CoreError, FillPolicy, SplitConfig};

/// Seed used by randomized commands when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 2020;

#[derive(Debug, Parser)]
#[command(name = "segeval", version, about = "Instance-segmentation dataset tooling and evaluation")]
pub struct Cli {
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset against the structural rules.
    Validate(ValidateArgs),
    /// Materialize the offline augmentation grid for the train frames.
    Augment(AugmentArgs),
    /// Assign class-balanced train/val/test tags.
    Split(SplitArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset and, optionally, perturbed predictions.
    Synth(SynthArgs),
    /// Render saved evaluation reports as tables.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// Dataset manifest or standalone COCO annotation file.
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// Identity, seven rotations, three scales, four translations.
    Default,
    /// Every rotation combined with every scale, plus the translations.
    Product,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Output directory for the augmented dataset.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Minimum fraction of every instance's expected area that must survive.
    #[arg(long, default_value_t = 0.9)]
    pub area_threshold: f64,
    #[arg(long, value_enum, default_value_t = GridKind::Default)]
    pub grid: GridKind,
    /// Background fill: `mean` or an `R,G,B` triple.
    #[arg(long, default_value = "mean")]
    pub fill: String,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Where to write the `frame_id,split` CSV.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Also write the tagged dataset to this directory.
    #[arg(long, value_name = "DIR")]
    pub tagged_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.6)]
    pub train: f64,
    #[arg(long, default_value_t = 0.2)]
    pub val: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test: f64,
    /// Instances per class wanted in each of val and test.
    #[arg(long, default_value_t = 7)]
    pub quota: usize,
    #[arg(long, default_value_t = 1)]
    pub tolerance: usize,
    #[arg(long, default_value_t = 32)]
    pub attempts: usize,
    /// Lower the quota for classes that are too small instead of failing.
    #[arg(long)]
    pub best_effort: bool,
    /// Re-split a dataset that already has split tags.
    #[arg(long)]
    pub force: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Binary,
    Multiclass,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IouArg {
    Mask,
    Bbox,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdSet {
    /// 0.50, 0.55, ..., 0.95
    Coco,
    /// 0.50, 0.55, ..., 0.90
    To90,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    /// Report JSON followed by the table.
    Both,
    Json,
    Table,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StyleArg {
    Summary,
    PerClass,
}

impl From<StyleArg> for ReportStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Summary => ReportStyle::Summary,
            StyleArg::PerClass => ReportStyle::PerClass,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Ground truth: dataset manifest or COCO annotation file.
    #[arg(long, value_name = "PATH")]
    pub gt: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub pred: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Multiclass)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = IouArg::Mask)]
    pub iou: IouArg,
    #[arg(long, value_enum, default_value_t = ThresholdSet::Coco)]
    pub thresholds: ThresholdSet,
    /// Detection caps per frame and class.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    pub max_det: Vec<usize>,
    /// Leave the "Other" class out of multi-class scoring.
    #[arg(long)]
    pub exclude_other: bool,
    /// Only score frames tagged with this split.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Also write the report JSON to this file.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    pub format: OutputFormat,
    #[arg(long, value_enum, default_value_t = StyleArg::PerClass)]
    pub style: StyleArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeArg {
    Capsule,
    RotatedRect,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    /// 333 frames with 561 instruments in the proportions of the reference
    /// collection; overrides --frames and --instruments.
    #[arg(long)]
    pub paper_scale: bool,
    /// Instruments per frame as `MIN-MAX` or a single number.
    #[arg(long, default_value = "1-3")]
    pub instruments: String,
    #[arg(long, value_enum, default_value_t = ShapeArg::Capsule)]
    pub shape: ShapeArg,
    /// Let shapes leave the frame and cover each other.
    #[arg(long)]
    pub occlusion: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Write perturbed ground truth as predictions to this file.
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<PathBuf>,
    /// Rigid shift of each predicted mask, in pixels.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0.0)]
    pub drop: f64,
    /// Expected spurious predictions per frame.
    #[arg(long, default_value_t = 0.0)]
    pub spurious: f64,
    #[arg(long, default_value_t = 0.0)]
    pub flip: f64,
    /// `const:S` or `uniform:LO,HI`.
    #[arg(long, default_value = "const:1")]
    pub score_noise: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Mask-IoU report JSON; repeat for several summary rows.
    #[arg(long, value_name = "PATH", required = true)]
    pub mask: Vec<PathBuf>,
    /// Matching box-IoU report JSON, one per --mask.
    #[arg(long, value_name = "PATH")]
    pub bbox: Vec<PathBuf>,
    /// Row labels for the summary style, one per --mask.
    #[arg(long)]
    pub label: Vec<String>,
    #[arg(long, value_enum, default_value_t = StyleArg::PerClass)]
    pub style: StyleArg,
    /// `table` or `csv`.
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
}

/// A problem with the invocation rather than with the data.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building the worker pool")
            .and_then(|pool| pool.install(|| execute(&cli))),
        None => execute(&cli),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code(&err)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    let is_usage = err.chain().any(|cause| {
        cause.is::<UsageError>()
            || matches!(
                cause.downcast_ref::<CoreError>(),
                Some(CoreError::InvalidConfig(_) | CoreError::InvalidTransform(_))
            )
    });
    if is_usage {
        2
    } else {
        1
    }
}

fn echo(command: &str, threads: Option<usize>, args: &impl Serialize, config: serde_json::Value) {
    let line = json!({
        "command": command,
        "threads": threads,
        "args": args,
        "config": config,
    });
    eprintln!("{line}");
}

fn execute(cli: &Cli) -> Result<i32> {
    let t = cli.threads;
    match &cli.command {
        Command::Validate(a) => validate_cmd(a, t),
        Command::Augment(a) => augment_cmd(a, t),
        Command::Split(a) => split_cmd(a, t),
        Command::Evaluate(a) => evaluate_cmd(a, t),
        Command::Synth(a) => synth_cmd(a, t),
        Command::Report(a) => report_cmd(a, t),
    }
}

/// Loads ground truth from either a manifest or a COCO annotation file.
/// Returns the manifest when there is one.
fn load_any(path: &Path) -> Result<(Dataset, Option<DatasetManifest>)> {
    let text = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => anyhow::Error::new(CoreError::MissingFile(path.to_path_buf())),
        _ => anyhow::Error::new(e).context(format!("reading {}", path.display())),
    })?;
    let value: serde_json::Value = serde_json::from_slice(&text)
        .with_context(|| format!("{} is not valid JSON", path.display()))?;
    if value.get("format_version").is_some() && value.get("images").map_or(false, |v| v.is_string()) {
        let manifest = DatasetManifest::load(path)?;
        let ds = load_dataset(&manifest)?;
        Ok((ds, Some(manifest)))
    } else {
        Ok((load_annotation_file(path)?, None))
    }
}

fn load_manifest_dataset(path: &Path) -> Result<(Dataset, DatasetManifest)> {
    let manifest = DatasetManifest::load(path)?;
    let ds = load_dataset(&manifest)?;
    Ok((ds, manifest))
}

fn validate_cmd(a: &ValidateArgs, threads: Option<usize>) -> Result<i32> {
    echo("validate", threads, a, json!({}));
    let ds = match load_any(&a.dataset) {
        Ok((ds, _)) => ds,
        Err(err) => {
            if let Some(CoreError::Validation(violations)) = err.downcast_ref::<CoreError>() {
                for v in violations {
                    println!("{v}");
                }
                eprintln!("{} violation(s)", violations.len());
                return Ok(1);
            }
            return Err(err);
        }
    };
    // Loading validates already; this catches nothing new but keeps the
    // report format in one place.
    let violations = validate_dataset(&ds);
    for v in &violations {
        println!("{v}");
    }
    if !violations.is_empty() {
        return Ok(1);
    }
    println!("ok: {} frames, {} instances", ds.frames.len(), ds.instance_count());
    for (cat, n) in instance_histogram(&ds) {
        println!("  {:<16} {n}", ds.taxonomy.name(cat).unwrap_or("?"));
    }
    Ok(0)
}

fn parse_fill(s: &str) -> Result<FillPolicy> {
    if s == "mean" {
        return Ok(FillPolicy::MeanRgb);
    }
    let parts: Vec<&str> = s.split(',').collect();
    let rgb: Option<Vec<u8>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match rgb {
        Some(v) if v.len() == 3 => Ok(FillPolicy::Constant { rgb: [v[0], v[1], v[2]] }),
        _ => Err(usage(format!("--fill expects `mean` or `R,G,B`, got {s:?}"))),
    }
}

fn augment_cmd(a: &AugmentArgs, threads: Option<usize>) -> Result<i32> {
    let cfg = AugmentationConfig {
        offline_grid: GridSpec {
            rotation_scale_product: matches!(a.grid, GridKind::Product),
            ..GridSpec::default()
        },
        preservation_threshold: a.area_threshold,
        fill_policy: parse_fill(&a.fill)?,
        seed: a.seed,
        ..AugmentationConfig::default()
    };
    cfg.validate()?;
    echo("augment", threads, a, serde_json::to_value(&cfg)?);
    let (ds, manifest) = load_manifest_dataset(&a.manifest)?;
    let images = load_images(&manifest, &ds)?;
    let (out, out_images) = offline_augment(&ds, &images, &cfg)?;
    let out_manifest = DatasetManifest::at(&a.out);
    save_images(&out_manifest, &out, &out_images)?;
    save_dataset(&out, &out_manifest)?;
    println!(
        "{} source frames -> {} frames ({} derived), written to {}",
        ds.frames.len(),
        out.frames.len(),
        out.frames.len() - ds.frames.len(),
        a.out.display()
    );
    Ok(0)
}

fn quota_table(ds: &Dataset, outcome: &SplitOutcome) -> Table {
    let header = ["Class", "Total", "Target", "Val", "Test", "Status"];
    let rows = outcome
        .quotas
        .iter()
        .map(|q| {
            let status = match (q.target, q.within_tolerance, q.feasible) {
                (None, _, _) => "absent",
                (Some(_), true, true) => "ok",
                (Some(_), true, false) => "reduced",
                (Some(_), false, _) => "off-target",
            };
            vec![
                ds.taxonomy.name(q.category).unwrap_or("?").to_string(),
                q.total.to_string(),
                q.target.map_or_else(|| "-".into(), |t| t.to_string()),
                q.val.to_string(),
                q.test.to_string(),
                status.to_string(),
            ]
        })
        .collect();
    Table {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows,
    }
}

fn split_cmd(a: &SplitArgs, threads: Option<usize>) -> Result<i32> {
    let cfg = SplitConfig {
        train: a.train,
        val: a.val,
        test: a.test,
        quota: a.quota,
        tolerance: a.tolerance,
        seed: a.seed,
        max_attempts: a.attempts,
        best_effort: a.best_effort,
        force: a.force,
    };
    cfg.validate()?;
    echo("split", threads, a, serde_json::to_value(&cfg)?);
    let (ds, manifest) = load_manifest_dataset(&a.manifest)?;
    let outcome = stratified_split(&ds, &cfg)?;
    write_atomic(&a.out, split_csv(&outcome.dataset).as_bytes())?;
    if let Some(dir) = &a.tagged_out {
        let images = std::fs::canonicalize(manifest.images_dir())
            .with_context(|| format!("resolving {}", manifest.images_dir().display()))?;
        let tagged = DatasetManifest {
            images,
            ..DatasetManifest::at(dir)
        };
        save_dataset(&outcome.dataset, &tagged)?;
    }

    let report = split_report(&outcome.dataset)?;
    let mut out = String::new();
    for row in &report.rows {
        let _ = writeln!(out, "{:<5} {:>4} frames {:>4} instances", row.split.as_str(), row.frames, row.instances);
    }
    let _ = writeln!(out, "objective {} (best of {} attempts: #{})", outcome.score, outcome.attempt_scores.len(), outcome.best_attempt);
    out.push('\n');
    out.push_str(&quota_table(&ds, &outcome).to_text());
    print!("{out}");
    Ok(0)
}

fn eval_config(a: &EvaluateArgs) -> EvalConfig {
    let mode = match a.mode {
        ModeArg::Binary => EvalMode::Binary,
        ModeArg::Multiclass => EvalMode::Multiclass,
    };
    let kind = match a.iou {
        IouArg::Mask => IouKind::Mask,
        IouArg::Bbox => IouKind::Bbox,
    };
    EvalConfig {
        thresholds: match a.thresholds {
            ThresholdSet::Coco => EvalConfig::coco_thresholds(),
            ThresholdSet::To90 => EvalConfig::thresholds_50_to_90(),
        },
        max_detections: a.max_det.clone(),
        exclude_other: a.exclude_other,
        ..EvalConfig::new(mode, kind)
    }
}

fn render(style: StyleArg, reports: &[(String, EvalReport, Option<EvalReport>)]) -> Table {
    match ReportStyle::from(style) {
        ReportStyle::PerClass => {
            let (_, mask, bbox) = &reports[0];
            class_table(mask, bbox.as_ref())
        }
        ReportStyle::Summary => {
            let entries: Vec<SummaryEntry<'_>> = reports
                .iter()
                .map(|(label, mask, bbox)| SummaryEntry { label, mask, bbox: bbox.as_ref() })
                .collect();
            summary_table(&entries)
        }
    }
}

fn evaluate_cmd(a: &EvaluateArgs, threads: Option<usize>) -> Result<i32> {
    let cfg = eval_config(a);
    cfg.validate()?;
    echo("evaluate", threads, a, serde_json::to_value(&cfg)?);
    let (mut gt, _) = load_any(&a.gt)?;
    let mut preds = load_predictions(&a.pred, &gt)?;
    if let Some(split) = a.split {
        gt = gt.subset(split.into());
        let keep: std::collections::BTreeMap<_, _> = preds
            .iter()
            .filter(|(id, _)| gt.frame(id).is_some())
            .map(|(id, insts)| (id.to_string(), insts.to_vec()))
            .collect();
        preds = Predictions::from_map(keep);
    }
    let report = evaluate(&gt, &preds, &cfg)?;
    let json_text = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(path) = &a.report {
        write_atomic(path, json_text.as_bytes())?;
    }
    let label = format!("{:?}/{:?}", a.mode, a.iou).to_lowercase();
    let table = render(a.style, &[(label, report, None)]);
    match a.format {
        OutputFormat::Both => print!("{json_text}\n{}", table.to_text()),
        OutputFormat::Json => print!("{json_text}"),
        OutputFormat::Table => print!("{}", table.to_text()),
        OutputFormat::Csv => print!("{}", table.to_csv()),
    }
    Ok(0)
}

fn parse_instruments(s: &str) -> Result<(usize, usize)> {
    let parse = |p: &str| p.trim().parse::<usize>().map_err(|_| usage(format!("bad --instruments {s:?}")));
    match s.split_once('-') {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

fn parse_score_noise(s: &str) -> Result<ScoreNoise> {
    let bad = || usage(format!("--score-noise expects `const:S` or `uniform:LO,HI`, got {s:?}"));
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "const" => Ok(ScoreNoise::Constant { value: rest.parse().map_err(|_| bad())? }),
        "uniform" => {
            let (lo, hi) = rest.split_once(',').ok_or_else(bad)?;
            Ok(ScoreNoise::Uniform {
                low: lo.parse().map_err(|_| bad())?,
                high: hi.parse().map_err(|_| bad())?,
            })
        }
        _ => Err(bad()),
    }
}

fn synth_cmd(a: &SynthArgs, threads: Option<usize>) -> Result<i32> {
    let scene = SceneConfig {
        instruments: parse_instruments(&a.instruments)?,
        shape: match a.shape {
            ShapeArg::Capsule => ShapeFamily::Capsule,
            ShapeArg::RotatedRect => ShapeFamily::RotatedRect,
        },
        occlusion: a.occlusion,
        seed: a.seed,
        ..SceneConfig::default()
    };
    scene.validate()?;
    let perturbation = PerturbationConfig {
        jitter: a.jitter,
        drop_prob: a.drop,
        spurious_rate: a.spurious,
        class_flip_prob: a.flip,
        score: parse_score_noise(&a.score_noise)?,
    };
    perturbation.validate()?;
    if a.frames == 0 && !a.paper_scale {
        bail!(usage("--frames must be at least 1"));
    }
    echo(
        "synth",
        threads,
        a,
        json!({ "scene": scene, "perturbation": perturbation }),
    );

    let (ds, images) = if a.paper_scale {
        paper_scale_dataset(a.seed)?
    } else {
        generate_dataset(&scene, a.frames)?
    };
    let manifest = DatasetManifest::at(&a.out);
    save_images(&manifest, &ds, &images)?;
    save_dataset(&ds, &manifest)?;
    println!("{} frames, {} instances written to {}", ds.frames.len(), ds.instance_count(), a.out.display());
    if let Some(path) = &a.predictions {
        let preds = perturb_dataset(&ds, &perturbation, a.seed)?;
        save_predictions(path, &preds)?;
        println!("{} predictions written to {}", preds.instance_count(), path.display());
    }
    Ok(0)
}

fn read_report(path: &Path) -> Result<EvalReport> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => anyhow::Error::new(CoreError::MissingFile(path.to_path_buf())),
        _ => anyhow::Error::new(e).context(format!("reading {}", path.display())),
    })?;
    serde_json::from_slice(&bytes).with_context(|| format!("{} is not an evaluation report", path.display()))
}

fn report_cmd(a: &ReportArgs, threads: Option<usize>) -> Result<i32> {
    if !a.bbox.is_empty() && a.bbox.len() != a.mask.len() {
        bail!(usage("give one --bbox per --mask, or none"));
    }
    if !a.label.is_empty() && a.label.len() != a.mask.len() {
        bail!(usage("give one --label per --mask, or none"));
    }
    if matches!(a.format, OutputFormat::Both | OutputFormat::Json) {
        bail!(usage("report renders `table` or `csv`"));
    }
    echo("report", threads, a, json!({}));
    let mut reports = Vec::new();
    for (i, path) in a.mask.iter().enumerate() {
        let mask = read_report(path)?;
        let bbox = a.bbox.get(i).map(|p| read_report(p)).transpose()?;
        let label = a.label.get(i).cloned().unwrap_or_else(|| {
            path.file_stem().map_or_else(|| format!("run {}", i + 1), |s| s.to_string_lossy().into_owned())
        });
        reports.push((label, mask, bbox));
    }
    let table = render(a.style, &reports);
    match a.format {
        OutputFormat::Csv => print!("{}", table.to_csv()),
        _ => print!("{}", table.to_text()),
    }
    Ok(0)
}
