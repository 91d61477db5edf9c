//! Command-line front end.
//!
//! Data goes to files or standard output, diagnostics to standard error.
//! Outputs contain no timestamps, so reruns on the same input are
//! byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::annotations::{
    list_images, load_dataset_root, read_label_file, AnnotationError, ClassTaxonomy,
};
use crate::assignment::{hungarian, match_cost_matrix, AssignmentError, CandidatePrediction, CostWeights};
use crate::datasetops::{
    class_distribution, class_distribution_of, grouped_split, stats_csv, SplitConfig, SplitError,
    SplitResult,
};
use crate::evaluation::{
    aggregate_predictions_text, coco_iou_thresholds, evaluate, load_predictions, nms, pr_curve_svg,
    write_predictions_dir, EvalConfig, EvalError, DEFAULT_CONFIDENCE,
};
use crate::imageops::{ClaheParams, Enhancement, GammaValue, ImageOpsError, Raster};
use crate::version_line;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    ImageOps(#[from] ImageOpsError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "detkit", version, about = "Detection dataset, enhancement, assignment and evaluation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance every PNG/JPEG image in a directory; writes PNGs and a manifest
    Enhance(EnhanceArgs),
    /// Class distribution of a dataset as CSV
    Stats(StatsArgs),
    /// Scene-grouped train/validation split
    Split(SplitArgs),
    /// Score predictions against a dataset
    Eval(EvalArgs),
    /// One-to-one assignment between one image's predictions and labels
    Match(MatchArgs),
    /// Per-class non-maximum suppression over a predictions tree
    Nms(NmsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Technique {
    He,
    Clahe,
    Gamma,
}

/// `NxM` tile grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tiles(pub u32, pub u32);

impl FromStr for Tiles {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected NxM, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("{v:?}: {e}"));
        Ok(Tiles(parse(a)?, parse(b)?))
    }
}

/// Clip limit, or `none` to disable clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clip(pub Option<f64>);

impl FromStr for Clip {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "off" | "disabled" => Ok(Clip(None)),
            other => other.parse::<f64>().map(|v| Clip(Some(v))).map_err(|e| format!("{s:?}: {e}")),
        }
    }
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long, value_enum)]
    pub technique: Technique,
    #[arg(long, default_value_t = 1.5)]
    pub gamma: f64,
    #[arg(long, default_value = "8x8")]
    pub tiles: Tiles,
    #[arg(long, default_value = "2.0")]
    pub clip: Clip,
    /// Input directory (or a single image)
    pub input: PathBuf,
    /// Output directory
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset root with images/ and labels/
    pub dataset: PathBuf,
    /// Classes file, one name per line [default: DATASET/classes.txt]
    #[arg(long)]
    pub classes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Directory holding train.txt/val.txt; adds per-split columns
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Write the CSV here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 43)]
    pub seed: u64,
    /// Output directory for train.txt and val.txt
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Directory of per-image prediction files, or one aggregate file
    pub preds: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    pub conf: f64,
    /// Apply NMS at this IoU before matching
    #[arg(long)]
    pub nms: Option<f64>,
    /// Write one SVG precision/recall plot per class
    #[arg(long)]
    pub plots: bool,
    /// Output directory
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassCountArgs {
    /// Classes file used to size class distributions
    #[arg(long, conflicts_with = "num_classes")]
    pub classes: Option<PathBuf>,
    /// Number of classes [default: largest class id seen + 1]
    #[arg(long)]
    pub num_classes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    pub labels: PathBuf,
    pub preds: PathBuf,
    #[command(flatten)]
    pub classes: ClassCountArgs,
    /// Class, L1 and GIoU weights
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.0, 5.0, 2.0])]
    pub weights: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct NmsArgs {
    pub preds: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    #[command(flatten)]
    pub classes: ClassCountArgs,
    /// Output directory (per-image input) or file (aggregate input)
    pub out: PathBuf,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Enhance(a) => run_enhance(&a, stdout),
        Command::Stats(a) => run_stats(&a, stdout),
        Command::Split(a) => run_split(&a, stdout),
        Command::Eval(a) => run_eval(&a, stdout),
        Command::Match(a) => run_match(&a, stdout),
        Command::Nms(a) => run_nms(&a, stdout),
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("run `detkit --help` for usage");
            }
            1
        }
    }
}

fn write_out(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout
        .write_all(text.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn require_exists(path: &Path, what: &str) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

/// Decode a PNG or JPEG into a gray or RGB raster. Alpha is dropped.
pub fn read_raster(path: &Path) -> Result<Raster, CliError> {
    let img = image::open(path).map_err(|e| CliError::Image {
        path: path.to_path_buf(),
        message: format!("cannot decode image: {e}"),
    })?;
    let raster = if img.color().has_color() {
        let rgb = img.to_rgb8();
        Raster::rgb(rgb.width(), rgb.height(), rgb.into_raw())?
    } else {
        let gray = img.to_luma8();
        Raster::gray(gray.width(), gray.height(), gray.into_raw())?
    };
    Ok(raster)
}

pub fn write_png(path: &Path, r: &Raster) -> Result<(), CliError> {
    let color = if r.channels() == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(path, r.samples(), r.width(), r.height(), color, image::ImageFormat::Png)
        .map_err(|e| CliError::Image {
            path: path.to_path_buf(),
            message: format!("cannot encode PNG: {e}"),
        })
}

fn enhancement_from(a: &EnhanceArgs) -> Result<Enhancement, CliError> {
    Ok(match a.technique {
        Technique::He => Enhancement::Equalize,
        Technique::Clahe => Enhancement::Clahe(ClaheParams::new(a.tiles.0, a.tiles.1, a.clip.0)?),
        Technique::Gamma => Enhancement::Gamma(GammaValue::new(a.gamma)?),
    })
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn run_enhance(a: &EnhanceArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let op = enhancement_from(a)?;
    require_exists(&a.input, "input")?;
    let inputs = if a.input.is_dir() {
        list_images(&a.input)?
    } else {
        vec![a.input.clone()]
    };
    let mut outputs: BTreeMap<String, &Path> = BTreeMap::new();
    for p in &inputs {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let name = format!("{stem}.png");
        if let Some(prev) = outputs.insert(name.clone(), p) {
            return Err(CliError::Usage(format!(
                "{} and {} would both be written to {name}",
                prev.display(),
                p.display()
            )));
        }
    }
    create_dir(&a.output)?;
    let rows: Vec<String> = inputs
        .par_iter()
        .map(|p| -> Result<String, CliError> {
            let raster = read_raster(p)?;
            let out = op.apply(&raster)?;
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let out_name = format!("{stem}.png");
            write_png(&a.output.join(&out_name), &out)?;
            Ok(format!(
                "{}\t{out_name}\t{}\t{}",
                file_name(p),
                op.technique(),
                op.describe_params()
            ))
        })
        .collect::<Result<_, _>>()?;
    let mut manifest = format!("{}\ninput\toutput\ttechnique\tparams\n", version_line());
    for r in &rows {
        manifest.push_str(r);
        manifest.push('\n');
    }
    write_file(&a.output.join("manifest.txt"), &manifest)?;
    write_out(stdout, &format!("enhanced {} image(s) into {}\n", rows.len(), a.output.display()))
}

fn read_id_list(path: &Path) -> Result<std::collections::BTreeSet<String>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

pub fn run_stats(a: &StatsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    require_exists(&a.dataset.dataset, "dataset")?;
    let d = load_dataset_root(&a.dataset.dataset, a.dataset.classes.as_deref())?;
    let report = class_distribution(&d);
    let split_reports = match &a.split {
        Some(dir) => {
            let train = read_id_list(&dir.join("train.txt"))?;
            let val = read_id_list(&dir.join("val.txt"))?;
            Some((class_distribution_of(&d, &train), class_distribution_of(&d, &val)))
        }
        None => None,
    };
    let mut csv = stats_csv(&report, split_reports.as_ref().map(|(t, v)| (t, v)));
    if let Some((t, v)) = &split_reports {
        csv.push_str(&format!("# train_images={} val_images={}\n", t.total_images, v.total_images));
    }
    csv.push_str(&version_line());
    csv.push('\n');
    match &a.out {
        Some(p) => write_file(p, &csv),
        None => write_out(stdout, &csv),
    }
}

pub fn run_split(a: &SplitArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    require_exists(&a.dataset.dataset, "dataset")?;
    let cfg = SplitConfig::new(a.val_fraction, a.seed)?;
    let d = load_dataset_root(&a.dataset.dataset, a.dataset.classes.as_deref())?;
    let split: SplitResult = grouped_split(&d, &cfg)?;
    let (train, val) = split.to_lists();
    create_dir(&a.out)?;
    write_file(&a.out.join("train.txt"), &train)?;
    write_file(&a.out.join("val.txt"), &val)?;
    write_out(
        stdout,
        &format!("train {} val {}\n", split.train_ids.len(), split.val_ids.len()),
    )
}

pub fn run_eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    require_exists(&a.dataset.dataset, "dataset")?;
    require_exists(&a.preds, "predictions")?;
    let d = load_dataset_root(&a.dataset.dataset, a.dataset.classes.as_deref())?;
    let preds = load_predictions(&a.preds, d.taxonomy.len())?;
    let cfg = EvalConfig {
        conf_threshold: a.conf,
        iou_thresholds: coco_iou_thresholds(),
        nms_iou: a.nms,
    };
    let report = evaluate(&preds, &d, &cfg)?;
    create_dir(&a.out)?;
    write_file(&a.out.join("report.csv"), &report.to_csv())?;
    write_file(&a.out.join("pr_curves.csv"), &report.pr_curves_csv())?;
    let summary = format!("{}\n{}", version_line(), report.summary());
    write_file(&a.out.join("summary.txt"), &summary)?;
    if a.plots {
        let plots = a.out.join("plots");
        create_dir(&plots)?;
        for (c, name) in report.class_names.iter().enumerate() {
            let title = format!("{name} (IoU {:.2})", report.iou_thresholds[0]);
            let svg = pr_curve_svg(&title, &report.pr_curves[c]);
            write_file(&plots.join(format!("class_{c:02}.svg")), &svg)?;
        }
    }
    write_out(stdout, &summary)
}

fn class_count_for(args: &ClassCountArgs, seen_max: Option<usize>) -> Result<usize, CliError> {
    if let Some(path) = &args.classes {
        return Ok(ClassTaxonomy::from_file(path)?.len());
    }
    if let Some(k) = args.num_classes {
        if k == 0 {
            return Err(CliError::Usage("--num-classes must be >= 1".into()));
        }
        return Ok(k);
    }
    Ok(seen_max.map_or(1, |m| m + 1))
}

pub fn run_match(a: &MatchArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    require_exists(&a.labels, "labels")?;
    require_exists(&a.preds, "predictions")?;
    let weights = CostWeights::new(a.weights[0], a.weights[1], a.weights[2])?;
    // parse once without a class bound to learn the ids in use
    let targets = read_label_file(&a.labels, usize::MAX)?;
    let dets = crate::annotations::read_prediction_file(&a.preds, usize::MAX)?;
    let seen = targets.iter().map(|t| t.class_id).chain(dets.iter().map(|d| d.class_id)).max();
    let k = class_count_for(&a.classes, seen)?;
    if let Some(m) = seen.filter(|&m| m >= k) {
        return Err(AnnotationError::ClassOutOfRange { class_id: m, class_count: k }.into());
    }
    let preds = dets
        .iter()
        .map(|d| CandidatePrediction::from_confidence(d.class_id, d.confidence, k, d.bbox))
        .collect::<Result<Vec<_>, _>>()?;
    let cost = match_cost_matrix(&preds, &targets, &weights)?;
    let result = hungarian(&cost)?;
    let mut out = format!("{}\npred target cost\n", version_line());
    for &(p, t) in &result.pairs {
        out.push_str(&format!("{p} {t} {:.6}\n", cost.get(p, t)));
    }
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    out.push_str(&format!("total_cost {:.6}\n", result.total_cost));
    out.push_str(&format!("unmatched_predictions {}\n", join(&result.unmatched_predictions)));
    out.push_str(&format!("unmatched_targets {}\n", join(&result.unmatched_targets)));
    write_out(stdout, &out)
}

pub fn run_nms(a: &NmsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    require_exists(&a.preds, "predictions")?;
    if !(0.0..=1.0).contains(&a.iou) {
        return Err(CliError::Usage(format!("--iou must be in [0, 1], got {}", a.iou)));
    }
    let bound = match (&a.classes.classes, a.classes.num_classes) {
        (None, None) => usize::MAX,
        _ => class_count_for(&a.classes, None)?,
    };
    let preds = load_predictions(&a.preds, bound)?;
    let before: usize = preds.values().map(Vec::len).sum();
    let filtered: BTreeMap<String, Vec<_>> = preds
        .into_iter()
        .map(|(id, dets)| {
            let kept = nms(&dets, a.iou);
            (id, kept)
        })
        .collect();
    let after: usize = filtered.values().map(Vec::len).sum();
    if a.preds.is_dir() {
        write_predictions_dir(&a.out, &filtered)?;
    } else {
        if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_file(&a.out, &aggregate_predictions_text(&filtered))?;
    }
    write_out(stdout, &format!("kept {after} of {before} detection(s)\n"))
}
