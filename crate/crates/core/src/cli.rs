//! The `det3d` command line. [`run`] returns the process exit code:
//! 0 success, 2 usage error or unwritable output, 3 bad input data,
//! 4 internal error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::bundle::MapBundle;
use crate::dataset::{
    load_scene, manifest_path, pair_frames, truth_frames, write_dataset, DatasetOptions,
    FrameRecord, FramesFile, Manifest, ObjectRecord, MANIFEST,
};
use crate::decode::{decode_frame, DecodeConfig, GroupingConfig, PeakExtractionConfig};
use crate::error::Error;
use crate::fmap;
use crate::io::{read_json, to_json_bytes, write_atomic, write_json};
use crate::kitti::{
    convert_scene_to_kitti, parse_kitti_calib, parse_kitti_labels, KittiObject,
};
use crate::metrics::{
    evaluate, mean_average_precision, precision_recall_curve, Interpolation, MatchPolicy,
};
use crate::model::{Box2D, CameraIntrinsics, ClassTaxonomy, SuperCategory};
use crate::pooling::{cascade_corner_pool_all, center_pool_all, Corner};
use crate::synth::{GeneratorConfig, RenderConfig, SweepCategory, SweepSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn usage(e: impl Display) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: e.to_string(),
    }
}

fn data(e: impl Display) -> CliError {
    CliError {
        code: EXIT_DATA,
        message: e.to_string(),
    }
}

/// Write failures are reported as usage errors: the output location given on
/// the command line is unusable.
fn output(e: Error) -> CliError {
    match e {
        Error::Io { .. } => usage(e),
        other => data(other),
    }
}

#[derive(Debug, Parser)]
#[command(name = "det3d", version, about = "Keypoint 3D detection decode, evaluation and synthetic data")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset over one sweep.
    Synth(SynthArgs),
    /// Decode map bundles into detections.
    Decode(DecodeArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Convert between datasets and KITTI text files.
    #[command(subcommand)]
    Convert(ConvertCommand),
    /// Apply center or corner pooling to an FMAP file.
    Pool(PoolArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CategoryArg {
    Camera,
    Light,
    Weather,
    Sensor,
}

impl From<CategoryArg> for SweepCategory {
    fn from(c: CategoryArg) -> Self {
        match c {
            CategoryArg::Camera => SweepCategory::Camera,
            CategoryArg::Light => SweepCategory::Light,
            CategoryArg::Weather => SweepCategory::Weather,
            CategoryArg::Sensor => SweepCategory::Sensor,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuperArg {
    Air,
    Ground,
}

impl From<SuperArg> for SuperCategory {
    fn from(s: SuperArg) -> Self {
        match s {
            SuperArg::Air => SuperCategory::Air,
            SuperArg::Ground => SuperCategory::Ground,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClassesArg {
    Synthetic,
    Kitti,
}

impl ClassesArg {
    fn taxonomy(self) -> ClassTaxonomy {
        match self {
            ClassesArg::Synthetic => ClassTaxonomy::synthetic(),
            ClassesArg::Kitti => ClassTaxonomy::kitti(),
        }
    }
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive_real(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    category: CategoryArg,
    #[arg(long = "super", value_enum)]
    super_category: SuperArg,
    #[arg(long, env = "DET3D_SEED", default_value_t = 0)]
    seed: u64,
    /// Samples per grid point.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    repeats: u32,
    /// Objects per scene.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    objects: u32,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    stride: u32,
    /// Gaussian bump width in feature-map cells.
    #[arg(long, default_value_t = 1.5, value_parser = positive_real)]
    sigma: f64,
    /// MultiBin bins per angle.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..=64))]
    bins: u32,
    /// Omit depth, dims and orientation maps.
    #[arg(long)]
    no_head3d: bool,
    /// Corrupt maps with noise derived from each sample's sensor, weather and light.
    #[arg(long)]
    condition_noise: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// Dataset directory, manifest file, or a single bundle directory.
    #[arg(long)]
    input: PathBuf,
    /// Output frames JSON; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pixels per cell (default: the dataset's stride, else 4).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    stride: Option<u32>,
    #[arg(long, default_value_t = 0.3, value_parser = unit_interval)]
    score_threshold: f64,
    #[arg(long, default_value_t = 3)]
    nms_window: usize,
    #[arg(long, default_value_t = 100)]
    top_k: usize,
    /// Maximum tag distance for corner grouping.
    #[arg(long, default_value_t = 0.5, value_parser = positive_real)]
    theta: f64,
    /// Allow top-left corners below or right of bottom-right corners.
    #[arg(long)]
    no_gate: bool,
    /// Class list for a single bundle; datasets carry their own.
    #[arg(long, value_enum, default_value = "synthetic")]
    classes: ClassesArg,
    /// KITTI calibration file for lifting a single bundle to 3D.
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Frame id for a single bundle (default: the directory name or 000000).
    #[arg(long)]
    frame_id: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InterpArg {
    AllPoint,
    ElevenPoint,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predicted frames JSON.
    #[arg(long, required_unless_present = "per_class_ap")]
    pred: Option<PathBuf>,
    /// Ground truth: dataset directory, manifest, or frames JSON.
    #[arg(long, required_unless_present = "per_class_ap")]
    truth: Option<PathBuf>,
    /// JSON object of precomputed per-class AP values; prints their mean.
    #[arg(long, conflicts_with_all = ["pred", "truth"])]
    per_class_ap: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    iou: f64,
    #[arg(long, value_enum, default_value = "all-point")]
    interp: InterpArg,
    /// Class list when the truth is a frames JSON.
    #[arg(long, value_enum, default_value = "synthetic")]
    classes: ClassesArg,
    /// Report JSON output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-class precision-recall curves as JSON.
    #[arg(long)]
    curves: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum ConvertCommand {
    /// Write label_2/ and calib/ text files for every sample of a dataset.
    ToKitti {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read a directory of KITTI label files into a frames JSON.
    FromKitti {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "kitti")]
        classes: ClassesArg,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoolOp {
    Center,
    TopLeft,
    BottomRight,
}

#[derive(Debug, Args)]
struct PoolArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    op: PoolOp,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = std::panic::catch_unwind(|| dispatch(cli));
    match outcome {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("error: {}", e.message);
            e.code
        }
        Err(_) => {
            eprintln!("error: internal invariant violated");
            EXIT_INTERNAL
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        builder = builder.num_threads(j as usize);
    }
    let pool = builder.build().map_err(|e| CliError {
        code: EXIT_INTERNAL,
        message: e.to_string(),
    })?;
    pool.install(|| match cli.command {
        Command::Synth(a) => synth(a),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => eval(a),
        Command::Convert(c) => convert(c),
        Command::Pool(a) => pool_cmd(a),
    })
}

fn synth(a: SynthArgs) -> CliResult {
    std::fs::create_dir_all(&a.out)
        .map_err(|e| usage(format!("{}: {e}", a.out.display())))?;
    let opts = DatasetOptions {
        spec: SweepSpec {
            category: a.category.into(),
            super_category: a.super_category.into(),
            repeats: a.repeats as usize,
            seed: a.seed,
        },
        objects_per_scene: a.objects as usize,
        condition_noise: a.condition_noise,
        generator: GeneratorConfig::default(),
        render: RenderConfig {
            stride: a.stride,
            sigma: a.sigma,
            bins: a.bins as usize,
            with_head3d: !a.no_head3d,
        },
    };
    let m = write_dataset(&a.out, &ClassTaxonomy::synthetic(), &opts).map_err(output)?;
    println!("wrote {} samples to {}", m.samples.len(), a.out.display());
    Ok(())
}

fn is_dataset(path: &Path) -> bool {
    path.join(MANIFEST).is_file() || path.file_name().is_some_and(|n| n == MANIFEST)
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult {
    match out {
        Some(p) => write_json(p, value).map_err(output),
        None => {
            print!("{}", String::from_utf8_lossy(&to_json_bytes(value)));
            Ok(())
        }
    }
}

fn decode_one(
    bundle_dir: &Path,
    taxonomy: &ClassTaxonomy,
    cfg: &DecodeConfig,
    camera: Option<&CameraIntrinsics>,
    id: &str,
    category: Option<String>,
) -> crate::Result<FrameRecord> {
    let bundle = MapBundle::read_dir(bundle_dir)?;
    taxonomy.check_heatmap(&bundle.heatmaps.top_left)?;
    let dets = decode_frame(&bundle, cfg, camera)?;
    FrameRecord::from_detections(id, category, &dets, taxonomy)
}

fn decode(a: DecodeArgs) -> CliResult {
    let peaks = PeakExtractionConfig::new(a.score_threshold, a.nms_window, a.top_k).map_err(usage)?;
    let grouping = GroupingConfig::new(a.theta, !a.no_gate).map_err(usage)?;
    let frames = if is_dataset(&a.input) {
        let mpath = manifest_path(&a.input);
        let root = mpath.parent().unwrap_or(Path::new(".")).to_path_buf();
        let m = Manifest::load(&mpath).map_err(data)?;
        let cfg = DecodeConfig {
            peaks,
            grouping,
            stride: a.stride.unwrap_or(m.render.stride),
        };
        m.samples
            .par_iter()
            .map(|e| {
                let scene = load_scene(&root, e)?;
                decode_one(
                    &root.join(&e.tensors),
                    &m.classes,
                    &cfg,
                    Some(&scene.camera),
                    &e.id,
                    Some(e.point.category.name().to_string()),
                )
            })
            .collect::<crate::Result<Vec<_>>>()
            .map_err(data)?
    } else {
        let cfg = DecodeConfig {
            peaks,
            grouping,
            stride: a.stride.unwrap_or(4),
        };
        let camera = match &a.calib {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| data(format!("{}: {e}", p.display())))?;
                Some(parse_kitti_calib(&text).map_err(|e| data(format!("{}: {e}", p.display())))?)
            }
            None => None,
        };
        let id = a.frame_id.clone().unwrap_or_else(|| {
            a.input
                .file_name()
                .and_then(|n| n.to_str())
                .filter(|n| crate::dataset::parse_frame_id(n).is_some())
                .unwrap_or("000000")
                .to_string()
        });
        vec![decode_one(&a.input, &a.classes.taxonomy(), &cfg, camera.as_ref(), &id, None)
            .map_err(data)?]
    };
    emit_json(a.out.as_deref(), &FramesFile { frames })
}

#[derive(Serialize)]
struct MapOnly {
    per_class_ap: BTreeMap<String, f64>,
    map: f64,
}

#[derive(Serialize)]
struct Curve {
    class: String,
    points: Vec<(f64, f64)>,
}

fn eval(a: EvalArgs) -> CliResult {
    if let Some(p) = &a.per_class_ap {
        let per_class_ap: BTreeMap<String, f64> = read_json(p).map_err(data)?;
        let map = mean_average_precision(&per_class_ap).map_err(data)?;
        for (name, ap) in &per_class_ap {
            println!("{name:<12} {ap:.6}");
        }
        println!("{:<12} {map:.6}", "mAP");
        if let Some(out) = &a.out {
            write_json(out, &MapOnly { per_class_ap, map }).map_err(output)?;
        }
        return Ok(());
    }
    let interp = match a.interp {
        InterpArg::AllPoint => Interpolation::AllPoint,
        InterpArg::ElevenPoint => Interpolation::ElevenPoint,
    };
    let policy = MatchPolicy::new(a.iou, interp).map_err(usage)?;
    let (pred_path, truth_path) = match (&a.pred, &a.truth) {
        (Some(p), Some(t)) => (p, t),
        _ => return Err(usage("--pred and --truth are required")),
    };
    let (truths, taxonomy) = if is_dataset(truth_path) {
        let mpath = manifest_path(truth_path);
        let m = Manifest::load(&mpath).map_err(data)?;
        let root = mpath.parent().unwrap_or(Path::new("."));
        (truth_frames(root, &m).map_err(data)?, m.classes)
    } else {
        let t: FramesFile = read_json(truth_path).map_err(data)?;
        (t, a.classes.taxonomy())
    };
    let preds: FramesFile = read_json(pred_path).map_err(data)?;
    let frames = pair_frames(&preds, &truths, &taxonomy).map_err(data)?;
    let report = evaluate(&frames, &taxonomy, &policy).map_err(data)?;
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        write_json(out, &report).map_err(output)?;
    }
    if let Some(out) = &a.curves {
        let mut curves = Vec::new();
        for (class, info) in taxonomy.classes().iter().enumerate() {
            let per_frame: Vec<(Vec<Box2D>, Vec<Box2D>)> = frames
                .iter()
                .map(|f| {
                    let pick = |objs: &[crate::metrics::EvalObject]| {
                        objs.iter()
                            .map(|o| o.box2d)
                            .filter(|b| b.class_id() == class)
                            .collect::<Vec<_>>()
                    };
                    (pick(&f.detections), pick(&f.truths))
                })
                .collect();
            let refs: Vec<(&[Box2D], &[Box2D])> =
                per_frame.iter().map(|(d, t)| (d.as_slice(), t.as_slice())).collect();
            curves.push(Curve {
                class: info.name.clone(),
                points: precision_recall_curve(&refs, &policy),
            });
        }
        write_json(out, &curves).map_err(output)?;
    }
    Ok(())
}

fn convert(c: ConvertCommand) -> CliResult {
    match c {
        ConvertCommand::ToKitti { input, out } => {
            let mpath = manifest_path(&input);
            let m = Manifest::load(&mpath).map_err(data)?;
            let root = mpath.parent().unwrap_or(Path::new("."));
            for sub in ["label_2", "calib"] {
                let d = out.join(sub);
                std::fs::create_dir_all(&d).map_err(|e| usage(format!("{}: {e}", d.display())))?;
            }
            m.samples
                .par_iter()
                .map(|e| {
                    let scene = load_scene(root, e).map_err(data)?;
                    let (labels, calib) = convert_scene_to_kitti(&scene, &m.classes).map_err(data)?;
                    write_atomic(&out.join("label_2").join(format!("{}.txt", e.id)), labels.as_bytes())
                        .map_err(output)?;
                    write_atomic(&out.join("calib").join(format!("{}.txt", e.id)), calib.as_bytes())
                        .map_err(output)
                })
                .collect::<CliResult<Vec<()>>>()?;
            println!("wrote {} frames to {}", m.samples.len(), out.display());
            Ok(())
        }
        ConvertCommand::FromKitti { labels, out, classes } => {
            let taxonomy = classes.taxonomy();
            let mut files: Vec<PathBuf> = std::fs::read_dir(&labels)
                .map_err(|e| data(format!("{}: {e}", labels.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                .collect();
            files.sort();
            let mut skipped = 0usize;
            let mut frames = Vec::with_capacity(files.len());
            for path in &files {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| data(format!("{}: {e}", path.display())))?;
                let records =
                    parse_kitti_labels(&text).map_err(|e| data(format!("{}: {e}", path.display())))?;
                let mut objects = Vec::new();
                for r in &records {
                    if taxonomy.id_of(&r.kind).is_none() {
                        skipped += 1;
                        continue;
                    }
                    let o = KittiObject::from_record(r, &taxonomy)
                        .map_err(|e| data(format!("{}: {e}", path.display())))?;
                    objects.push(ObjectRecord {
                        class: r.kind.clone(),
                        score: o.box2d.score(),
                        box2d: o.box2d,
                        box3d: Some(o.box3d),
                    });
                }
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                frames.push(FrameRecord {
                    id,
                    category: None,
                    objects,
                });
            }
            if skipped > 0 {
                eprintln!("skipped {skipped} objects of classes outside the class list");
            }
            write_json(&out, &FramesFile { frames }).map_err(output)
        }
    }
}

fn pool_cmd(a: PoolArgs) -> CliResult {
    let map = fmap::read_file(&a.input).map_err(data)?;
    let pooled = match a.op {
        PoolOp::Center => center_pool_all(&map),
        PoolOp::TopLeft => cascade_corner_pool_all(&map, Corner::TopLeft),
        PoolOp::BottomRight => cascade_corner_pool_all(&map, Corner::BottomRight),
    }
    .map_err(data)?;
    write_atomic(&a.out, &fmap::encode(&pooled)).map_err(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parser_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flag_errors_exit_2() {
        assert_eq!(run(["det3d", "decode", "--input", "x", "--score-threshold", "1.1"]), EXIT_USAGE);
        assert_eq!(run(["det3d", "synth", "--category", "rain"]), EXIT_USAGE);
        assert_eq!(run(["det3d", "--help"]), EXIT_OK);
    }
}
