//! `did-geom` command line: deterministic, file-based dataflow over the
//! pipeline. Every run writes a manifest next to its outputs; reruns with
//! identical inputs produce byte-identical data files.

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::augment::{
    horizontal_flip, make_crop_scale, transform_object, FrameRecord, ObjectRecord, TransformMeta,
    DEFAULT_MIN_VISIBLE,
};
use crate::depth_labels::{build_depth_grid, build_sparse_depth, complete_depth};
use crate::eval::{evaluate, EvalConfig, Metric};
use crate::fusion::{
    aggregate_depth, final_score, instance_confidence, laplace_nll, laplace_nll_grad, smooth_l1,
    smooth_l1_grad, DepthBelief, FusionRecord, InstancePatch, U_MIN,
};
use crate::geometry::{project_point, Box3D};
use crate::kitti::{
    parse_calibration, parse_extrinsics, parse_label_line, read_point_cloud, serialize_label,
    write_calibration, write_point_cloud, ObjectLabel, PointCloud,
};
use crate::synth::{generate_scene, SceneConfig};

#[derive(Debug)]
enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

fn io_err<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "did-geom", version, about = "Decoupled instance depth pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic KITTI-format frames (calib, labels, velodyne).
    Synth(SynthArgs),
    /// Build per-object visual/attribute depth grids from a dataset.
    GenLabels(GenLabelsArgs),
    /// Apply affine augmentation to frame bundles.
    Augment(AugmentArgs),
    /// Fuse depth grids into per-object instance depth and confidence.
    Fuse(FuseArgs),
    /// Evaluate detections against ground truth (AP|R40, BEV and 3D).
    Eval(EvalArgs),
    /// Check analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    objects: usize,
    #[arg(long, default_value_t = 1)]
    frames: usize,
    /// Use the small-image configuration.
    #[arg(long, default_value_t = false)]
    compact: bool,
    #[arg(long, default_value_t = 400.0)]
    density: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GenLabelsArgs {
    /// Dataset directory produced by `synth` (calib/, label_2/, velodyne/).
    #[arg(long)]
    data: PathBuf,
    /// Grid size as MxN, each in [1, 32].
    #[arg(long, default_value = "7x7")]
    grid: String,
    /// Completion cutoff radius in pixels.
    #[arg(long, default_value_t = 50.0)]
    rmax: f64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale range as lo,hi.
    #[arg(long, default_value = "0.6,1.4")]
    scale: String,
    /// Center shift as a fraction of the image extent.
    #[arg(long, default_value_t = 0.1)]
    shift: f64,
    /// Also mirror every frame horizontally.
    #[arg(long, default_value_t = false)]
    flip: bool,
}

#[derive(Args, Debug, Serialize)]
struct FuseArgs {
    /// Directory of frame bundles from `gen-labels` or `augment`.
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON file {"u_vis": .., "u_att": ..} with uniform Laplace scales.
    #[arg(long)]
    uncertainty: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    uvis: f64,
    #[arg(long, default_value_t = 0.1)]
    uatt: f64,
    /// 2D detection confidence applied to every object.
    #[arg(long, default_value_t = 1.0)]
    p2d: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Directory of ground-truth KITTI label files.
    #[arg(long)]
    gt: PathBuf,
    /// Directory of detection files (16-field lines).
    #[arg(long)]
    det: PathBuf,
    /// IoU criterion for every category; per-category defaults otherwise.
    #[arg(long)]
    iou: Option<f64>,
    /// Comma-separated metrics: bev,3d.
    #[arg(long, default_value = "bev,3d")]
    metric: String,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    config: serde_json::Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: Option<u64>,
    version: &'a str,
    duration_ms: u128,
}

fn write_manifest(
    dir: &Path,
    subcommand: &str,
    config: serde_json::Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: Option<u64>,
    started: Instant,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        subcommand,
        config,
        inputs,
        outputs,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        duration_ms: started.elapsed().as_millis(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("record serializes");
    write_text(path, &(text + "\n"))
}

fn sorted_stems(dir: &Path, ext: &str) -> Result<Vec<String>, CliError> {
    let mut stems = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

#[derive(Serialize, serde::Deserialize)]
struct DatasetMeta {
    width: u32,
    height: u32,
    frames: Vec<String>,
}

fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    let started = Instant::now();
    ensure_dir(&args.out)?;
    for sub in ["calib", "label_2", "velodyne"] {
        ensure_dir(&args.out.join(sub))?;
    }
    let mut frames = Vec::new();
    let mut meta_dims = (0u32, 0u32);
    for i in 0..args.frames {
        let mut cfg = if args.compact {
            SceneConfig::compact(args.seed + i as u64, args.objects)
        } else {
            SceneConfig {
                seed: args.seed + i as u64,
                num_objects: args.objects,
                ..SceneConfig::default()
            }
        };
        cfg.point_density = args.density;
        let scene =
            generate_scene(&cfg).map_err(|e| CliError::Validation(e.to_string()))?;
        let frame_id = format!("{:06}", i);
        write_text(
            &args.out.join("calib").join(format!("{frame_id}.txt")),
            &write_calibration(&scene.calib),
        )?;
        let label_lines: Vec<String> = scene.labels.iter().map(serialize_label).collect();
        write_text(
            &args.out.join("label_2").join(format!("{frame_id}.txt")),
            &(label_lines.join("\n") + if label_lines.is_empty() { "" } else { "\n" }),
        )?;
        fs::write(
            args.out.join("velodyne").join(format!("{frame_id}.bin")),
            write_point_cloud(&scene.cloud),
        )
        .map_err(io_err(&args.out))?;
        meta_dims = (scene.width, scene.height);
        frames.push(frame_id);
    }
    let meta = DatasetMeta {
        width: meta_dims.0,
        height: meta_dims.1,
        frames: frames.clone(),
    };
    write_json(&args.out.join("meta.json"), &meta)?;
    write_manifest(
        &args.out,
        "synth",
        serde_json::to_value(args).unwrap(),
        vec![],
        frames,
        Some(args.seed),
        started,
    )
}

fn parse_grid(spec: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = spec.split('x').collect();
    let err = || CliError::Validation(format!("bad --grid `{spec}`, expected MxN with M,N in [1,32]"));
    if parts.len() != 2 {
        return Err(err());
    }
    let m: usize = parts[0].parse().map_err(|_| err())?;
    let n: usize = parts[1].parse().map_err(|_| err())?;
    if !(1..=32).contains(&m) || !(1..=32).contains(&n) {
        return Err(err());
    }
    Ok((m, n))
}

fn load_frame(
    data: &Path,
    frame_id: &str,
    width: u32,
    height: u32,
    m: usize,
    n: usize,
    r_max: f64,
) -> Result<FrameRecord, CliError> {
    let calib_text = read_text(&data.join("calib").join(format!("{frame_id}.txt")))?;
    let calib = parse_calibration(&calib_text).map_err(|e| CliError::Validation(e.to_string()))?;
    let label_text = read_text(&data.join("label_2").join(format!("{frame_id}.txt")))?;
    let labels: Vec<ObjectLabel> = label_text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            parse_label_line(l)
                .map_err(|e| CliError::Validation(format!("{frame_id}: {e} in `{l}`")))
        })
        .collect::<Result<_, _>>()?;
    let bin_path = data.join("velodyne").join(format!("{frame_id}.bin"));
    let bytes = fs::read(&bin_path).map_err(io_err(&bin_path))?;
    let mut cloud = read_point_cloud(&bytes).map_err(|e| CliError::Validation(e.to_string()))?;
    // real KITTI clouds carry velodyne-frame points; synthetic ones are
    // already in the camera frame and their calib has no extrinsics
    if let Ok(ext) = parse_extrinsics(&calib_text) {
        cloud = PointCloud {
            points: cloud
                .points
                .iter()
                .map(|p| {
                    let c = ext.velo_to_camera([p[0] as f64, p[1] as f64, p[2] as f64]);
                    [c[0] as f32, c[1] as f32, c[2] as f32, p[3]]
                })
                .collect(),
        };
    }
    let sparse = build_sparse_depth(&cloud, &calib, width, height);
    let dense = complete_depth(&sparse, r_max);
    let mut objects = Vec::new();
    for label in labels {
        let b = Box3D::from_label(&label);
        let center = b.center();
        let (u, v, _) =
            project_point(&calib, center).map_err(|e| CliError::Validation(e.to_string()))?;
        let grid = build_depth_grid(&dense, label.box2d, center.z, m, n)
            .map_err(|e| CliError::Validation(format!("{frame_id}: {e}")))?;
        objects.push(ObjectRecord {
            label,
            grid,
            center_uv: [u, v],
        });
    }
    Ok(FrameRecord {
        frame_id: frame_id.to_string(),
        width,
        height,
        objects,
        transform: None,
    })
}

fn run_gen_labels(args: &GenLabelsArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let (m, n) = parse_grid(&args.grid)?;
    let meta_path = args.data.join("meta.json");
    let meta: DatasetMeta = serde_json::from_str(&read_text(&meta_path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", meta_path.display())))?;
    ensure_dir(&args.out)?;
    let results: Vec<Result<FrameRecord, CliError>> = if args.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        pool.install(|| {
            meta.frames
                .par_iter()
                .map(|id| load_frame(&args.data, id, meta.width, meta.height, m, n, args.rmax))
                .collect()
        })
    } else {
        meta.frames
            .iter()
            .map(|id| load_frame(&args.data, id, meta.width, meta.height, m, n, args.rmax))
            .collect()
    };
    let mut outputs = Vec::new();
    for result in results {
        let frame = result?;
        let path = args.out.join(format!("{}.json", frame.frame_id));
        write_json(&path, &frame)?;
        outputs.push(frame.frame_id.clone());
    }
    write_manifest(
        &args.out,
        "gen-labels",
        serde_json::to_value(args).unwrap(),
        vec![args.data.display().to_string()],
        outputs,
        None,
        started,
    )
}

fn run_augment(args: &AugmentArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let scale_parts: Vec<&str> = args.scale.split(',').collect();
    let scale_err = || CliError::Validation(format!("bad --scale `{}`, expected lo,hi", args.scale));
    if scale_parts.len() != 2 {
        return Err(scale_err());
    }
    let lo: f64 = scale_parts[0].parse().map_err(|_| scale_err())?;
    let hi: f64 = scale_parts[1].parse().map_err(|_| scale_err())?;
    ensure_dir(&args.out)?;
    let stems = sorted_stems(&args.input, "json")?;
    let mut outputs = Vec::new();
    for (i, stem) in stems.iter().filter(|s| *s != "manifest").enumerate() {
        let path = args.input.join(format!("{stem}.json"));
        let frame: FrameRecord = serde_json::from_str(&read_text(&path)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let t = make_crop_scale(
            args.seed.wrapping_add(i as u64),
            frame.width,
            frame.height,
            (lo, hi),
            args.shift,
        )
        .map_err(|e| CliError::Validation(e.to_string()))?;
        let mut objects = Vec::new();
        for obj in &frame.objects {
            match transform_object(obj, &t, frame.width, frame.height, DEFAULT_MIN_VISIBLE) {
                Ok(o) => objects.push(o),
                Err(crate::augment::AugmentError::ObjectCulled(..)) => {
                    log::info!("{}: culled one object", frame.frame_id);
                }
                Err(e) => return Err(CliError::Validation(e.to_string())),
            }
        }
        let mut out_frame = FrameRecord {
            frame_id: frame.frame_id.clone(),
            width: frame.width,
            height: frame.height,
            objects,
            transform: Some(TransformMeta::from(&t)),
        };
        if args.flip {
            out_frame =
                horizontal_flip(&out_frame).map_err(|e| CliError::Validation(e.to_string()))?;
        }
        let out_path = args.out.join(format!("{stem}.json"));
        write_json(&out_path, &out_frame)?;
        outputs.push(stem.clone());
    }
    write_manifest(
        &args.out,
        "augment",
        serde_json::to_value(args).unwrap(),
        vec![args.input.display().to_string()],
        outputs,
        Some(args.seed),
        started,
    )
}

#[derive(serde::Deserialize)]
struct UncertaintySpec {
    u_vis: f64,
    u_att: f64,
}

fn run_fuse(args: &FuseArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let (u_vis, u_att) = match &args.uncertainty {
        Some(path) => {
            let spec: UncertaintySpec = serde_json::from_str(&read_text(path)?)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            (spec.u_vis, spec.u_att)
        }
        None => (args.uvis, args.uatt),
    };
    if u_vis <= 0.0 || u_att <= 0.0 {
        return Err(CliError::Validation(format!(
            "uncertainty scales must be positive, got ({u_vis}, {u_att})"
        )));
    }
    ensure_dir(&args.out)?;
    let stems = sorted_stems(&args.input, "json")?;
    let mut outputs = Vec::new();
    for stem in stems.iter().filter(|s| *s != "manifest") {
        let path = args.input.join(format!("{stem}.json"));
        let frame: FrameRecord = serde_json::from_str(&read_text(&path)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (idx, obj) in frame.objects.iter().enumerate() {
            let cells = obj.grid.visual.len();
            let patch = InstancePatch {
                m: obj.grid.m,
                n: obj.grid.n,
                vis: (0..cells)
                    .map(|i| DepthBelief {
                        d: obj.grid.visual[i],
                        u: u_vis.max(U_MIN),
                    })
                    .collect(),
                att: (0..cells)
                    .map(|i| DepthBelief {
                        d: obj.grid.attribute[i],
                        u: u_att.max(U_MIN),
                    })
                    .collect(),
                valid: obj.grid.valid.clone(),
            };
            let d_ins =
                aggregate_depth(&patch).map_err(|e| CliError::Validation(e.to_string()))?;
            let p_ins =
                instance_confidence(&patch).map_err(|e| CliError::Validation(e.to_string()))?;
            let beliefs = patch
                .instance_beliefs()
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let (mut u_sum, mut count) = (0.0, 0usize);
            for (b, &ok) in beliefs.iter().zip(&patch.valid) {
                if ok {
                    u_sum += b.u;
                    count += 1;
                }
            }
            let score = final_score(args.p2d, p_ins)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            records.push(FusionRecord {
                frame_id: frame.frame_id.clone(),
                object_index: idx,
                d_ins,
                u_summary: u_sum / count as f64,
                p_ins,
                score,
            });
        }
        let out_path = args.out.join(format!("{stem}.json"));
        write_json(&out_path, &records)?;
        outputs.push(stem.clone());
    }
    write_manifest(
        &args.out,
        "fuse",
        serde_json::to_value(args).unwrap(),
        vec![args.input.display().to_string()],
        outputs,
        None,
        started,
    )
}

fn load_label_dir(dir: &Path) -> Result<BTreeMap<String, Vec<ObjectLabel>>, CliError> {
    // accept a flat directory of .txt files or a label_2/ subdirectory
    let dir = if dir.join("label_2").is_dir() {
        dir.join("label_2")
    } else {
        dir.to_path_buf()
    };
    let mut frames = BTreeMap::new();
    for stem in sorted_stems(&dir, "txt")? {
        let path = dir.join(format!("{stem}.txt"));
        let labels = read_text(&path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                parse_label_line(l)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        frames.insert(stem, labels);
    }
    Ok(frames)
}

fn run_eval(args: &EvalArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let gt = load_label_dir(&args.gt)?;
    let det = load_label_dir(&args.det)?;
    let mut config = EvalConfig::default();
    if let Some(iou) = args.iou {
        if !(0.0..=1.0).contains(&iou) || iou == 0.0 {
            return Err(CliError::Validation(format!("--iou must be in (0, 1], got {iou}")));
        }
        config.iou_per_category.clear();
        config.default_iou = iou;
    }
    config.metrics = args
        .metric
        .split(',')
        .map(|m| match m.trim() {
            "bev" => Ok(Metric::Bev),
            "3d" => Ok(Metric::ThreeD),
            other => Err(CliError::Validation(format!("unknown metric `{other}`"))),
        })
        .collect::<Result<_, _>>()?;
    let report = evaluate(&gt, &det, &config).map_err(|e| CliError::Validation(e.to_string()))?;
    print!("{}", report.to_table());
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        if let Some(dir) = out.parent().filter(|d| d.as_os_str().len() > 0) {
            write_manifest(
                dir,
                "eval",
                serde_json::to_value(args).unwrap(),
                vec![args.gt.display().to_string(), args.det.display().to_string()],
                vec![out.display().to_string()],
                None,
                started,
            )?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GradcheckReport {
    samples: usize,
    tol: f64,
    max_rel_err_laplace: f64,
    max_rel_err_smooth_l1: f64,
    passed: bool,
}

fn run_gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    use rand::{Rng, SeedableRng};
    let started = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let h = 1e-6;
    let mut max_laplace = 0.0f64;
    let mut count = 0usize;
    while count < args.samples {
        let d: f64 = rng.gen_range(-50.0..50.0);
        let d_star: f64 = rng.gen_range(-50.0..50.0);
        let u: f64 = rng.gen_range(0.05..5.0);
        if (d - d_star).abs() < 1e-3 {
            continue;
        }
        count += 1;
        let (gd, gu) = laplace_nll_grad(d, u, d_star).unwrap();
        let fd_d =
            (laplace_nll(d + h, u, d_star).unwrap() - laplace_nll(d - h, u, d_star).unwrap())
                / (2.0 * h);
        let fd_u =
            (laplace_nll(d, u + h, d_star).unwrap() - laplace_nll(d, u - h, d_star).unwrap())
                / (2.0 * h);
        max_laplace = max_laplace
            .max((gd - fd_d).abs() / fd_d.abs().max(1.0))
            .max((gu - fd_u).abs() / fd_u.abs().max(1.0));
    }
    let mut max_smooth = 0.0f64;
    count = 0;
    while count < args.samples {
        let x: f64 = rng.gen_range(-5.0..5.0);
        let beta = 1.0;
        if (x.abs() - beta).abs() < 1e-3 {
            continue;
        }
        count += 1;
        let g = smooth_l1_grad(x, beta);
        let fd = (smooth_l1(x + h, beta) - smooth_l1(x - h, beta)) / (2.0 * h);
        max_smooth = max_smooth.max((g - fd).abs() / fd.abs().max(1.0));
    }
    let passed = max_laplace <= args.tol && max_smooth <= args.tol;
    let report = GradcheckReport {
        samples: args.samples,
        tol: args.tol,
        max_rel_err_laplace: max_laplace,
        max_rel_err_smooth_l1: max_smooth,
        passed,
    };
    println!(
        "gradcheck: laplace max rel err {max_laplace:.3e}, smooth-l1 max rel err {max_smooth:.3e} ({})",
        if passed { "pass" } else { "FAIL" }
    );
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        if let Some(dir) = out.parent().filter(|d| d.as_os_str().len() > 0) {
            write_manifest(
                dir,
                "gradcheck",
                serde_json::to_value(args).unwrap(),
                vec![],
                vec![out.display().to_string()],
                Some(args.seed),
                started,
            )?;
        }
    }
    if passed {
        Ok(())
    } else {
        Err(CliError::Validation("gradient check failed".into()))
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("DID_GEOM_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

/// Parse and dispatch; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version print and exit 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Synth(args) => run_synth(args),
        Command::GenLabels(args) => run_gen_labels(args),
        Command::Augment(args) => run_augment(args),
        Command::Fuse(args) => run_fuse(args),
        Command::Eval(args) => run_eval(args),
        Command::Gradcheck(args) => run_gradcheck(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}
