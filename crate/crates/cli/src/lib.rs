//! Command implementations behind the `road-stereo` binary.
//!
//! Subcommands: `transform`, `match`, `reconstruct`, `synth`, `eval`,
//! `bench`. Exit codes: 0 success, 2 usage/configuration error, 3 data or
//! degenerate-geometry error, 4 internal error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use road_stereo::image::Rect;
use road_stereo::kv::KvFile;
use road_stereo::pipeline::{bench_csv, bench_sweep, run_match};
use road_stereo::pnm::{read_pfm, read_pgm, write_pfm, write_pgm};
use road_stereo::recon::{
    evaluate_disparity, fit_plane, point_plane_distances, triangulate, DistanceStats, PointCloud,
};
use road_stereo::synth::{render_pair, SceneSpec};
use road_stereo::transform::{
    estimate_roll, fit_road_model, match_sparse, near_field_region, read_correspondences,
    CameraRig, RoadModel,
};
use road_stereo::{DisparityMap, Error, GrayImage, Mask};

mod config;
pub use config::{Config, Overrides};

const EVAL_THRESHOLDS: [f64; 3] = [0.25, 0.5, 1.0];

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, unreadable input, or invalid configuration.
    Usage(String),
    /// The data cannot support the requested computation.
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Format(_) | Error::Parameter(_) | Error::Dimension(_) | Error::Io(_) => {
                CliError::Usage(e.to_string())
            }
            Error::InsufficientData(_)
            | Error::NoConsensus { .. }
            | Error::Degenerate(_)
            | Error::InvalidModel(_)
            | Error::Scene(_) => CliError::Data(e.to_string()),
        }
    }
}

/// Reconstructs 3-D road surfaces from rectified stereo pairs.
#[derive(Parser, Debug)]
#[command(name = "road-stereo", version, about)]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads; 0 uses all hardware threads. Results are identical
    /// for any thread count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,

    /// Correlation block half window.
    #[arg(long, global = true)]
    pub rho_block: Option<usize>,

    /// Aggregation half window.
    #[arg(long, global = true)]
    pub rho_agg: Option<usize>,

    /// Spatial falloff of the aggregation weights, pixels.
    #[arg(long, global = true)]
    pub gamma_d: Option<f64>,

    /// Intensity falloff of the aggregation weights, levels.
    #[arg(long, global = true)]
    pub gamma_r: Option<f64>,

    /// Disparity search range (default follows 2 * delta margin).
    #[arg(long, global = true)]
    pub d_max: Option<usize>,

    /// Headroom below the road model when choosing delta, pixels.
    #[arg(long, global = true)]
    pub delta_margin: Option<f64>,

    /// Left-right consistency tolerance, pixels.
    #[arg(long, global = true)]
    pub lr_tolerance: Option<f64>,

    /// Smallest disparity triangulated into the cloud.
    #[arg(long, global = true)]
    pub d_min: Option<f64>,

    /// RANSAC random seed.
    #[arg(long, global = true)]
    pub ransac_seed: Option<u64>,

    /// Linear scaling of 8-bit disparity visualisations.
    #[arg(long, global = true)]
    pub vis_scale: Option<f64>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the road disparity model and warp the target view.
    Transform(TransformArgs),
    /// Run the full matching pipeline on a rectified pair.
    Match(MatchArgs),
    /// Triangulate a disparity map and measure against a fitted plane.
    Reconstruct(ReconstructArgs),
    /// Render a synthetic scene with exact ground truth.
    Synth(SynthArgs),
    /// Compare a disparity map against ground truth.
    Eval(EvalArgs),
    /// Sweep block/aggregation radii and report runtimes.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    /// Reference (left) image, binary PGM.
    pub left: PathBuf,
    /// Target (right) image, binary PGM.
    pub right: PathBuf,
    /// Correspondence CSV (`ul,vl,ur,vr` per line); when omitted the
    /// built-in sparse matcher provides the correspondences.
    #[arg(long, value_name = "CSV")]
    pub correspondences: Option<PathBuf>,
    /// Disparity map (PFM) whose near field yields a roll estimate.
    #[arg(long, value_name = "PFM")]
    pub roll_patch: Option<PathBuf>,
    /// Where to write the fitted model.
    #[arg(long, value_name = "FILE", default_value = "model.txt")]
    pub out_model: PathBuf,
    /// Optionally write the warped target image.
    #[arg(long, value_name = "PGM")]
    pub out_warped: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    /// Road model file from `transform`.
    #[arg(long, value_name = "FILE", conflicts_with = "identity_model")]
    pub model: Option<PathBuf>,
    /// Match without a perspective transformation.
    #[arg(long)]
    pub identity_model: bool,
    /// Output disparity map (PFM).
    #[arg(long, value_name = "PFM", default_value = "disparity.pfm")]
    pub out: PathBuf,
    /// Optional 8-bit visualisation of the disparity map.
    #[arg(long, value_name = "PGM")]
    pub out_vis: Option<PathBuf>,
    /// Dump the raw cost volumes to PREFIX.ref.cvol / PREFIX.tar.cvol.
    #[arg(long, value_name = "PREFIX")]
    pub dump_costs: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Disparity map (PFM), reference-view coordinates.
    pub disparity: PathBuf,
    /// Rig parameter file (`f`, `u0`, `v0`, `tc`, ...).
    #[arg(long, value_name = "FILE")]
    pub rig: PathBuf,
    /// Output point cloud (ASCII PLY).
    #[arg(long, value_name = "PLY", default_value = "cloud.ply")]
    pub out: PathBuf,
    /// Pixel region `u0,v0,w,h`: the plane is fitted outside it and
    /// distance statistics are reported for the points inside.
    #[arg(long, value_name = "U0,V0,W,H")]
    pub roi: Option<String>,
    /// Fit the plane to the four corner points of the region instead of
    /// all points outside it.
    #[arg(long, requires = "roi")]
    pub corners: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scene description (`key = value`, repeated `box` entries allowed).
    pub scene: PathBuf,
    /// Output prefix; writes PREFIX_left.pgm, PREFIX_right.pgm,
    /// PREFIX_disp.pfm and PREFIX_occlusion.pgm.
    #[arg(long, value_name = "PREFIX")]
    pub out_prefix: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Estimated disparity map (PFM).
    pub estimate: PathBuf,
    /// Ground-truth disparity map (PFM).
    pub ground_truth: PathBuf,
    /// Occlusion mask (PGM, non-zero = occluded) excluded from scoring.
    #[arg(long, value_name = "PGM")]
    pub occlusion: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    #[arg(long, value_name = "FILE", conflicts_with = "identity_model")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub identity_model: bool,
    /// Block half windows to sweep.
    #[arg(long, value_name = "LIST", default_value = "1,2,3,4,5")]
    pub rho_blocks: String,
    /// Aggregation half windows to sweep.
    #[arg(long, value_name = "LIST", default_value = "0,1,2,3,4,5")]
    pub rho_aggs: String,
    /// Repetitions per configuration (the minimum is reported).
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// CSV output path; stdout when omitted.
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        rho_block: cli.rho_block,
        rho_agg: cli.rho_agg,
        gamma_d: cli.gamma_d,
        gamma_r: cli.gamma_r,
        d_max: cli.d_max,
        delta_margin: cli.delta_margin,
        lr_tolerance: cli.lr_tolerance,
        d_min: cli.d_min,
        ransac_seed: cli.ransac_seed,
        vis_scale: cli.vis_scale,
    };
    let config_text = match &cli.config {
        Some(path) => Some(read_text(path)?),
        None => None,
    };
    let mut cfg = Config::resolve(config_text.as_deref(), &overrides)?;
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if cfg.threads > 0 {
        // A later global-pool initialisation is fine to lose; first wins.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    if cli.print_config {
        print!("{}", cfg.to_kv_text());
        return Ok(());
    }
    match cli.command {
        Some(Command::Transform(args)) => cmd_transform(&cfg, &args),
        Some(Command::Match(args)) => cmd_match(&cfg, &args),
        Some(Command::Reconstruct(args)) => cmd_reconstruct(&cfg, &args),
        Some(Command::Synth(args)) => cmd_synth(&args),
        Some(Command::Eval(args)) => cmd_eval(&args),
        Some(Command::Bench(args)) => cmd_bench(&cfg, &args),
        None => Err(CliError::Usage(
            "no subcommand given; see `road-stereo --help`".into(),
        )),
    }
}

fn cmd_transform(cfg: &Config, args: &TransformArgs) -> Result<(), CliError> {
    let left = load_pgm(&args.left)?;
    let right = load_pgm(&args.right)?;
    let matches = match &args.correspondences {
        Some(path) => read_correspondences(&read_text(path)?)?,
        None => match_sparse(&left, &right, &cfg.matcher_params())?,
    };
    let model = fit_road_model(
        &matches,
        &cfg.ransac_params(),
        left.height(),
        cfg.d_margin,
    )?;
    let roll = match &args.roll_patch {
        Some(path) => {
            let patch = load_pfm(path)?;
            Some(estimate_roll(
                &patch,
                near_field_region(patch.width(), patch.height()),
            )?)
        }
        None => None,
    };
    let warped = match &args.out_warped {
        Some(_) => Some(road_stereo::transform::warp_target(&right, &model)?),
        None => None,
    };

    println!("alpha0 = {:.9}", model.alpha0);
    println!("alpha1 = {:.9}", model.alpha1);
    println!("delta = {}", model.delta);
    println!("inliers = {} of {}", model.inlier_count, matches.len());
    println!("residual_rms = {:.6}", model.residual_rms);
    if let Some(roll) = roll {
        println!("roll_rad = {roll:.9}");
    }

    write_bytes(&args.out_model, model.to_kv_text().as_bytes())?;
    if let (Some(path), Some((image, _))) = (&args.out_warped, &warped) {
        write_bytes(path, &write_pgm(image))?;
    }
    Ok(())
}

fn cmd_match(cfg: &Config, args: &MatchArgs) -> Result<(), CliError> {
    let left = load_pgm(&args.left)?;
    let right = load_pgm(&args.right)?;
    let model = load_model(args.model.as_deref(), args.identity_model)?;
    let mut params = cfg.match_params();
    params.keep_cost_volumes = args.dump_costs.is_some();

    let out = run_match(&left, &right, &model, &params)?;
    for (name, duration) in out.timings.stages() {
        println!("stage {name:<12} {:>9.3} ms", duration.as_secs_f64() * 1e3);
    }
    println!(
        "stage {:<12} {:>9.3} ms",
        "total",
        out.timings.total.as_secs_f64() * 1e3
    );
    println!("mde_per_s = {:.4}", out.mde_per_s);
    println!(
        "valid_pixels = {} of {}",
        out.disparity.valid_count(),
        left.width() * left.height()
    );

    write_bytes(&args.out, &write_pfm(&out.disparity))?;
    if let Some(path) = &args.out_vis {
        write_bytes(path, &write_pgm(&out.disparity.to_gray(cfg.vis_scale)))?;
    }
    if let Some(prefix) = &args.dump_costs {
        let (ref_vol, tar_vol) = (
            out.raw_reference.expect("kept by params"),
            out.raw_target.expect("kept by params"),
        );
        write_bytes(&suffixed(prefix, ".ref.cvol"), &ref_vol.write_dump())?;
        write_bytes(&suffixed(prefix, ".tar.cvol"), &tar_vol.write_dump())?;
    }
    Ok(())
}

fn cmd_reconstruct(cfg: &Config, args: &ReconstructArgs) -> Result<(), CliError> {
    let map = load_pfm(&args.disparity)?;
    let rig = CameraRig::from_kv(&KvFile::parse(&read_text(&args.rig)?)?)?;
    let cloud = triangulate(&map, &rig, cfg.d_min)?;
    if cloud.is_empty() {
        return Err(CliError::Data(format!(
            "no valid disparities >= {} in {}",
            cfg.d_min,
            args.disparity.display()
        )));
    }
    println!("points = {}", cloud.len());

    let report = match &args.roi {
        Some(spec) => {
            let roi = parse_roi(spec)?;
            let inside = cloud.select(roi);
            if inside.is_empty() {
                return Err(CliError::Data(format!(
                    "no valid points inside roi {spec}"
                )));
            }
            let plane = if args.corners {
                fit_plane(&corner_points(&cloud, roi)?)?
            } else {
                let outside = cloud.select_outside(roi);
                fit_plane(&outside)?
            };
            let stats = DistanceStats::from_distances(&point_plane_distances(&inside, &plane))?;
            Some((plane, stats, inside.len()))
        }
        None => None,
    };
    if let Some((plane, stats, n)) = &report {
        println!(
            "plane = {:.9} {:.9} {:.9} {:.9}",
            plane.n0, plane.n1, plane.n2, plane.n3
        );
        println!("roi_points = {n}");
        println!("dist_min_m = {:.6}", stats.min);
        println!("dist_max_m = {:.6}", stats.max);
        println!("dist_mean_m = {:.6}", stats.mean);
        println!("dist_rms_m = {:.6}", stats.rms);
    }

    write_bytes(&args.out, cloud.to_ply().as_bytes())?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = SceneSpec::from_kv(&KvFile::parse(&read_text(&args.scene)?)?)?;
    let scene = render_pair(&spec)?;
    let (a0, a1) = road_stereo::transform::alpha_from_rig(&spec.rig)?;
    println!("width = {}", spec.width);
    println!("height = {}", spec.height);
    println!("alpha0 = {a0:.9}");
    println!("alpha1 = {a1:.9}");
    println!(
        "occluded_pixels = {} of {}",
        scene.occlusion.count_set(),
        spec.width * spec.height
    );
    write_bytes(&suffixed(&args.out_prefix, "_left.pgm"), &write_pgm(&scene.left))?;
    write_bytes(&suffixed(&args.out_prefix, "_right.pgm"), &write_pgm(&scene.right))?;
    write_bytes(
        &suffixed(&args.out_prefix, "_disp.pfm"),
        &write_pfm(&scene.gt_disparity),
    )?;
    write_bytes(
        &suffixed(&args.out_prefix, "_occlusion.pgm"),
        &write_pgm(&scene.occlusion.to_gray()),
    )?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let estimate = load_pfm(&args.estimate)?;
    let ground_truth = load_pfm(&args.ground_truth)?;
    let occlusion = match &args.occlusion {
        Some(path) => Some(Mask::from_gray(&load_pgm(path)?)),
        None => None,
    };
    let stats = evaluate_disparity(
        &estimate,
        &ground_truth,
        occlusion.as_ref(),
        &EVAL_THRESHOLDS,
    )?;
    println!("gt_pixels = {}", stats.gt_pixels);
    println!("compared = {}", stats.compared);
    println!("density = {:.6}", stats.density);
    println!("rms_px = {:.6}", stats.rms);
    println!("mae_px = {:.6}", stats.mae);
    for (threshold, rate) in &stats.bad_rates {
        println!("bad_{threshold} = {rate:.6}");
    }
    Ok(())
}

fn cmd_bench(cfg: &Config, args: &BenchArgs) -> Result<(), CliError> {
    let left = load_pgm(&args.left)?;
    let right = load_pgm(&args.right)?;
    let model = load_model(args.model.as_deref(), args.identity_model)?;
    let rho_blocks = parse_list(&args.rho_blocks, "rho-blocks")?;
    let rho_aggs = parse_list(&args.rho_aggs, "rho-aggs")?;
    let rows = bench_sweep(
        &left,
        &right,
        &model,
        &cfg.match_params(),
        &rho_blocks,
        &rho_aggs,
        args.reps,
    )?;
    let csv = bench_csv(&rows);
    match &args.out {
        Some(path) => write_bytes(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn load_model(path: Option<&Path>, identity: bool) -> Result<RoadModel, CliError> {
    match (path, identity) {
        (Some(path), false) => Ok(RoadModel::from_kv(&KvFile::parse(&read_text(path)?)?)?),
        (None, true) => Ok(RoadModel::identity()),
        (None, false) => Err(CliError::Usage(
            "either --model FILE or --identity-model is required".into(),
        )),
        (Some(_), true) => unreachable!("clap conflicts_with"),
    }
}

/// Cloud points closest to the four corner pixels of the region.
fn corner_points(cloud: &PointCloud, roi: Rect) -> Result<PointCloud, CliError> {
    let corners = [
        (roi.x, roi.y),
        (roi.x + roi.width - 1, roi.y),
        (roi.x, roi.y + roi.height - 1),
        (roi.x + roi.width - 1, roi.y + roi.height - 1),
    ];
    let mut picked = Vec::with_capacity(4);
    for (cx, cy) in corners {
        let nearest = cloud
            .points
            .iter()
            .min_by_key(|p| {
                let du = p.u.abs_diff(cx);
                let dv = p.v.abs_diff(cy);
                du * du + dv * dv
            })
            .ok_or_else(|| CliError::Data("empty point cloud".into()))?;
        picked.push(*nearest);
    }
    Ok(PointCloud { points: picked })
}

fn parse_roi(spec: &str) -> Result<Rect, CliError> {
    let fields: Vec<&str> = spec.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(CliError::Usage(format!(
            "roi {spec:?}: expected `u0,v0,w,h`"
        )));
    }
    let mut values = [0usize; 4];
    for (value, field) in values.iter_mut().zip(&fields) {
        *value = field
            .parse()
            .map_err(|_| CliError::Usage(format!("roi field {field:?} is not an integer")))?;
    }
    if values[2] == 0 || values[3] == 0 {
        return Err(CliError::Usage("roi must have positive extent".into()));
    }
    Ok(Rect::new(values[0], values[1], values[2], values[3]))
}

fn parse_list(raw: &str, what: &str) -> Result<Vec<usize>, CliError> {
    let values: Result<Vec<usize>, _> = raw
        .split(',')
        .map(|f| f.trim().parse::<usize>())
        .collect();
    let values =
        values.map_err(|_| CliError::Usage(format!("--{what} {raw:?}: expected integers")))?;
    if values.is_empty() {
        return Err(CliError::Usage(format!("--{what} must not be empty")));
    }
    Ok(values)
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn load_pgm(path: &Path) -> Result<GrayImage, CliError> {
    read_pgm(&read_bytes(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_pfm(path: &Path) -> Result<DisparityMap, CliError> {
    read_pfm(&read_bytes(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
