//! End-to-end tests of the `road-stereo` binary: synthetic scene in,
//! model/disparity/cloud files out, with the documented exit codes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use road_stereo::kv::KvFile;
use road_stereo::pnm::{read_pfm, write_pfm};
use road_stereo::synth::Surface;
use road_stereo::transform::{alpha_from_rig, write_correspondences, Correspondence};
use road_stereo::DisparityMap;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_road-stereo"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed with {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_kv(out: &Output) -> HashMap<String, String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|line| {
            let (k, v) = line.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Steep half-resolution road scene with one box, fast enough for CLI tests.
fn scene_text(with_box: bool, noise: f64) -> String {
    let mut text = String::from(
        "f = 350\nu0 = 160\nv0 = 120\ntc = 0.12\ntheta = 0.63\n\
         plane_n = -1\nplane_beta = 0.729\nwidth = 320\nheight = 240\n\
         seed = 5\ntexture_scale_x = 0.12\ntexture_scale_z = 0.25\n",
    );
    text.push_str(&format!("noise_sigma = {noise}\n"));
    if with_box {
        text.push_str("box = 0.0,1.0,0.25,0.2,0.05\n");
    }
    text
}

struct SceneFiles {
    dir: tempfile::TempDir,
    left: PathBuf,
    right: PathBuf,
    disp: PathBuf,
    occlusion: PathBuf,
    gt: DisparityMap,
    alpha: (f64, f64),
}

fn render_scene(with_box: bool, noise: f64) -> SceneFiles {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = dir.path().join("scene.txt");
    std::fs::write(&scene_path, scene_text(with_box, noise)).unwrap();
    let prefix = dir.path().join("scene");
    run_ok(bin().arg("synth").arg(&scene_path).arg("--out-prefix").arg(&prefix));

    let spec = road_stereo::synth::SceneSpec::from_kv(
        &KvFile::parse(&scene_text(with_box, noise)).unwrap(),
    )
    .unwrap();
    let gt = read_pfm(&std::fs::read(dir.path().join("scene_disp.pfm")).unwrap()).unwrap();
    SceneFiles {
        left: dir.path().join("scene_left.pgm"),
        right: dir.path().join("scene_right.pgm"),
        disp: dir.path().join("scene_disp.pfm"),
        occlusion: dir.path().join("scene_occlusion.pgm"),
        alpha: alpha_from_rig(&spec.rig).unwrap(),
        gt,
        dir,
    }
}

/// Exact correspondences from the ground-truth map, written as CSV.
fn write_gt_csv(scene: &SceneFiles, path: &Path) {
    let mut matches = Vec::new();
    for v in (0..scene.gt.height()).step_by(9) {
        for u in (0..scene.gt.width()).step_by(13) {
            if scene.gt.is_valid(u, v) {
                let d = scene.gt.get(u, v);
                if (u as f64) < d {
                    continue;
                }
                matches.push(Correspondence {
                    ul: u as f64,
                    vl: v as f64,
                    ur: u as f64 - d,
                    vr: v as f64,
                });
            }
        }
    }
    std::fs::write(path, write_correspondences(&matches)).unwrap();
}

#[test]
fn print_config_lists_defaults() {
    let out = run_ok(bin().arg("--print-config"));
    let kv = stdout_kv(&out);
    assert_eq!(kv["rho_block"], "3");
    assert_eq!(kv["rho_agg"], "4");
    assert_eq!(kv["gamma_d"], "5");
    assert_eq!(kv["gamma_r"], "10");
    assert_eq!(kv["d_max"], "20");
    assert_eq!(kv["d_margin"], "10");
    assert_eq!(kv["lr_tolerance"], "0");
    assert_eq!(kv["ransac_iterations"], "200");
}

#[test]
fn missing_input_exits_2_naming_path() {
    let out = bin()
        .args(["match", "/nonexistent/left.pgm", "/nonexistent/right.pgm", "--identity-model"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/left.pgm"));
}

#[test]
fn invalid_config_exits_2_without_partial_output() {
    let scene = render_scene(false, 0.0);
    let cfg = scene.dir.path().join("bad.cfg");
    std::fs::write(&cfg, "rho_block = 0\n").unwrap();
    let out_path = scene.dir.path().join("never.pfm");
    let out = bin()
        .arg("match")
        .arg(&scene.left)
        .arg(&scene.right)
        .arg("--identity-model")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists(), "partial output written");
}

#[test]
fn transform_recovers_model_from_gt_correspondences() {
    let scene = render_scene(false, 1.0);
    let csv = scene.dir.path().join("matches.csv");
    write_gt_csv(&scene, &csv);
    let model_path = scene.dir.path().join("model.txt");
    let warped_path = scene.dir.path().join("warped.pgm");
    let out = run_ok(
        bin()
            .arg("transform")
            .arg(&scene.left)
            .arg(&scene.right)
            .arg("--correspondences")
            .arg(&csv)
            .arg("--out-model")
            .arg(&model_path)
            .arg("--out-warped")
            .arg(&warped_path),
    );
    let kv = stdout_kv(&out);
    let (a0, a1) = scene.alpha;
    // Ground truth passes through 32-bit PFM storage, which bounds the fit.
    assert!((kv["alpha0"].parse::<f64>().unwrap() - a0).abs() < 1e-4);
    assert!((kv["alpha1"].parse::<f64>().unwrap() - a1).abs() < 1e-6);
    assert!(warped_path.exists());

    let model_kv = KvFile::parse(&std::fs::read_to_string(&model_path).unwrap()).unwrap();
    let model = road_stereo::transform::RoadModel::from_kv(&model_kv).unwrap();
    assert!((model.alpha0 - a0).abs() < 1e-4);
    // delta = floor(min disparity over rows) - d_margin; here min is alpha0.
    assert_eq!(model.delta, (a0.floor() - 10.0).max(0.0));
}

#[test]
fn transform_builtin_matcher_close_to_truth() {
    let scene = render_scene(false, 1.0);
    let model_path = scene.dir.path().join("model.txt");
    let out = run_ok(
        bin()
            .arg("transform")
            .arg(&scene.left)
            .arg(&scene.right)
            .arg("--out-model")
            .arg(&model_path),
    );
    let kv = stdout_kv(&out);
    let (a0, a1) = scene.alpha;
    assert!((kv["alpha0"].parse::<f64>().unwrap() - a0).abs() < 0.5);
    assert!((kv["alpha1"].parse::<f64>().unwrap() - a1).abs() < 0.01);
}

#[test]
fn delta_margin_zero_forces_floor_of_min_shift() {
    let scene = render_scene(false, 0.0);
    let csv = scene.dir.path().join("matches.csv");
    write_gt_csv(&scene, &csv);
    let model_path = scene.dir.path().join("model.txt");
    run_ok(
        bin()
            .arg("transform")
            .arg(&scene.left)
            .arg(&scene.right)
            .arg("--correspondences")
            .arg(&csv)
            .arg("--out-model")
            .arg(&model_path)
            .arg("--delta-margin")
            .arg("0"),
    );
    let model_kv = KvFile::parse(&std::fs::read_to_string(&model_path).unwrap()).unwrap();
    let model = road_stereo::transform::RoadModel::from_kv(&model_kv).unwrap();
    assert_eq!(model.delta, scene.alpha.0.floor());
}

#[test]
fn self_match_with_identity_model_is_zero() {
    let scene = render_scene(false, 0.0);
    let disp_path = scene.dir.path().join("self.pfm");
    let out = run_ok(
        bin()
            .arg("match")
            .arg(&scene.left)
            .arg(&scene.left)
            .arg("--identity-model")
            .arg("--d-max")
            .arg("8")
            .arg("--out")
            .arg(&disp_path),
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("mde_per_s"));
    let map = read_pfm(&std::fs::read(&disp_path).unwrap()).unwrap();
    let mut valid = 0;
    for v in 0..map.height() {
        for u in 0..map.width() {
            let d = map.get(u, v);
            if !d.is_nan() {
                assert_eq!(d, 0.0);
                valid += 1;
            }
        }
    }
    assert!(valid > 60_000);
}

#[test]
fn full_pipeline_matches_ground_truth() {
    let scene = render_scene(false, 1.0);
    let csv = scene.dir.path().join("matches.csv");
    write_gt_csv(&scene, &csv);
    let model_path = scene.dir.path().join("model.txt");
    run_ok(
        bin()
            .arg("transform")
            .arg(&scene.left)
            .arg(&scene.right)
            .arg("--correspondences")
            .arg(&csv)
            .arg("--out-model")
            .arg(&model_path),
    );
    let disp_path = scene.dir.path().join("est.pfm");
    let vis_path = scene.dir.path().join("est.pgm");
    let dump_prefix = scene.dir.path().join("costs");
    run_ok(
        bin()
            .arg("match")
            .arg(&scene.left)
            .arg(&scene.right)
            .arg("--model")
            .arg(&model_path)
            .arg("--d-max")
            .arg("24")
            .arg("--out")
            .arg(&disp_path)
            .arg("--out-vis")
            .arg(&vis_path)
            .arg("--dump-costs")
            .arg(&dump_prefix),
    );
    assert!(vis_path.exists());
    // The cost dumps parse back with matching geometry.
    let dump =
        road_stereo::costs::CostVolume::read_dump(
            &std::fs::read(scene.dir.path().join("costs.ref.cvol")).unwrap(),
        )
        .unwrap();
    assert_eq!((dump.width(), dump.height(), dump.d_max()), (320, 240, 24));
    assert!(scene.dir.path().join("costs.tar.cvol").exists());

    let out = run_ok(
        bin()
            .arg("eval")
            .arg(&disp_path)
            .arg(&scene.disp)
            .arg("--occlusion")
            .arg(&scene.occlusion),
    );
    let kv = stdout_kv(&out);
    assert!(kv["rms_px"].parse::<f64>().unwrap() < 0.25);
    assert!(kv["density"].parse::<f64>().unwrap() > 0.9);
    assert!(kv.contains_key("bad_0.25"));
    assert!(kv["bad_1"].parse::<f64>().unwrap() < 0.05);
}

#[test]
fn reconstruct_reports_box_height() {
    let scene = render_scene(true, 1.0);
    let csv = scene.dir.path().join("matches.csv");
    write_gt_csv(&scene, &csv);
    let model_path = scene.dir.path().join("model.txt");
    run_ok(
        bin()
            .arg("transform")
            .arg(&scene.left)
            .arg(&scene.right)
            .arg("--correspondences")
            .arg(&csv)
            .arg("--out-model")
            .arg(&model_path),
    );
    let disp_path = scene.dir.path().join("est.pfm");
    run_ok(
        bin()
            .arg("match")
            .arg(&scene.left)
            .arg(&scene.right)
            .arg("--model")
            .arg(&model_path)
            .arg("--d-max")
            .arg("32")
            .arg("--out")
            .arg(&disp_path),
    );

    // Box-top bounding rectangle from the synthetic truth, slightly eroded.
    let spec = road_stereo::synth::SceneSpec::from_kv(
        &KvFile::parse(&scene_text(true, 1.0)).unwrap(),
    )
    .unwrap();
    let rendered = road_stereo::synth::render_pair(&spec).unwrap();
    let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0usize, usize::MAX, 0usize);
    for v in 0..240 {
        for u in 0..320 {
            if rendered.surface(u, v) == Surface::BoxTop {
                x0 = x0.min(u);
                x1 = x1.max(u);
                y0 = y0.min(v);
                y1 = y1.max(v);
            }
        }
    }
    let roi = format!("{},{},{},{}", x0 + 4, y0 + 4, x1 - x0 - 8, y1 - y0 - 8);

    let rig_path = scene.dir.path().join("rig.txt");
    std::fs::write(&rig_path, spec.rig.to_kv_text()).unwrap();
    let ply_path = scene.dir.path().join("cloud.ply");
    let out = run_ok(
        bin()
            .arg("reconstruct")
            .arg(&disp_path)
            .arg("--rig")
            .arg(&rig_path)
            .arg("--roi")
            .arg(&roi)
            .arg("--out")
            .arg(&ply_path),
    );
    let kv = stdout_kv(&out);
    let height = kv["dist_mean_m"].parse::<f64>().unwrap().abs();
    // The command fits the plane on everything outside the roi, box side
    // faces included, so a few millimetres of bias are inherent here.
    assert!(
        (height - 0.05).abs() < 0.005,
        "box height {height} m, expected 0.05 m"
    );
    let ply = std::fs::read_to_string(&ply_path).unwrap();
    assert!(ply.starts_with("ply\nformat ascii 1.0\n"));

    // Four-corner protocol mode: a region that contains the box with road
    // around it, so its corner points sit on the road. The corner plane
    // must agree with the least-squares plane.
    let plane: Vec<f64> = kv["plane"]
        .split_whitespace()
        .map(|f| f.parse().unwrap())
        .collect();
    let wide = format!("{},{},{},{}", x0 - 24, y0 - 16, x1 - x0 + 48, y1 - y0 + 32);
    let out = run_ok(
        bin()
            .arg("reconstruct")
            .arg(&disp_path)
            .arg("--rig")
            .arg(&rig_path)
            .arg("--roi")
            .arg(&wide)
            .arg("--corners")
            .arg("--out")
            .arg(&ply_path),
    );
    let kv = stdout_kv(&out);
    let corner_plane: Vec<f64> = kv["plane"]
        .split_whitespace()
        .map(|f| f.parse().unwrap())
        .collect();
    let dot = plane[0] * corner_plane[0] + plane[1] * corner_plane[1] + plane[2] * corner_plane[2];
    assert!(dot > 0.999, "corner-mode normal deviates: {corner_plane:?}");
    assert!(
        (plane[3] - corner_plane[3]).abs() < 0.01,
        "corner-mode offset deviates: {} vs {}",
        plane[3],
        corner_plane[3]
    );
}

#[test]
fn reconstruct_all_invalid_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let disp_path = dir.path().join("empty.pfm");
    std::fs::write(
        &disp_path,
        write_pfm(&DisparityMap::new_invalid(16, 16).unwrap()),
    )
    .unwrap();
    let rig_path = dir.path().join("rig.txt");
    std::fs::write(&rig_path, "f = 350\nu0 = 160\nv0 = 120\ntc = 0.12\nplane_beta = 1\n")
        .unwrap();
    let out = bin()
        .arg("reconstruct")
        .arg(&disp_path)
        .arg("--rig")
        .arg(&rig_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bench_csv_is_consistent() {
    let scene = render_scene(false, 0.0);
    let csv_path = scene.dir.path().join("bench.csv");
    run_ok(
        bin()
            .arg("bench")
            .arg(&scene.left)
            .arg(&scene.right)
            .arg("--identity-model")
            .arg("--d-max")
            .arg("8")
            .arg("--rho-blocks")
            .arg("1,3")
            .arg("--rho-aggs")
            .arg("0,2")
            .arg("--reps")
            .arg("2")
            .arg("--out")
            .arg(&csv_path),
    );
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("rho_block,rho_agg,seconds,mde_per_s"));
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4);
        let seconds: f64 = fields[2].parse().unwrap();
        let mde: f64 = fields[3].parse().unwrap();
        let expected = (320 * 240 * 8) as f64 * 1e-6 / seconds;
        assert!(
            (mde - expected).abs() / expected < 1e-3,
            "mde {mde} vs recomputed {expected}"
        );
        rows += 1;
    }
    assert_eq!(rows, 4);
}
