//! Road-plane disparity model estimation and perspective transformation.
//!
//! The road surface induces a per-row disparity `d = alpha0 + alpha1 * v`
//! between rectified views. Shifting every target row right by
//! `alpha0 + alpha1 * v - delta` makes the road appear nearly identical in
//! both images, so the remaining search range collapses to a few pixels
//! around `delta`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::costs::{compute_block_stats, NccParams};
use crate::error::{Error, Result};
use crate::image::{DisparityMap, GrayImage, Mask, Rect};
use crate::kv::{parse_f64_list, KvFile};

/// Intrinsics and extrinsics of the rectified stereo rig, plus the road
/// plane `n * y + beta = 0` in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    /// Focal length in pixels (shared by both cameras).
    pub f: f64,
    /// Principal point, pixels.
    pub u0: f64,
    pub v0: f64,
    /// Baseline, metres.
    pub tc: f64,
    /// Pitch of the rig relative to the road, radians (positive = down).
    pub theta: f64,
    /// Road-plane normal component and offset of `n * y + beta = 0`.
    pub plane_n: f64,
    pub plane_beta: f64,
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f > 0.0) {
            return Err(Error::Parameter(format!("focal length {} must be > 0", self.f)));
        }
        if !(self.tc > 0.0) {
            return Err(Error::Parameter(format!("baseline {} must be > 0", self.tc)));
        }
        if self.plane_beta == 0.0 {
            return Err(Error::Degenerate("plane offset beta is zero".into()));
        }
        for (name, v) in [
            ("u0", self.u0),
            ("v0", self.v0),
            ("theta", self.theta),
            ("plane_n", self.plane_n),
            ("plane_beta", self.plane_beta),
        ] {
            if !v.is_finite() {
                return Err(Error::Parameter(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let rig = Self {
            f: kv.f64("f")?,
            u0: kv.f64("u0")?,
            v0: kv.f64("v0")?,
            tc: kv.f64("tc")?,
            theta: kv.f64_or("theta", 0.0)?,
            plane_n: kv.f64_or("plane_n", -1.0)?,
            plane_beta: kv.f64("plane_beta")?,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "f = {}\nu0 = {}\nv0 = {}\ntc = {}\ntheta = {}\nplane_n = {}\nplane_beta = {}\n",
            self.f, self.u0, self.v0, self.tc, self.theta, self.plane_n, self.plane_beta
        )
    }
}

/// Road disparity model coefficients from rig geometry:
/// `alpha0 = (v0 cos t - f sin t) Tc n / beta`, `alpha1 = -cos t * Tc n / beta`.
pub fn alpha_from_rig(rig: &CameraRig) -> Result<(f64, f64)> {
    rig.validate()?;
    let k = rig.tc * rig.plane_n / rig.plane_beta;
    let (sin_t, cos_t) = rig.theta.sin_cos();
    Ok(((rig.v0 * cos_t - rig.f * sin_t) * k, -cos_t * k))
}

/// One matched point pair between the rectified views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub ul: f64,
    pub vl: f64,
    pub ur: f64,
    pub vr: f64,
}

impl Correspondence {
    pub fn disparity(&self) -> f64 {
        self.ul - self.ur
    }
}

/// Fitted per-row disparity model with the non-negative warp offset `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadModel {
    pub alpha0: f64,
    pub alpha1: f64,
    pub delta: f64,
    pub inlier_count: usize,
    pub residual_rms: f64,
}

impl RoadModel {
    /// Model that leaves the target image untouched.
    pub fn identity() -> Self {
        Self {
            alpha0: 0.0,
            alpha1: 0.0,
            delta: 0.0,
            inlier_count: 0,
            residual_rms: 0.0,
        }
    }

    /// Row shift applied by the perspective transformation.
    #[inline]
    pub fn shift(&self, v: f64) -> f64 {
        self.alpha0 + self.alpha1 * v - self.delta
    }

    pub fn is_finite(&self) -> bool {
        self.alpha0.is_finite() && self.alpha1.is_finite() && self.delta.is_finite()
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        Ok(Self {
            alpha0: kv.f64("alpha0")?,
            alpha1: kv.f64("alpha1")?,
            delta: kv.f64("delta")?,
            inlier_count: 0,
            residual_rms: 0.0,
        })
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "alpha0 = {}\nalpha1 = {}\ndelta = {}\n",
            self.alpha0, self.alpha1, self.delta
        )
    }
}

/// RANSAC configuration for [`fit_road_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier residual threshold, pixels.
    pub inlier_threshold: f64,
    /// Minimum consensus size as a fraction of the input matches.
    pub min_consensus_frac: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_threshold: 1.0,
            min_consensus_frac: 0.5,
            seed: 1,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Parameter("ransac iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::Parameter("ransac inlier threshold must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.min_consensus_frac) {
            return Err(Error::Parameter(
                "ransac min consensus fraction must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Robustly fits `d = alpha0 + alpha1 * v` to the correspondences, then
/// derives `delta = max(0, floor(min_v d(v)) - d_margin)` so that the row
/// shift stays non-negative over `rows` image rows with `d_margin` pixels
/// of headroom for relief below the plane.
pub fn fit_road_model(
    matches: &[Correspondence],
    ransac: &RansacParams,
    rows: usize,
    d_margin: f64,
) -> Result<RoadModel> {
    ransac.validate()?;
    if rows == 0 {
        return Err(Error::Parameter("image height must be >= 1".into()));
    }
    if !(d_margin >= 0.0) {
        return Err(Error::Parameter("d_margin must be >= 0".into()));
    }
    let n = matches.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "{n} correspondence(s), need at least 2"
        )));
    }

    let points: Vec<(f64, f64)> = matches.iter().map(|m| (m.vl, m.disparity())).collect();
    let best = best_consensus(&points, ransac);
    let required = 2.max((ransac.min_consensus_frac * n as f64).ceil() as usize);
    let consensus = match best {
        Some(set) if set.len() >= required => set,
        Some(set) => {
            return Err(Error::NoConsensus {
                found: set.len(),
                required,
            })
        }
        None => {
            return Err(Error::Degenerate(
                "correspondences span a single image row".into(),
            ))
        }
    };

    // Final least-squares fit over the consensus set.
    let (alpha0, alpha1) = fit_line(&points, &consensus)?;
    let residual_rms = {
        let sq_sum: f64 = consensus
            .iter()
            .map(|&i| {
                let (v, d) = points[i];
                let r = d - alpha0 - alpha1 * v;
                r * r
            })
            .sum();
        (sq_sum / consensus.len() as f64).sqrt()
    };

    // The model is linear in v, so its minimum over the image is at an edge row.
    let min_d = (alpha0).min(alpha0 + alpha1 * (rows - 1) as f64);
    let delta = (min_d.floor() - d_margin).max(0.0);

    Ok(RoadModel {
        alpha0,
        alpha1,
        delta,
        inlier_count: consensus.len(),
        residual_rms,
    })
}

/// Largest consensus set over 2-point line hypotheses. Enumerates all pairs
/// when that is no more work than the configured iteration count, otherwise
/// samples seeded random pairs; either way the result is deterministic.
fn best_consensus(points: &[(f64, f64)], ransac: &RansacParams) -> Option<Vec<usize>> {
    let n = points.len();
    let mut best: Option<Vec<usize>> = None;
    let mut consider = |i: usize, j: usize| {
        let (vi, di) = points[i];
        let (vj, dj) = points[j];
        if (vi - vj).abs() < 1e-9 {
            return;
        }
        let a1 = (di - dj) / (vi - vj);
        let a0 = di - a1 * vi;
        let inliers: Vec<usize> = points
            .iter()
            .enumerate()
            .filter(|(_, (v, d))| (d - a0 - a1 * v).abs() <= ransac.inlier_threshold)
            .map(|(k, _)| k)
            .collect();
        if best.as_ref().is_none_or(|b| inliers.len() > b.len()) {
            best = Some(inliers);
        }
    };

    if n * (n - 1) / 2 <= ransac.iterations {
        for i in 0..n {
            for j in i + 1..n {
                consider(i, j);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(ransac.seed);
        for _ in 0..ransac.iterations {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                consider(i, j);
            }
        }
    }
    best
}

fn fit_line(points: &[(f64, f64)], indices: &[usize]) -> Result<(f64, f64)> {
    let n = indices.len() as f64;
    let (mut sv, mut sd, mut svv, mut svd) = (0.0, 0.0, 0.0, 0.0);
    for &i in indices {
        let (v, d) = points[i];
        sv += v;
        sd += d;
        svv += v * v;
        svd += v * d;
    }
    let denom = n * svv - sv * sv;
    if denom.abs() < 1e-9 * (n * svv).abs().max(1e-300) {
        return Err(Error::Degenerate("consensus set spans a single row".into()));
    }
    let alpha1 = (n * svd - sv * sd) / denom;
    let alpha0 = (sd - alpha1 * sv) / n;
    Ok((alpha0, alpha1))
}

/// Least-squares plane `d(u, v) = g0 + g1 u + g2 v` over the valid pixels of
/// `region`, returning the roll angle `atan(-g1 / g2)`.
pub fn estimate_roll(map: &DisparityMap, region: Rect) -> Result<f64> {
    let region = region.clipped(map.width(), map.height());
    let mut samples = Vec::new();
    for y in region.y..region.y + region.height {
        for x in region.x..region.x + region.width {
            if map.is_valid(x, y) {
                samples.push((x as f64, y as f64, map.get(x, y) as f64));
            }
        }
    }
    if samples.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} valid pixel(s) in roll patch, need at least 3",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let (mut mu, mut mv, mut md) = (0.0, 0.0, 0.0);
    for &(u, v, d) in &samples {
        mu += u;
        mv += v;
        md += d;
    }
    mu /= n;
    mv /= n;
    md /= n;
    let (mut suu, mut svv, mut suv, mut sud, mut svd) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(u, v, d) in &samples {
        let (cu, cv, cd) = (u - mu, v - mv, d - md);
        suu += cu * cu;
        svv += cv * cv;
        suv += cu * cv;
        sud += cu * cd;
        svd += cv * cd;
    }
    let denom = suu * svv - suv * suv;
    if denom <= 1e-9 * (suu * svv).max(1e-300) {
        return Err(Error::Degenerate("collinear samples in roll patch".into()));
    }
    let g1 = (svv * sud - suv * svd) / denom;
    let g2 = (suu * svd - suv * sud) / denom;
    let scale = g1.abs().max(g2.abs());
    if scale == 0.0 || g2.abs() <= 1e-9 * scale {
        return Err(Error::Degenerate(
            "fitted plane has no row slope; roll undefined".into(),
        ));
    }
    Ok((-g1 / g2).atan())
}

/// Default near-field patch for roll estimation: bottom-centre 25% of the
/// width by 15% of the height.
pub fn near_field_region(width: usize, height: usize) -> Rect {
    let w = ((width as f64 * 0.25).round() as usize).clamp(1, width);
    let h = ((height as f64 * 0.15).round() as usize).clamp(1, height);
    Rect::new((width - w) / 2, height - h, w, h)
}

/// Shifts each target row right by `model.shift(v)` with horizontal linear
/// interpolation. Pixels sampling outside the source are zero and cleared in
/// the returned validity mask.
pub fn warp_target(target: &GrayImage, model: &RoadModel) -> Result<(GrayImage, Mask)> {
    if !model.is_finite() {
        return Err(Error::InvalidModel("non-finite model coefficients".into()));
    }
    let (w, h) = (target.width(), target.height());
    for v in 0..h {
        let s = model.shift(v as f64);
        if s < 0.0 {
            return Err(Error::InvalidModel(format!(
                "negative shift {s:.3} on row {v}"
            )));
        }
    }

    let mut image = vec![0u8; w * h];
    let mut valid = vec![false; w * h];
    image
        .par_chunks_mut(w)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (img_row, valid_row))| {
            let s = model.shift(v as f64);
            for u in 0..w {
                if let Some(val) = target.sample_row(u as f64 - s, v) {
                    img_row[u] = val.round() as u8;
                    valid_row[u] = true;
                }
            }
        });

    let image = GrayImage::from_vec(w, h, image)?;
    let mut mask = Mask::new(w, h, false)?;
    for y in 0..h {
        for x in 0..w {
            mask.set(x, y, valid[y * w + x]);
        }
    }
    Ok((image, mask))
}

/// Configuration of the built-in sparse matcher used when no correspondence
/// file is supplied.
#[derive(Debug, Clone, Copy)]
pub struct SparseMatcherParams {
    /// One candidate feature per grid cell of this pitch.
    pub grid_step: usize,
    /// Half window of the correlation blocks.
    pub half_window: usize,
    /// Minimum peak correlation for a match to be kept.
    pub min_correlation: f64,
    /// Minimum block standard deviation for a feature to be considered.
    pub min_sigma: f64,
}

impl Default for SparseMatcherParams {
    fn default() -> Self {
        Self {
            grid_step: 16,
            half_window: 5,
            min_correlation: 0.9,
            min_sigma: 1.0,
        }
    }
}

/// Grid-based sparse correspondences: picks the highest-variance pixel per
/// cell of the reference image and matches it along its epipolar row in the
/// target by NCC, keeping confident peaks. Sub-pixel refinement by parabola
/// interpolation of the correlation peak.
pub fn match_sparse(
    reference: &GrayImage,
    target: &GrayImage,
    params: &SparseMatcherParams,
) -> Result<Vec<Correspondence>> {
    if reference.width() != target.width() || reference.height() != target.height() {
        return Err(Error::Dimension(format!(
            "image sizes differ: {}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            target.width(),
            target.height()
        )));
    }
    if params.grid_step == 0 || params.half_window == 0 {
        return Err(Error::Parameter("grid step and half window must be >= 1".into()));
    }
    let hw = params.half_window;
    let stats_params = NccParams {
        rho_block: hw,
        d_max: 1,
        sigma_min: params.min_sigma,
    };
    let ref_stats = compute_block_stats(reference, &stats_params)?;
    let tar_stats = compute_block_stats(target, &stats_params)?;

    let (w, h) = (reference.width(), reference.height());
    let n = ((2 * hw + 1) * (2 * hw + 1)) as f64;
    let cells_y: Vec<usize> = (hw..h.saturating_sub(hw)).step_by(params.grid_step).collect();

    let rows: Vec<Vec<Correspondence>> = cells_y
        .par_iter()
        .map(|&cy| {
            let mut out = Vec::new();
            let mut cx = hw;
            while cx + params.grid_step <= w.saturating_sub(hw) + params.grid_step {
                let x_end = (cx + params.grid_step).min(w - hw);
                let y_end = (cy + params.grid_step).min(h - hw);
                // Highest-variance pixel of the cell.
                let mut best_feat: Option<(usize, usize, f64)> = None;
                for y in cy..y_end {
                    for x in cx..x_end {
                        let s = ref_stats.sigma(x, y);
                        if s >= params.min_sigma
                            && best_feat.is_none_or(|(_, _, bs)| s > bs)
                        {
                            best_feat = Some((x, y, s));
                        }
                    }
                }
                if let Some((ul, v, _)) = best_feat {
                    let ncc = |ur: usize| -> Option<f64> {
                        let sr = tar_stats.sigma(ur, v);
                        if sr.is_nan() || sr < params.min_sigma {
                            return None;
                        }
                        let mut dot = 0u32;
                        for dy in 0..=2 * hw {
                            let y = v + dy - hw;
                            for dx in 0..=2 * hw {
                                dot += reference.get(ul + dx - hw, y) as u32
                                    * target.get(ur + dx - hw, y) as u32;
                            }
                        }
                        Some(
                            (dot as f64 - n * ref_stats.mu(ul, v) * tar_stats.mu(ur, v))
                                / (n * ref_stats.sigma(ul, v) * sr),
                        )
                    };
                    let mut best: Option<(usize, f64)> = None;
                    for ur in hw..=ul.min(w - 1 - hw) {
                        if let Some(c) = ncc(ur) {
                            if best.is_none_or(|(_, bc)| c > bc) {
                                best = Some((ur, c));
                            }
                        }
                    }
                    if let Some((ur, c)) = best {
                        if c >= params.min_correlation {
                            let mut ur_refined = ur as f64;
                            if ur > hw && ur < ul.min(w - 1 - hw) {
                                if let (Some(cm), Some(cp)) = (ncc(ur - 1), ncc(ur + 1)) {
                                    let denom = 2.0 * cm + 2.0 * cp - 4.0 * c;
                                    if denom.abs() > 1e-12 {
                                        let off = (cm - cp) / denom;
                                        if off.abs() <= 0.5 {
                                            ur_refined += off;
                                        }
                                    }
                                }
                            }
                            out.push(Correspondence {
                                ul: ul as f64,
                                vl: v as f64,
                                ur: ur_refined,
                                vr: v as f64,
                            });
                        }
                    }
                }
                cx = x_end;
                if x_end == w - hw {
                    break;
                }
            }
            out
        })
        .collect();

    Ok(rows.into_iter().flatten().collect())
}

/// Parses a correspondence CSV: one `ul,vl,ur,vr` quadruple per line,
/// `#` comments allowed.
pub fn read_correspondences(text: &str) -> Result<Vec<Correspondence>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let vals = parse_f64_list("correspondence", line, 4)
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        let c = Correspondence {
            ul: vals[0],
            vl: vals[1],
            ur: vals[2],
            vr: vals[3],
        };
        if (c.vl - c.vr).abs() > 1.0 {
            return Err(Error::Format(format!(
                "line {}: rows {} and {} differ by more than 1 px (not rectified)",
                lineno + 1,
                c.vl,
                c.vr
            )));
        }
        out.push(c);
    }
    Ok(out)
}

pub fn write_correspondences(matches: &[Correspondence]) -> String {
    let mut out = String::from("# ul,vl,ur,vr\n");
    for m in matches {
        out.push_str(&format!("{},{},{},{}\n", m.ul, m.vl, m.ur, m.vr));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_rig() -> CameraRig {
        CameraRig {
            f: 500.0,
            u0: 320.0,
            v0: 240.0,
            tc: 0.12,
            theta: 0.1,
            plane_n: -1.0,
            plane_beta: 1.5,
        }
    }

    #[test]
    fn alpha_zero_pitch() {
        let rig = CameraRig {
            theta: 0.0,
            ..test_rig()
        };
        let (a0, a1) = alpha_from_rig(&rig).unwrap();
        let k = rig.tc * rig.plane_n / rig.plane_beta;
        assert_eq!(a0, rig.v0 * k);
        assert_eq!(a1, -k);
    }

    #[test]
    fn alpha_zero_normal() {
        let rig = CameraRig {
            plane_n: 0.0,
            ..test_rig()
        };
        let (a0, a1) = alpha_from_rig(&rig).unwrap();
        assert_eq!((a0, a1), (0.0, 0.0));
    }

    // Independent arithmetic oracle for the general case.
    #[test]
    fn alpha_matches_direct_evaluation() {
        let rig = test_rig();
        let (a0, a1) = alpha_from_rig(&rig).unwrap();
        let k = 0.12 * (-1.0) / 1.5;
        let expected_a0 = (240.0 * 0.1f64.cos() - 500.0 * 0.1f64.sin()) * k;
        let expected_a1 = -0.1f64.cos() * k;
        assert!((a0 - expected_a0).abs() < 1e-12);
        assert!((a1 - expected_a1).abs() < 1e-12);
    }

    #[test]
    fn alpha_rejects_zero_beta() {
        let rig = CameraRig {
            plane_beta: 0.0,
            ..test_rig()
        };
        assert!(matches!(alpha_from_rig(&rig), Err(Error::Degenerate(_))));
    }

    fn patch_from_plane(g0: f64, g1: f64, g2: f64) -> DisparityMap {
        let mut map = DisparityMap::new_invalid(12, 10).unwrap();
        for y in 0..10 {
            for x in 0..12 {
                map.set(x, y, g0 + g1 * x as f64 + g2 * y as f64);
            }
        }
        map
    }

    #[test]
    fn roll_zero_for_pure_row_slope() {
        let map = patch_from_plane(10.0, 0.0, 0.5);
        let roll = estimate_roll(&map, Rect::new(0, 0, 12, 10)).unwrap();
        assert!(roll.abs() < 1e-9);
    }

    #[test]
    fn roll_quarter_turn_for_equal_slopes() {
        let map = patch_from_plane(10.0, 0.5, 0.5);
        let roll = estimate_roll(&map, Rect::new(0, 0, 12, 10)).unwrap();
        assert!((roll + std::f64::consts::FRAC_PI_4).abs() < 1e-6);
    }

    // Rotating the sampling coordinates of a zero-roll plane by phi must be
    // reported as a roll of -phi.
    #[test]
    fn roll_recovers_synthetic_rotation() {
        for &phi in &[0.05, -0.12, 0.3] {
            let (s, c) = (phi as f64).sin_cos();
            let mut map = DisparityMap::new_invalid(16, 16).unwrap();
            for y in 0..16 {
                for x in 0..16 {
                    let d = 10.0 + 0.5 * (x as f64 * s + y as f64 * c);
                    map.set(x, y, d);
                }
            }
            let roll = estimate_roll(&map, Rect::new(0, 0, 16, 16)).unwrap();
            assert!((roll + phi).abs() < 1e-6, "phi={phi} roll={roll}");
        }
    }

    #[test]
    fn roll_invariant_to_disparity_offset() {
        let map = patch_from_plane(10.0, 0.2, 0.5);
        let shifted = patch_from_plane(47.0, 0.2, 0.5);
        let r1 = estimate_roll(&map, Rect::new(0, 0, 12, 10)).unwrap();
        let r2 = estimate_roll(&shifted, Rect::new(0, 0, 12, 10)).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn roll_errors() {
        // Column-only slope: g2 = 0, roll undefined.
        let map = patch_from_plane(10.0, 0.5, 0.0);
        assert!(matches!(
            estimate_roll(&map, Rect::new(0, 0, 12, 10)),
            Err(Error::Degenerate(_))
        ));
        // Collinear samples: a single row.
        let map = patch_from_plane(10.0, 0.5, 0.5);
        assert!(matches!(
            estimate_roll(&map, Rect::new(0, 0, 12, 1)),
            Err(Error::Degenerate(_))
        ));
        // Not enough valid pixels.
        let empty = DisparityMap::new_invalid(8, 8).unwrap();
        assert!(matches!(
            estimate_roll(&empty, Rect::new(0, 0, 8, 8)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn near_field_is_bottom_centre() {
        let r = near_field_region(640, 480);
        assert_eq!(r, Rect::new(240, 408, 160, 72));
    }

    fn line_matches(a0: f64, a1: f64, rows: &[f64]) -> Vec<Correspondence> {
        rows.iter()
            .map(|&v| {
                let d = a0 + a1 * v;
                Correspondence {
                    ul: 300.0,
                    vl: v,
                    ur: 300.0 - d,
                    vr: v,
                }
            })
            .collect()
    }

    #[test]
    fn fit_noise_free_line() {
        let rows: Vec<f64> = (0..40).map(|i| 50.0 + 10.0 * i as f64).collect();
        let matches = line_matches(100.0, -0.2, &rows);
        let model = fit_road_model(&matches, &RansacParams::default(), 480, 10.0).unwrap();
        assert!((model.alpha0 - 100.0).abs() < 1e-9);
        assert!((model.alpha1 + 0.2).abs() < 1e-9);
        assert!(model.residual_rms < 1e-9);
        assert_eq!(model.inlier_count, 40);
        // min disparity over rows 0..479 is at v=479: 100 - 95.8 = 4.2.
        assert_eq!(model.delta, 0.0);
    }

    // Oracle: least squares on the clean inliers alone.
    #[test]
    fn fit_rejects_gross_outliers() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let rows: Vec<f64> = (0..70).map(|i| 30.0 + 6.0 * i as f64).collect();
        let mut matches = line_matches(100.0, -0.2, &rows);
        let n_outliers = 30; // 30% of the total
        for _ in 0..n_outliers {
            let v = rng.random_range(0.0..480.0);
            let d = 100.0 - 0.2 * v;
            // Gross outliers sit at least 5 px off the line.
            let off: f64 = rng.random_range(5.0..50.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            matches.push(Correspondence {
                ul: 300.0,
                vl: v,
                ur: 300.0 - (d + sign * off),
                vr: v,
            });
        }
        let model = fit_road_model(&matches, &RansacParams::default(), 480, 10.0).unwrap();
        assert!((model.alpha0 - 100.0).abs() < 1e-6);
        assert!((model.alpha1 + 0.2).abs() < 1e-6);
        assert_eq!(model.inlier_count, 70);
    }

    #[test]
    fn fit_requires_two_matches() {
        let m = [Correspondence {
            ul: 10.0,
            vl: 5.0,
            ur: 3.0,
            vr: 5.0,
        }];
        assert!(matches!(
            fit_road_model(&m, &RansacParams::default(), 480, 10.0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn fit_single_row_is_degenerate() {
        let matches = vec![
            Correspondence {
                ul: 10.0,
                vl: 5.0,
                ur: 3.0,
                vr: 5.0,
            };
            4
        ];
        assert!(matches!(
            fit_road_model(&matches, &RansacParams::default(), 480, 10.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn fit_reports_no_consensus() {
        // Two separated clusters of parallel lines; the best line captures
        // fewer than 90% of the matches.
        let rows: Vec<f64> = (0..10).map(|i| 10.0 * i as f64).collect();
        let mut matches = line_matches(50.0, 0.1, &rows);
        matches.extend(line_matches(200.0, -0.3, &rows[..6]));
        let params = RansacParams {
            min_consensus_frac: 0.9,
            ..RansacParams::default()
        };
        assert!(matches!(
            fit_road_model(&matches, &params, 480, 10.0),
            Err(Error::NoConsensus { .. })
        ));
    }

    #[test]
    fn warp_zero_shift_is_identity() {
        let img = GrayImage::from_vec(6, 3, (0..18).map(|i| i as u8 * 3).collect()).unwrap();
        let model = RoadModel {
            alpha0: 4.0,
            alpha1: 0.0,
            delta: 4.0,
            inlier_count: 0,
            residual_rms: 0.0,
        };
        let (warped, mask) = warp_target(&img, &model).unwrap();
        assert_eq!(warped, img);
        assert_eq!(mask.count_set(), 18);
    }

    #[test]
    fn warp_integer_shift_translates() {
        let mut img = GrayImage::new(8, 4).unwrap();
        for y in 0..4 {
            for x in 0..8 {
                img.set(x, y, if x % 2 == 0 { 200 } else { 40 });
            }
        }
        let model = RoadModel {
            alpha0: 3.0,
            alpha1: 0.0,
            delta: 0.0,
            inlier_count: 0,
            residual_rms: 0.0,
        };
        let (warped, mask) = warp_target(&img, &model).unwrap();
        for y in 0..4 {
            for x in 3..8 {
                assert_eq!(warped.get(x, y), img.get(x - 3, y));
                assert!(mask.get(x, y));
            }
            for x in 0..3 {
                assert_eq!(warped.get(x, y), 0);
                assert!(!mask.get(x, y));
            }
        }
    }

    // Analytic oracle: on the ramp i(x) = 4x a shift of 2.5 yields 4u - 10.
    #[test]
    fn warp_fractional_shift_interpolates() {
        let img = GrayImage::from_vec(32, 2, (0..64).map(|i| ((i % 32) * 4) as u8).collect())
            .unwrap();
        let model = RoadModel {
            alpha0: 2.5,
            alpha1: 0.0,
            delta: 0.0,
            inlier_count: 0,
            residual_rms: 0.0,
        };
        let (warped, _) = warp_target(&img, &model).unwrap();
        for u in 3..32 {
            assert_eq!(warped.get(u, 0) as i32, 4 * u as i32 - 10);
        }
    }

    #[test]
    fn warp_rejects_negative_shift() {
        let img = GrayImage::new(8, 4).unwrap();
        let model = RoadModel {
            alpha0: 1.0,
            alpha1: -1.0,
            delta: 0.0,
            inlier_count: 0,
            residual_rms: 0.0,
        };
        assert!(matches!(
            warp_target(&img, &model),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn correspondence_csv_round_trip() {
        let text = "# header\n10.5,3,4.25,3\n\n20,7,5,7.5 # tail comment\n";
        let matches = read_correspondences(text).unwrap();
        assert_eq!(matches.len(), 2);
        assert_eq!(matches[0].disparity(), 6.25);
        let back = read_correspondences(&write_correspondences(&matches)).unwrap();
        assert_eq!(back, matches);
    }

    #[test]
    fn correspondence_csv_rejects_bad_rows() {
        assert!(read_correspondences("1,2,3\n").is_err());
        assert!(read_correspondences("1,2,3,x\n").is_err());
        // Rows differing by more than 1 px violate rectification.
        assert!(read_correspondences("10,5,3,8\n").is_err());
    }

    #[test]
    fn model_kv_round_trip() {
        let model = RoadModel {
            alpha0: 15.25,
            alpha1: -0.125,
            delta: 5.0,
            inlier_count: 33,
            residual_rms: 0.1,
        };
        let kv = KvFile::parse(&model.to_kv_text()).unwrap();
        let back = RoadModel::from_kv(&kv).unwrap();
        assert_eq!(back.alpha0, 15.25);
        assert_eq!(back.alpha1, -0.125);
        assert_eq!(back.delta, 5.0);
    }

    #[test]
    fn rig_kv_round_trip() {
        let rig = test_rig();
        let kv = KvFile::parse(&rig.to_kv_text()).unwrap();
        assert_eq!(CameraRig::from_kv(&kv).unwrap(), rig);
    }
}
