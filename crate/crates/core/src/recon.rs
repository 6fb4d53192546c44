//! Triangulation of the post-processed disparity map into a point cloud,
//! plane interpolation, point-to-plane distance statistics, disparity-map
//! evaluation, and the throughput metric.
//!
//! The world frame is the left-camera frame: x right, y down, z forward
//! along the optical axis. Evaluation is plane-relative, so the rig pitch
//! does not need to be applied to the cloud.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{DisparityMap, Mask, Rect};
use crate::transform::CameraRig;

/// One triangulated point with its source pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub u: usize,
    pub v: usize,
}

/// Set of 3-D points in metres.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points whose source pixel lies inside `region`.
    pub fn select(&self, region: Rect) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .copied()
                .filter(|p| region.contains(p.u, p.v))
                .collect(),
        }
    }

    /// Points whose source pixel lies outside `region`.
    pub fn select_outside(&self, region: Rect) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .copied()
                .filter(|p| !region.contains(p.u, p.v))
                .collect(),
        }
    }

    /// ASCII PLY encoding with x, y, z in metres at 6 decimal places.
    pub fn to_ply(&self) -> String {
        let mut out = String::with_capacity(64 + 32 * self.points.len());
        out.push_str("ply\nformat ascii 1.0\n");
        out.push_str(&format!("element vertex {}\n", self.points.len()));
        out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
        for p in &self.points {
            out.push_str(&format!("{:.6} {:.6} {:.6}\n", p.x, p.y, p.z));
        }
        out
    }
}

/// Plane `n0 x + n1 y + n2 z + n3 = 0` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
}

impl Plane {
    /// Signed distance of a point from the plane, metres.
    #[inline]
    pub fn distance(&self, p: &CloudPoint) -> f64 {
        self.n0 * p.x + self.n1 * p.y + self.n2 * p.z + self.n3
    }
}

/// Back-projects every valid pixel with `d >= d_min` through the rectified
/// pinhole model: `z = f Tc / d`, `x = (u - u0) z / f`, `y = (v - v0) z / f`.
pub fn triangulate(map: &DisparityMap, rig: &CameraRig, d_min: f64) -> Result<PointCloud> {
    rig.validate()?;
    if !(d_min > 0.0) {
        return Err(Error::Parameter(format!(
            "d_min {d_min} must be > 0 to bound depth"
        )));
    }
    let w = map.width();
    let rows: Vec<Vec<CloudPoint>> = (0..map.height())
        .into_par_iter()
        .map(|v| {
            let mut row_points = Vec::new();
            for u in 0..w {
                let d = map.get(u, v) as f64;
                if !d.is_finite() || d < d_min {
                    continue;
                }
                let z = rig.f * rig.tc / d;
                row_points.push(CloudPoint {
                    x: (u as f64 - rig.u0) * z / rig.f,
                    y: (v as f64 - rig.v0) * z / rig.f,
                    z,
                    u,
                    v,
                });
            }
            row_points
        })
        .collect();
    Ok(PointCloud {
        points: rows.into_iter().flatten().collect(),
    })
}

/// Total-least-squares plane through the points: the smallest-eigenvector
/// direction of the centred covariance, oriented so `n1 >= 0`.
pub fn fit_plane(cloud: &PointCloud) -> Result<Plane> {
    let pts = &cloud.points;
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} point(s), need at least 3 for a plane",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mut centroid = Vector3::zeros();
    for p in pts {
        centroid += Vector3::new(p.x, p.y, p.z);
    }
    centroid /= n;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = Vector3::new(p.x, p.y, p.z) - centroid;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = cov.symmetric_eigen();
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let [smallest, middle, largest] = order;
    // Collinear (or coincident) points leave two near-zero eigenvalues.
    if eig.eigenvalues[middle] <= 1e-10 * eig.eigenvalues[largest].max(1e-300) {
        return Err(Error::Degenerate(
            "points are collinear; plane is not unique".into(),
        ));
    }
    let mut normal = eig.eigenvectors.column(smallest).normalize();
    if normal[1] < 0.0 {
        normal = -normal;
    }
    Ok(Plane {
        n0: normal[0],
        n1: normal[1],
        n2: normal[2],
        n3: -normal.dot(&centroid),
    })
}

/// Signed point-to-plane distances, in input order.
pub fn point_plane_distances(cloud: &PointCloud, plane: &Plane) -> Vec<f64> {
    cloud.points.iter().map(|p| plane.distance(p)).collect()
}

/// Summary statistics of a distance sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub rms: f64,
}

impl DistanceStats {
    pub fn from_distances(distances: &[f64]) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::InsufficientData("no distances to summarise".into()));
        }
        let n = distances.len() as f64;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut sq_sum = 0.0;
        for &d in distances {
            min = min.min(d);
            max = max.max(d);
            sum += d;
            sq_sum += d * d;
        }
        Ok(Self {
            count: distances.len(),
            min,
            max,
            mean: sum / n,
            rms: (sq_sum / n).sqrt(),
        })
    }
}

/// Millions of disparity evaluations per second:
/// `width * height * d_max * 1e-6 / seconds`.
pub fn mde_per_second(width: usize, height: usize, d_max: usize, seconds: f64) -> Result<f64> {
    if width == 0 || height == 0 || d_max == 0 {
        return Err(Error::Parameter(
            "width, height and d_max must be positive".into(),
        ));
    }
    if !(seconds > 0.0) {
        return Err(Error::Parameter(format!(
            "runtime {seconds} s must be > 0"
        )));
    }
    Ok((width * height * d_max) as f64 * 1e-6 / seconds)
}

/// Disparity-map accuracy against a ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    /// Ground-truth pixels considered (valid, not excluded).
    pub gt_pixels: usize,
    /// Of those, pixels where the estimate is also valid.
    pub compared: usize,
    /// compared / gt_pixels.
    pub density: f64,
    /// Over the compared pixels.
    pub rms: f64,
    pub mae: f64,
    /// Per threshold: fraction of ground-truth pixels that are invalid in
    /// the estimate or err by more than the threshold.
    pub bad_rates: Vec<(f64, f64)>,
}

/// Compares an estimated map against ground truth over valid, non-excluded
/// ground-truth pixels. Invalid estimates count as bad at every threshold.
pub fn evaluate_disparity(
    estimate: &DisparityMap,
    ground_truth: &DisparityMap,
    exclude: Option<&Mask>,
    thresholds: &[f64],
) -> Result<EvalStats> {
    let (w, h) = (ground_truth.width(), ground_truth.height());
    if estimate.width() != w || estimate.height() != h {
        return Err(Error::Dimension(format!(
            "map sizes differ: {}x{} vs {w}x{h}",
            estimate.width(),
            estimate.height()
        )));
    }
    if let Some(mask) = exclude {
        if mask.width() != w || mask.height() != h {
            return Err(Error::Dimension("exclusion mask size differs".into()));
        }
    }
    let mut gt_pixels = 0usize;
    let mut compared = 0usize;
    let mut sq_sum = 0.0f64;
    let mut abs_sum = 0.0f64;
    let mut bad = vec![0usize; thresholds.len()];
    for v in 0..h {
        for u in 0..w {
            if !ground_truth.is_valid(u, v) {
                continue;
            }
            if exclude.is_some_and(|m| m.get(u, v)) {
                continue;
            }
            gt_pixels += 1;
            if estimate.is_valid(u, v) {
                let err = (estimate.get(u, v) as f64 - ground_truth.get(u, v) as f64).abs();
                compared += 1;
                sq_sum += err * err;
                abs_sum += err;
                for (i, &t) in thresholds.iter().enumerate() {
                    if err > t {
                        bad[i] += 1;
                    }
                }
            } else {
                for b in bad.iter_mut() {
                    *b += 1;
                }
            }
        }
    }
    if gt_pixels == 0 {
        return Err(Error::InsufficientData(
            "no ground-truth pixels to compare".into(),
        ));
    }
    let (rms, mae) = if compared > 0 {
        (
            (sq_sum / compared as f64).sqrt(),
            abs_sum / compared as f64,
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(EvalStats {
        gt_pixels,
        compared,
        density: compared as f64 / gt_pixels as f64,
        rms,
        mae,
        bad_rates: thresholds
            .iter()
            .zip(&bad)
            .map(|(&t, &b)| (t, b as f64 / gt_pixels as f64))
            .collect(),
    })
}
