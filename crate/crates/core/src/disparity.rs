//! Disparity optimisation and refinement: winner-take-all over the
//! aggregated volume, left-right consistency filtering, parabola subpixel
//! interpolation, and restoration of the per-row warp shift.

use rayon::prelude::*;

use crate::costs::CostVolume;
use crate::error::{Error, Result};
use crate::image::DisparityMap;
use crate::transform::RoadModel;

/// Per-pixel argmax over the disparity axis. Ties break toward the smaller
/// disparity; pixels with no valid cost stay invalid.
pub fn wta(volume: &CostVolume) -> DisparityMap {
    let (w, h) = (volume.width(), volume.height());
    let plane = w * h;
    let mut data = vec![f64::NAN; plane];
    data.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for u in 0..w {
            let mut best: Option<(usize, f64)> = None;
            for d in 0..=volume.d_max() {
                let c = volume.data[d * plane + v * w + u];
                if c.is_nan() {
                    continue;
                }
                if best.is_none_or(|(_, bc)| c > bc) {
                    best = Some((d, c));
                }
            }
            if let Some((d, _)) = best {
                row[u] = d as f64;
            }
        }
    });
    DisparityMap::from_vec(w, h, data).expect("volume dims are valid")
}

/// Uniqueness check between the reference and target disparity maps: a
/// pixel survives only if `|ref(u,v) - tar(u - ref(u,v), v)| <= tol`, its
/// projection stays inside the image, and the target pixel is valid.
/// Surviving values are returned unchanged.
pub fn lr_consistency(
    ref_map: &DisparityMap,
    tar_map: &DisparityMap,
    tol: f64,
) -> Result<DisparityMap> {
    let (w, h) = (ref_map.width(), ref_map.height());
    if tar_map.width() != w || tar_map.height() != h {
        return Err(Error::Dimension(format!(
            "map sizes differ: {w}x{h} vs {}x{}",
            tar_map.width(),
            tar_map.height()
        )));
    }
    if !(tol >= 0.0) {
        return Err(Error::Parameter("lr tolerance must be >= 0".into()));
    }
    let mut out = ref_map.clone();
    out.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(v, row)| {
            for u in 0..w {
                let d = row[u];
                if d.is_nan() {
                    continue;
                }
                let target_u = u as i64 - d.round() as i64;
                let keep = target_u >= 0 && (target_u as usize) < w && {
                    let t = tar_map.get(target_u as usize, v);
                    !t.is_nan() && (d as f64 - t as f64).abs() <= tol
                };
                if !keep {
                    row[u] = f64::NAN;
                }
            }
        });
    Ok(out)
}

/// Parabola interpolation through the three aggregated costs around each
/// integer winner:
///
/// `d_s = d + (c(d-1) - c(d+1)) / (2 c(d-1) + 2 c(d+1) - 4 c(d))`
///
/// Pixels at the search-range boundary, with an invalid neighbour cost, or
/// with a near-flat cost triple keep their integer disparity. When `c(d)` is
/// the maximum of the triple the correction cannot exceed half a pixel.
pub fn subpixel_refine(map: &DisparityMap, volume: &CostVolume) -> DisparityMap {
    let w = map.width();
    let mut out = map.clone();
    out.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(v, row)| {
            for u in 0..w {
                let d = row[u];
                if d.is_nan() {
                    continue;
                }
                let di = d.round() as usize;
                if di == 0 || di >= volume.d_max() {
                    continue;
                }
                let c0 = volume.get(u, v, di);
                let cm = volume.get(u, v, di - 1);
                let cp = volume.get(u, v, di + 1);
                if cm.is_nan() || cp.is_nan() || c0.is_nan() {
                    continue;
                }
                let denom = 2.0 * cm + 2.0 * cp - 4.0 * c0;
                if denom.abs() < 1e-12 {
                    continue;
                }
                row[u] = di as f64 + (cm - cp) / denom;
            }
        });
    out
}

/// Adds the warp shift `alpha0 + alpha1 v - delta` back to every valid
/// pixel of row `v`, converting warped-frame disparities to true ones.
pub fn postprocess(map: &DisparityMap, model: &RoadModel) -> DisparityMap {
    let w = map.width();
    let mut out = map.clone();
    out.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(v, row)| {
            let shift = model.shift(v as f64);
            for value in row.iter_mut() {
                if !value.is_nan() {
                    *value += shift;
                }
            }
        });
    out
}
