//! Adaptive cost aggregation: bilateral filtering of each cost-volume slice.
//!
//! Every cost is replaced by the weighted mean of its window in the same
//! disparity slice,
//!
//! `c_agg(u,v,d) = sum w_d w_r c(x,y,d) / sum w_d w_r`,
//!
//! with a spatial Gaussian `w_d = exp(-((x-u)^2 + (y-v)^2) / gamma_d^2)` and
//! a guide-intensity Gaussian `w_r = exp(-(i(x,y) - i(u,v))^2 / gamma_r^2)`.
//! Edges in the guide image suppress aggregation across them, which is what
//! keeps disparity discontinuities sharp without solving a global model.

use rayon::prelude::*;

use crate::costs::CostVolume;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Below this realised weight sum an aggregated cost is marked invalid.
const WEIGHT_SUM_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralParams {
    /// Half window of the aggregation; 0 degenerates to a copy.
    pub rho_agg: usize,
    /// Spatial falloff, pixels.
    pub gamma_d: f64,
    /// Range (intensity) falloff, levels.
    pub gamma_r: f64,
}

impl Default for BilateralParams {
    fn default() -> Self {
        Self {
            rho_agg: 4,
            gamma_d: 5.0,
            gamma_r: 10.0,
        }
    }
}

impl BilateralParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_d > 0.0) {
            return Err(Error::Parameter("gamma_d must be > 0".into()));
        }
        if !(self.gamma_r > 0.0) {
            return Err(Error::Parameter("gamma_r must be > 0".into()));
        }
        Ok(())
    }
}

/// One neighbour of a bilateral window with its two weight factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowWeight {
    pub x: usize,
    pub y: usize,
    pub spatial: f64,
    pub range: f64,
}

/// The bilateral weight window around `(u, v)`, clipped at the image border.
pub fn bilateral_weights(
    guide: &GrayImage,
    u: usize,
    v: usize,
    params: &BilateralParams,
) -> Vec<WindowWeight> {
    let rho = params.rho_agg;
    let center = guide.get(u, v) as f64;
    let inv_gd2 = 1.0 / (params.gamma_d * params.gamma_d);
    let inv_gr2 = 1.0 / (params.gamma_r * params.gamma_r);
    let y0 = v.saturating_sub(rho);
    let y1 = (v + rho).min(guide.height() - 1);
    let x0 = u.saturating_sub(rho);
    let x1 = (u + rho).min(guide.width() - 1);
    let mut out = Vec::with_capacity((y1 - y0 + 1) * (x1 - x0 + 1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 - u as f64;
            let dy = y as f64 - v as f64;
            let di = guide.get(x, y) as f64 - center;
            out.push(WindowWeight {
                x,
                y,
                spatial: (-(dx * dx + dy * dy) * inv_gd2).exp(),
                range: (-di * di * inv_gr2).exp(),
            });
        }
    }
    out
}

/// Bilaterally filters every slice of `volume`, guided by `guide`.
///
/// Invalid costs are excluded from both sums; an output is invalid when the
/// realised weight sum over valid neighbours is below tolerance. Windows are
/// clipped at the border and renormalised, so constants are fixed points.
pub fn aggregate_volume(
    volume: &CostVolume,
    guide: &GrayImage,
    params: &BilateralParams,
) -> Result<CostVolume> {
    params.validate()?;
    let (w, h) = (volume.width(), volume.height());
    if guide.width() != w || guide.height() != h {
        return Err(Error::Dimension(format!(
            "guide {}x{} does not match volume {w}x{h}",
            guide.width(),
            guide.height()
        )));
    }

    let rho = params.rho_agg;
    let side = 2 * rho + 1;
    // Spatial weights depend only on the offset; one table per call.
    let inv_gd2 = 1.0 / (params.gamma_d * params.gamma_d);
    let spatial: Vec<f64> = (0..side * side)
        .map(|i| {
            let dy = (i / side) as f64 - rho as f64;
            let dx = (i % side) as f64 - rho as f64;
            (-(dx * dx + dy * dy) * inv_gd2).exp()
        })
        .collect();
    // Range weights depend only on |i(x,y) - i(u,v)| <= 255.
    let inv_gr2 = 1.0 / (params.gamma_r * params.gamma_r);
    let range: Vec<f64> = (0..256)
        .map(|di| {
            let di = di as f64;
            (-di * di * inv_gr2).exp()
        })
        .collect();

    let mut out = CostVolume::new_invalid(w, h, volume.d_max())?;
    out.data
        .par_chunks_mut(w * h)
        .enumerate()
        .for_each(|(d, out_slice)| {
            let in_slice = volume.slice(d);
            // Split validity out of the hot loop: invalid entries carry a
            // zero mask and a zero stand-in value, so every window does the
            // same multiply-add work and invalid neighbours add nothing to
            // either sum.
            let clean: Vec<f64> = in_slice
                .iter()
                .map(|&c| if c.is_nan() { 0.0 } else { c })
                .collect();
            let mask: Vec<f64> = in_slice
                .iter()
                .map(|&c| if c.is_nan() { 0.0 } else { 1.0 })
                .collect();
            for v in 0..h {
                let y0 = v.saturating_sub(rho);
                let y1 = (v + rho).min(h - 1);
                for u in 0..w {
                    let x0 = u.saturating_sub(rho);
                    let x1 = (u + rho).min(w - 1);
                    let center = guide.get(u, v) as i32;
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for y in y0..=y1 {
                        let wrow = &spatial[(y + rho - v) * side..];
                        let guide_row = guide.row(y);
                        let clean_row = &clean[y * w..];
                        let mask_row = &mask[y * w..];
                        for x in x0..=x1 {
                            let di = (guide_row[x] as i32 - center).unsigned_abs() as usize;
                            let wgt = wrow[x + rho - u] * range[di] * mask_row[x];
                            num += wgt * clean_row[x];
                            den += wgt;
                        }
                    }
                    if den >= WEIGHT_SUM_MIN {
                        out_slice[v * w + u] = num / den;
                    }
                }
            }
        });

    Ok(out)
}
