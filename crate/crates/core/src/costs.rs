//! NCC matching costs over all (u, v, d), stored in dual cost volumes.
//!
//! Block means and standard deviations are precomputed once from integral
//! images of `i` and `i^2`, so the per-candidate inner loop reduces to the
//! raw dot product of the two blocks:
//!
//! `c(u,v,d) = (sum i_l(x,y) i_r(x-d,y) - n mu_l mu_r) / (n sigma_l sigma_r)`
//!
//! The same cost is stored at `(u,v,d)` in the reference volume and at
//! `(u-d,v,d)` in the target volume.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{GrayImage, IntegralImage, Mask};

/// Block-matching configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NccParams {
    /// Half window of the correlation block; the block is `(2*rho+1)^2`.
    pub rho_block: usize,
    /// Largest disparity searched, inclusive.
    pub d_max: usize,
    /// Blocks with a standard deviation below this are treated as
    /// textureless and produce invalid costs.
    pub sigma_min: f64,
}

impl NccParams {
    pub fn new(rho_block: usize, d_max: usize) -> Self {
        Self {
            rho_block,
            d_max,
            sigma_min: 0.5,
        }
    }

    /// Pixels per block, `n = (2*rho+1)^2`.
    pub fn n_pixels(&self) -> usize {
        let side = 2 * self.rho_block + 1;
        side * side
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho_block == 0 {
            return Err(Error::Parameter("rho_block must be >= 1".into()));
        }
        if self.d_max == 0 {
            return Err(Error::Parameter("d_max must be >= 1".into()));
        }
        if !(self.sigma_min >= 0.0) {
            return Err(Error::Parameter("sigma_min must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-pixel block mean and standard deviation tables; NaN outside the band
/// where the full block fits.
#[derive(Debug, Clone)]
pub struct BlockStats {
    width: usize,
    height: usize,
    rho: usize,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl BlockStats {
    pub fn rho(&self) -> usize {
        self.rho
    }

    #[inline]
    pub fn mu(&self, x: usize, y: usize) -> f64 {
        self.mu[y * self.width + x]
    }

    #[inline]
    pub fn sigma(&self, x: usize, y: usize) -> f64 {
        self.sigma[y * self.width + x]
    }

    /// True where the block around (x, y) lies fully inside the image.
    pub fn is_interior(&self, x: usize, y: usize) -> bool {
        x >= self.rho && x + self.rho < self.width && y >= self.rho && y + self.rho < self.height
    }
}

/// Block means and standard deviations via the two integral images.
pub fn compute_block_stats(image: &GrayImage, params: &NccParams) -> Result<BlockStats> {
    params.validate()?;
    let rho = params.rho_block;
    let side = 2 * rho + 1;
    let (w, h) = (image.width(), image.height());
    if w < side || h < side {
        return Err(Error::Dimension(format!(
            "image {w}x{h} smaller than the {side}x{side} block"
        )));
    }
    let sums = IntegralImage::from_gray(image);
    let sq_sums = IntegralImage::from_gray_squared(image);
    let n = (side * side) as f64;

    let mut mu = vec![f64::NAN; w * h];
    let mut sigma = vec![f64::NAN; w * h];
    mu.par_chunks_mut(w)
        .zip(sigma.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (mu_row, sigma_row))| {
            if y < rho || y + rho >= h {
                return;
            }
            let (y0, y1) = (y - rho, y + rho + 1);
            for x in rho..w - rho {
                let (x0, x1) = (x - rho, x + rho + 1);
                let m = sums.rect_sum(x0, y0, x1, y1) / n;
                let var = (sq_sums.rect_sum(x0, y0, x1, y1) / n - m * m).max(0.0);
                mu_row[x] = m;
                sigma_row[x] = var.sqrt();
            }
        });

    Ok(BlockStats {
        width: w,
        height: h,
        rho,
        mu,
        sigma,
    })
}

/// Dense 3-D array of matching costs over (u, v, d); NaN marks invalid
/// entries. Stored as one contiguous `width x height` plane per disparity.
#[derive(Debug, Clone)]
pub struct CostVolume {
    width: usize,
    height: usize,
    d_max: usize,
    pub(crate) data: Vec<f64>,
}

impl CostVolume {
    /// Volume with every entry invalid.
    pub fn new_invalid(width: usize, height: usize, d_max: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("empty volume ({width}x{height})")));
        }
        let len = d_max
            .checked_add(1)
            .and_then(|slices| width.checked_mul(height)?.checked_mul(slices))
            .ok_or_else(|| Error::Dimension("cost volume dimensions overflow".into()))?;
        Ok(Self {
            width,
            height,
            d_max,
            data: vec![f64::NAN; len],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, d: usize) -> f64 {
        self.data[(d * self.height + v) * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, d: usize, c: f64) {
        self.data[(d * self.height + v) * self.width + u] = c;
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize, d: usize) -> bool {
        !self.get(u, v, d).is_nan()
    }

    pub fn slice(&self, d: usize) -> &[f64] {
        let plane = self.width * self.height;
        &self.data[d * plane..(d + 1) * plane]
    }

    pub fn slice_mut(&mut self, d: usize) -> &mut [f64] {
        let plane = self.width * self.height;
        &mut self.data[d * plane..(d + 1) * plane]
    }

    pub fn slices_mut(&mut self) -> rayon::slice::ChunksMut<'_, f64> {
        self.data.par_chunks_mut(self.width * self.height)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Raw debugging dump: ASCII `width height dmax` line, then the payload
    /// slice-major in little-endian single precision.
    pub fn write_dump(&self) -> Vec<u8> {
        let mut out = format!("{} {} {}\n", self.width, self.height, self.d_max).into_bytes();
        out.reserve(self.data.len() * 4);
        for &c in &self.data {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        out
    }

    pub fn read_dump(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("missing dump header".into()))?;
        let header = std::str::from_utf8(&bytes[..newline])
            .map_err(|_| Error::Format("non-ASCII dump header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!(
                "dump header has {} fields, expected `width height dmax`",
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Format(format!("unparsable dump field {s:?}")))
        };
        let (width, height, d_max) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
        if width == 0 || height == 0 {
            return Err(Error::Format("empty dump dimensions".into()));
        }
        let len = d_max
            .checked_add(1)
            .and_then(|slices| width.checked_mul(height)?.checked_mul(slices))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("dump dimensions overflow".into()))?;
        let payload = &bytes[newline + 1..];
        if payload.len() != len {
            return Err(Error::Format(format!(
                "dump payload holds {} bytes, expected {len}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|w| f32::from_le_bytes(w.try_into().expect("chunked by 4")) as f64)
            .collect();
        Ok(Self {
            width,
            height,
            d_max,
            data,
        })
    }
}

/// Computes the reference and target NCC cost volumes for a rectified pair.
pub fn compute_cost_volumes(
    left: &GrayImage,
    right: &GrayImage,
    params: &NccParams,
) -> Result<(CostVolume, CostVolume)> {
    compute_cost_volumes_masked(left, right, None, params)
}

/// As [`compute_cost_volumes`], additionally treating right-image pixels
/// cleared in `right_valid` as out-of-image (a warped target carries such a
/// band where the source row left the frame); any block touching them
/// produces an invalid cost.
pub fn compute_cost_volumes_masked(
    left: &GrayImage,
    right: &GrayImage,
    right_valid: Option<&Mask>,
    params: &NccParams,
) -> Result<(CostVolume, CostVolume)> {
    params.validate()?;
    let (w, h) = (left.width(), left.height());
    if right.width() != w || right.height() != h {
        return Err(Error::Dimension(format!(
            "image sizes differ: {w}x{h} vs {}x{}",
            right.width(),
            right.height()
        )));
    }
    if let Some(mask) = right_valid {
        if mask.width() != w || mask.height() != h {
            return Err(Error::Dimension("mask size differs from images".into()));
        }
    }
    let left_stats = compute_block_stats(left, params)?;
    let right_stats = compute_block_stats(right, params)?;

    let rho = params.rho_block;
    let side = 2 * rho + 1;
    let n = params.n_pixels() as f64;

    // Integral image of the invalid-pixel indicator: a right block is usable
    // only when it contains no invalid pixel.
    let invalid_counts = right_valid.map(|mask| {
        let indicator: Vec<f64> = (0..h)
            .flat_map(|y| (0..w).map(move |x| if mask.get(x, y) { 0.0 } else { 1.0 }))
            .collect();
        IntegralImage::build(&indicator, w, h).expect("mask dims are valid")
    });

    let mut ref_vol = CostVolume::new_invalid(w, h, params.d_max)?;
    let mut tar_vol = CostVolume::new_invalid(w, h, params.d_max)?;

    ref_vol
        .data
        .par_chunks_mut(w * h)
        .zip(tar_vol.data.par_chunks_mut(w * h))
        .enumerate()
        .for_each(|(d, (ref_slice, tar_slice))| {
            for v in rho..h - rho {
                let u_lo = rho + d;
                for u in u_lo..w - rho {
                    let ur = u - d;
                    let sigma_l = left_stats.sigma(u, v);
                    let sigma_r = right_stats.sigma(ur, v);
                    if sigma_l < params.sigma_min || sigma_r < params.sigma_min {
                        continue;
                    }
                    if let Some(inv) = &invalid_counts {
                        if inv.rect_sum(ur - rho, v - rho, ur + rho + 1, v + rho + 1) > 0.5 {
                            continue;
                        }
                    }
                    let mut dot = 0u32;
                    for dy in 0..side {
                        let y = v + dy - rho;
                        let l_row = &left.row(y)[u - rho..u + rho + 1];
                        let r_row = &right.row(y)[ur - rho..ur + rho + 1];
                        for (lp, rp) in l_row.iter().zip(r_row) {
                            dot += *lp as u32 * *rp as u32;
                        }
                    }
                    let c = (dot as f64 - n * left_stats.mu(u, v) * right_stats.mu(ur, v))
                        / (n * sigma_l * sigma_r);
                    let c = c.clamp(-1.0, 1.0);
                    ref_slice[v * w + u] = c;
                    tar_slice[v * w + ur] = c;
                }
            }
        });

    Ok((ref_vol, tar_vol))
}
