//! Raster containers shared by every pipeline stage.
//!
//! All rasters are row-major with the origin at the top-left corner, x
//! growing rightward and y downward, matching the PGM/PFM file layout.

use crate::error::{Error, Result};

/// 8-bit single-channel image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    /// All-zero image. Dimensions must be at least 1x1.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![0; width * height],
        })
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "pixel buffer holds {} bytes, expected {}x{}={}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Horizontal linear interpolation at real-valued column `x`.
    /// Returns `None` when `x` falls outside `[0, width-1]`.
    pub fn sample_row(&self, x: f64, y: usize) -> Option<f64> {
        if !(0.0..=(self.width - 1) as f64).contains(&x) {
            return None;
        }
        let x0 = x.floor() as usize;
        let frac = x - x0 as f64;
        let a = self.get(x0, y) as f64;
        if frac == 0.0 {
            return Some(a);
        }
        let b = self.get(x0 + 1, y) as f64;
        Some(a + frac * (b - a))
    }
}

/// Boolean per-pixel mask (validity, occlusion).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![value; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Render as an 8-bit image, set pixels white.
    pub fn to_gray(&self) -> GrayImage {
        let data = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage::from_vec(self.width, self.height, data).expect("mask dims are valid")
    }

    /// Any non-zero pixel counts as set.
    pub fn from_gray(image: &GrayImage) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            data: image.as_slice().iter().map(|&p| p > 0).collect(),
        }
    }
}

/// Rectangular pixel region, `x..x+width` by `y..y+height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    /// Clip to an image of the given size.
    pub fn clipped(&self, width: usize, height: usize) -> Rect {
        let x = self.x.min(width);
        let y = self.y.min(height);
        Rect {
            x,
            y,
            width: self.width.min(width - x),
            height: self.height.min(height - y),
        }
    }
}

/// Summed-area table over a real-valued raster.
///
/// The table has one extra row and column of zeros, so the sum over any
/// axis-aligned rectangle is four lookups.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl IntegralImage {
    /// Builds the running-sum table of `values` (row-major, `width` x `height`).
    pub fn build(values: &[f64], width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "raster holds {} values, expected {}",
                values.len(),
                width * height
            )));
        }
        let tw = width + 1;
        let mut table = vec![0.0; tw * (height + 1)];
        for y in 0..height {
            let mut row_sum = 0.0;
            for x in 0..width {
                row_sum += values[y * width + x];
                table[(y + 1) * tw + x + 1] = table[y * tw + x + 1] + row_sum;
            }
        }
        Ok(Self {
            width,
            height,
            table,
        })
    }

    pub fn from_gray(image: &GrayImage) -> Self {
        let values: Vec<f64> = image.as_slice().iter().map(|&p| p as f64).collect();
        Self::build(&values, image.width(), image.height()).expect("image dims are valid")
    }

    /// Table of squared intensities, for block variances.
    pub fn from_gray_squared(image: &GrayImage) -> Self {
        let values: Vec<f64> = image
            .as_slice()
            .iter()
            .map(|&p| (p as f64) * (p as f64))
            .collect();
        Self::build(&values, image.width(), image.height()).expect("image dims are valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Raw table entry S(x, y); S(0, y) = S(x, 0) = 0.
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.table[y * (self.width + 1) + x]
    }

    /// Sum over the half-open rectangle `[x0, x1) x [y0, y1)`.
    #[inline]
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        debug_assert!(x0 <= x1 && x1 <= self.width && y0 <= y1 && y1 <= self.height);
        let tw = self.width + 1;
        self.table[y1 * tw + x1] - self.table[y0 * tw + x1] - self.table[y1 * tw + x0]
            + self.table[y0 * tw + x0]
    }
}

/// Per-pixel real-valued disparities; NaN marks an invalid pixel.
///
/// Values are kept in double precision in memory; the PFM interchange
/// format narrows them to single precision.
#[derive(Debug, Clone)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DisparityMap {
    /// Map with every pixel invalid.
    pub fn new_invalid(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![f64::NAN; width * height],
        })
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "disparity buffer holds {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn set_invalid(&mut self, x: usize, y: usize) {
        self.data[y * self.width + x] = f64::NAN;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        !self.data[y * self.width + x].is_nan()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| !d.is_nan()).count()
    }

    /// 8-bit visualisation: `scale * d` clamped to [0, 255], invalid pixels black.
    pub fn to_gray(&self, scale: f64) -> GrayImage {
        let data = self
            .data
            .iter()
            .map(|&d| {
                if d.is_nan() {
                    0
                } else {
                    (scale * d).clamp(0.0, 255.0).round() as u8
                }
            })
            .collect();
        GrayImage::from_vec(self.width, self.height, data).expect("map dims are valid")
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension(format!(
            "empty raster ({width}x{height})"
        )));
    }
    Ok(())
}
