//! Synthetic-scene oracle: renders rectified stereo pairs of a textured
//! planar road with optional box obstacles, together with the exact
//! disparity map and an occlusion mask.
//!
//! World frame: the left camera sits at the origin with y pointing down and
//! z forward along the road; the optical axis is pitched down by the rig's
//! `theta`. The road is the horizontal plane `n y + beta = 0` and boxes are
//! axis-aligned cuboids resting on it. Ground-truth disparities of road
//! pixels are written as `alpha0 + alpha1 * v` from the rig model itself,
//! so the generator and the estimator share one definition of truth.
//!
//! The right view is rendered by inverse warping the left image with linear
//! interpolation (the same kernel the matcher uses), falling back to direct
//! texture evaluation where the left view cannot see the surface.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{DisparityMap, GrayImage, Mask};
use crate::kv::{parse_f64_list, KvFile};
use crate::transform::{alpha_from_rig, CameraRig};

/// A cuboid obstacle resting on the road plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSpec {
    /// Footprint centre on the plane, world x/z, metres.
    pub cx: f64,
    pub cz: f64,
    /// Footprint extent, metres.
    pub width: f64,
    pub length: f64,
    /// Height above the plane, metres.
    pub height: f64,
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub rig: CameraRig,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Additive Gaussian intensity noise, standard deviation in levels.
    pub noise_sigma: f64,
    pub boxes: Vec<BoxSpec>,
    /// Base wavelength of the procedural texture along world x / z, metres.
    pub texture_scale_x: f64,
    pub texture_scale_z: f64,
}

impl SceneSpec {
    pub fn new(rig: CameraRig, width: usize, height: usize) -> Self {
        Self {
            rig,
            width,
            height,
            seed: 1,
            noise_sigma: 0.0,
            boxes: Vec::new(),
            texture_scale_x: 0.5,
            texture_scale_z: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::Parameter("scene image size must be at least 1x1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Parameter("noise_sigma must be >= 0".into()));
        }
        if !(self.texture_scale_x > 0.0 && self.texture_scale_z > 0.0) {
            return Err(Error::Parameter("texture scales must be > 0".into()));
        }
        if self.rig.plane_n == 0.0 {
            return Err(Error::Scene("plane normal component is zero".into()));
        }
        let h_plane = -self.rig.plane_beta / self.rig.plane_n;
        if !(h_plane > 0.0) {
            return Err(Error::Scene(
                "road plane is not below the camera (plane behind or above)".into(),
            ));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if !(b.height > 0.0) {
                return Err(Error::Scene(format!("box {i}: height must be > 0")));
            }
            if b.height >= h_plane {
                return Err(Error::Scene(format!(
                    "box {i}: height {} reaches the camera height {h_plane}",
                    b.height
                )));
            }
            if !(b.width > 0.0 && b.length > 0.0) {
                return Err(Error::Scene(format!("box {i}: footprint must be positive")));
            }
        }
        Ok(())
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let rig = CameraRig::from_kv(kv)?;
        let mut spec = Self::new(rig, kv.usize_or("width", 640)?, kv.usize_or("height", 480)?);
        spec.seed = kv.u64_or("seed", 1)?;
        spec.noise_sigma = kv.f64_or("noise_sigma", 0.0)?;
        spec.texture_scale_x = kv.f64_or("texture_scale_x", 0.5)?;
        spec.texture_scale_z = kv.f64_or("texture_scale_z", 1.0)?;
        for raw in kv.get_all("box") {
            let vals = parse_f64_list("box", raw, 5)?;
            spec.boxes.push(BoxSpec {
                cx: vals[0],
                cz: vals[1],
                width: vals[2],
                length: vals[3],
                height: vals[4],
            });
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv_text(&self) -> String {
        let mut out = self.rig.to_kv_text();
        out.push_str(&format!(
            "width = {}\nheight = {}\nseed = {}\nnoise_sigma = {}\n\
             texture_scale_x = {}\ntexture_scale_z = {}\n",
            self.width,
            self.height,
            self.seed,
            self.noise_sigma,
            self.texture_scale_x,
            self.texture_scale_z
        ));
        for b in &self.boxes {
            out.push_str(&format!(
                "box = {},{},{},{},{}\n",
                b.cx, b.cz, b.width, b.length, b.height
            ));
        }
        out
    }
}

/// What a pixel of the left view looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    /// The ray misses every surface.
    Sky,
    Road,
    BoxTop,
    BoxSide,
}

/// Output of [`render_pair`].
#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub left: GrayImage,
    pub right: GrayImage,
    /// Exact reference-view disparities; sky pixels are invalid.
    pub gt_disparity: DisparityMap,
    /// Set where the reference pixel is hidden from the right view
    /// (including projections that leave the right frame).
    pub occlusion: Mask,
    surfaces: Vec<Surface>,
    width: usize,
}

impl RenderedScene {
    pub fn surface(&self, x: usize, y: usize) -> Surface {
        self.surfaces[y * self.width + x]
    }
}

struct Aabb {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    z0: f64,
    z1: f64,
}

struct Tracer {
    f: f64,
    u0: f64,
    v0: f64,
    tc: f64,
    sin_t: f64,
    cos_t: f64,
    h_plane: f64,
    boxes: Vec<Aabb>,
    seed: u64,
    scale_x: f64,
    scale_z: f64,
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    /// Depth along the camera optical axis (camera-frame z).
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    surface: Surface,
}

impl Tracer {
    fn new(spec: &SceneSpec) -> Self {
        let h_plane = -spec.rig.plane_beta / spec.rig.plane_n;
        let (sin_t, cos_t) = spec.rig.theta.sin_cos();
        let boxes = spec
            .boxes
            .iter()
            .map(|b| Aabb {
                x0: b.cx - b.width / 2.0,
                x1: b.cx + b.width / 2.0,
                y0: h_plane - b.height,
                y1: h_plane,
                z0: b.cz - b.length / 2.0,
                z1: b.cz + b.length / 2.0,
            })
            .collect();
        Self {
            f: spec.rig.f,
            u0: spec.rig.u0,
            v0: spec.rig.v0,
            tc: spec.rig.tc,
            sin_t,
            cos_t,
            h_plane,
            boxes,
            seed: spec.seed,
            scale_x: spec.texture_scale_x,
            scale_z: spec.texture_scale_z,
        }
    }

    /// World-frame ray direction through pixel (u, v), scaled so that the
    /// ray parameter equals camera-frame depth.
    fn ray(&self, u: f64, v: f64) -> (f64, f64, f64) {
        let xc = (u - self.u0) / self.f;
        let yc = (v - self.v0) / self.f;
        (
            xc,
            yc * self.cos_t + self.sin_t,
            -yc * self.sin_t + self.cos_t,
        )
    }

    /// Nearest surface along the ray from camera x-offset `ox`.
    fn first_hit(&self, ox: f64, dir: (f64, f64, f64)) -> Option<Hit> {
        let (dx, dy, dz) = dir;
        let mut best: Option<Hit> = None;
        if dy > 1e-12 {
            let t = self.h_plane / dy;
            best = Some(Hit {
                t,
                x: ox + t * dx,
                y: self.h_plane,
                z: t * dz,
                surface: Surface::Road,
            });
        }
        for b in &self.boxes {
            if let Some(t) = slab_entry(b, (ox, 0.0, 0.0), dir) {
                if best.as_ref().is_none_or(|h| t < h.t) {
                    let y = t * dy;
                    let surface = if (y - b.y0).abs() < 1e-9 {
                        Surface::BoxTop
                    } else {
                        Surface::BoxSide
                    };
                    best = Some(Hit {
                        t,
                        x: ox + t * dx,
                        y,
                        z: t * dz,
                        surface,
                    });
                }
            }
        }
        best
    }

    /// Band-limited procedural texture of a world point, in [30, 225].
    /// Vertical faces stay textured through the y-dependent shear.
    ///
    /// Most of the energy sits in the quarter-wavelength octave so matching
    /// blocks see strong contrast; the finest octave stays small so that
    /// linear resampling reproduces the signal within one intensity level.
    fn texture(&self, x: f64, y: f64, z: f64) -> f64 {
        let tx = (x + 0.37 * y) / self.scale_x;
        let tz = (z + 0.73 * y) / self.scale_z;
        const AMPS: [f64; 4] = [0.3, 0.6, 1.0, 0.08];
        let mut acc = 0.0;
        for (octave, &amp) in AMPS.iter().enumerate() {
            let s = (1u32 << octave) as f64;
            acc += amp
                * value_noise(
                    tx * s,
                    tz * s,
                    self.seed.wrapping_add(octave as u64),
                );
        }
        30.0 + 195.0 * (acc / AMPS.iter().sum::<f64>())
    }
}

/// Entry parameter of a ray into an axis-aligned box, if it hits.
fn slab_entry(b: &Aabb, origin: (f64, f64, f64), dir: (f64, f64, f64)) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for (o, d, lo, hi) in [
        (origin.0, dir.0, b.x0, b.x1),
        (origin.1, dir.1, b.y0, b.y1),
        (origin.2, dir.2, b.z0, b.z1),
    ] {
        if d.abs() < 1e-15 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let (t0, t1) = ((lo - o) / d, (hi - o) / d);
        let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
        if t_enter > t_exit {
            return None;
        }
    }
    (t_enter > 0.0).then_some(t_enter)
}

/// Deterministic lattice value in [0, 1), hashed from the cell and seed.
fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h = (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ seed.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Smoothly interpolated value noise in [0, 1].
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let ix = x.floor();
    let iy = y.floor();
    let fx = x - ix;
    let fy = y - iy;
    let (ix, iy) = (ix as i64, iy as i64);
    let wx = fx * fx * (3.0 - 2.0 * fx);
    let wy = fy * fy * (3.0 - 2.0 * fy);
    let v00 = lattice(ix, iy, seed);
    let v10 = lattice(ix + 1, iy, seed);
    let v01 = lattice(ix, iy + 1, seed);
    let v11 = lattice(ix + 1, iy + 1, seed);
    let top = v00 + wx * (v10 - v00);
    let bottom = v01 + wx * (v11 - v01);
    top + wy * (bottom - top)
}

/// Renders the stereo pair, exact disparity map, and occlusion mask.
pub fn render_pair(spec: &SceneSpec) -> Result<RenderedScene> {
    spec.validate()?;
    let tracer = Tracer::new(spec);
    let (w, h) = (spec.width, spec.height);
    let (alpha0, alpha1) = alpha_from_rig(&spec.rig)?;

    // Left view: surface, exact disparity, depth, and intensity per pixel.
    let mut left = vec![0u8; w * h];
    let mut gt = vec![f64::NAN; w * h];
    let mut depth = vec![f64::NAN; w * h];
    let mut surfaces = vec![Surface::Sky; w * h];
    left.par_chunks_mut(w)
        .zip(gt.par_chunks_mut(w))
        .zip(depth.par_chunks_mut(w))
        .zip(surfaces.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (((left_row, gt_row), depth_row), surf_row))| {
            for u in 0..w {
                let dir = tracer.ray(u as f64, v as f64);
                if let Some(hit) = tracer.first_hit(0.0, dir) {
                    // Road truth is the rig's own linear model, exactly.
                    gt_row[u] = match hit.surface {
                        Surface::Road => alpha0 + alpha1 * v as f64,
                        _ => tracer.f * tracer.tc / hit.t,
                    };
                    depth_row[u] = hit.t;
                    surf_row[u] = hit.surface;
                    left_row[u] = tracer.texture(hit.x, hit.y, hit.z).round() as u8;
                }
            }
        });

    // Occlusion: a left pixel is hidden from the right view when the right
    // camera sees a nearer surface along the matching ray, or when the
    // match leaves the right frame.
    let mut occluded = vec![false; w * h];
    occluded
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(v, occ_row)| {
            for u in 0..w {
                let d = gt[v * w + u];
                if d.is_nan() {
                    continue;
                }
                let xr = u as f64 - d;
                if !(0.0..=(w - 1) as f64).contains(&xr) {
                    occ_row[u] = true;
                    continue;
                }
                let expected_t = depth[v * w + u];
                let hit = tracer.first_hit(tracer.tc, tracer.ray(xr, v as f64));
                match hit {
                    Some(hit) if hit.t >= expected_t * (1.0 - 1e-6) => {}
                    _ => occ_row[u] = true,
                }
            }
        });

    let left_image = GrayImage::from_vec(w, h, left)?;

    // Right view: inverse-warp the left image where the surface is visible
    // there, otherwise evaluate the texture directly.
    let mut right = vec![0u8; w * h];
    right
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(v, right_row)| {
            for ur in 0..w {
                let dir = tracer.ray(ur as f64, v as f64);
                let Some(hit) = tracer.first_hit(tracer.tc, dir) else {
                    continue;
                };
                let d = tracer.f * tracer.tc / hit.t;
                let xl = ur as f64 + d;
                let from_left = if xl <= (w - 1) as f64 {
                    match tracer.first_hit(0.0, tracer.ray(xl, v as f64)) {
                        Some(left_hit) if (left_hit.t - hit.t).abs() <= 1e-6 * hit.t => {
                            left_image.sample_row(xl, v)
                        }
                        _ => None,
                    }
                } else {
                    None
                };
                right_row[ur] = match from_left {
                    Some(value) => value.round() as u8,
                    None => tracer.texture(hit.x, hit.y, hit.z).round() as u8,
                };
            }
        });
    let mut right_image = GrayImage::from_vec(w, h, right)?;

    let mut left_image = left_image;
    if spec.noise_sigma > 0.0 {
        add_noise(&mut left_image, spec.noise_sigma, spec.seed.wrapping_add(0x4C));
        add_noise(&mut right_image, spec.noise_sigma, spec.seed.wrapping_add(0x52));
    }

    let mut occlusion = Mask::new(w, h, false)?;
    for y in 0..h {
        for x in 0..w {
            occlusion.set(x, y, occluded[y * w + x]);
        }
    }

    Ok(RenderedScene {
        left: left_image,
        right: right_image,
        gt_disparity: DisparityMap::from_vec(w, h, gt)?,
        occlusion,
        surfaces,
        width: w,
    })
}

/// Additive Gaussian noise, quantised and clamped; one sequential stream so
/// the result only depends on the seed.
fn add_noise(image: &mut GrayImage, sigma: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (image.width(), image.height());
    let mut spare: Option<f64> = None;
    for y in 0..h {
        for x in 0..w {
            let g = match spare.take() {
                Some(g) => g,
                None => {
                    // Box-Muller from two uniforms.
                    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                    let u2: f64 = rng.random();
                    let r = (-2.0 * u1.ln()).sqrt();
                    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
                    spare = Some(r * s);
                    r * c
                }
            };
            let noisy = image.get(x, y) as f64 + sigma * g;
            image.set(x, y, noisy.clamp(0.0, 255.0).round() as u8);
        }
    }
}
