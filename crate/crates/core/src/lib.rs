//! Stereo matching and 3-D reconstruction of road surfaces from rectified
//! image pairs.
//!
//! The pipeline transforms the target view with a road-plane disparity
//! model, computes NCC cost volumes accelerated by precomputed block
//! statistics, aggregates them with an edge-preserving bilateral filter,
//! optimises by winner-take-all with a left-right consistency check,
//! refines to subpixel resolution by parabola interpolation, and finally
//! triangulates the disparities into a metric point cloud.
//!
//! A synthetic-scene generator with exact ground truth ([`synth`]) makes
//! the whole chain quantitatively testable without hardware.
//!
//! ```no_run
//! use road_stereo::{pipeline, synth, transform};
//!
//! # fn main() -> Result<(), road_stereo::Error> {
//! let spec = synth::SceneSpec::from_kv(&road_stereo::kv::KvFile::parse("\
//!     f = 500\nu0 = 320\nv0 = 240\ntc = 0.12\ntheta = 0.75\nplane_beta = 1.2\n\
//! ")?)?;
//! let scene = synth::render_pair(&spec)?;
//! let matches = transform::match_sparse(
//!     &scene.left,
//!     &scene.right,
//!     &transform::SparseMatcherParams::default(),
//! )?;
//! let model = transform::fit_road_model(
//!     &matches,
//!     &transform::RansacParams::default(),
//!     scene.left.height(),
//!     10.0,
//! )?;
//! let out = pipeline::run_match(
//!     &scene.left,
//!     &scene.right,
//!     &model,
//!     &pipeline::MatchParams::default(),
//! )?;
//! println!("{:.1} Mde/s", out.mde_per_s);
//! # Ok(())
//! # }
//! ```

pub mod aggregate;
pub mod costs;
pub mod disparity;
mod error;
pub mod image;
pub mod kv;
pub mod pipeline;
pub mod pnm;
pub mod recon;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};
pub use image::{DisparityMap, GrayImage, IntegralImage, Mask, Rect};
