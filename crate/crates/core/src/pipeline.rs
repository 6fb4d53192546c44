//! End-to-end matching pipeline: warp, cost volumes, bilateral aggregation,
//! WTA, consistency check, subpixel refinement, shift restoration. Also the
//! parameter-sweep benchmark built on top of it.

use std::time::{Duration, Instant};

use crate::aggregate::{aggregate_volume, BilateralParams};
use crate::costs::{compute_cost_volumes_masked, CostVolume, NccParams};
use crate::disparity::{lr_consistency, postprocess, subpixel_refine, wta};
use crate::error::Result;
use crate::image::{DisparityMap, GrayImage, Mask};
use crate::recon::mde_per_second;
use crate::transform::{warp_target, RoadModel};

/// Everything the matching stages need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub ncc: NccParams,
    pub bilateral: BilateralParams,
    /// Left-right consistency tolerance on the integer maps, pixels.
    pub lr_tolerance: f64,
    /// Retain the raw cost volumes in the output (for dumps).
    pub keep_cost_volumes: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            ncc: NccParams::new(3, 20),
            bilateral: BilateralParams::default(),
            lr_tolerance: 0.0,
            keep_cost_volumes: false,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        self.ncc.validate()?;
        self.bilateral.validate()?;
        if !(self.lr_tolerance >= 0.0) {
            return Err(crate::error::Error::Parameter(
                "lr tolerance must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Wall time of each stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub warp: Duration,
    pub costs: Duration,
    pub aggregate: Duration,
    pub wta: Duration,
    pub consistency: Duration,
    pub subpixel: Duration,
    pub postprocess: Duration,
    pub total: Duration,
}

impl StageTimings {
    pub fn stages(&self) -> [(&'static str, Duration); 7] {
        [
            ("warp", self.warp),
            ("costs", self.costs),
            ("aggregate", self.aggregate),
            ("wta", self.wta),
            ("consistency", self.consistency),
            ("subpixel", self.subpixel),
            ("postprocess", self.postprocess),
        ]
    }
}

#[derive(Debug)]
pub struct MatchOutput {
    /// Post-processed subpixel disparity map in reference coordinates.
    pub disparity: DisparityMap,
    pub warped_target: GrayImage,
    pub warp_mask: Mask,
    pub timings: StageTimings,
    /// Throughput of the whole run, millions of disparity evaluations per second.
    pub mde_per_s: f64,
    /// Raw (pre-aggregation) volumes when requested.
    pub raw_reference: Option<CostVolume>,
    pub raw_target: Option<CostVolume>,
}

/// Runs the full matching chain on a rectified pair.
///
/// `model` is the road disparity model used for the perspective
/// transformation; [`RoadModel::identity`] matches without warping.
pub fn run_match(
    left: &GrayImage,
    right: &GrayImage,
    model: &RoadModel,
    params: &MatchParams,
) -> Result<MatchOutput> {
    params.validate()?;
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let (warped, warp_mask) = warp_target(right, model)?;
    timings.warp = t.elapsed();

    let t = Instant::now();
    let (raw_ref, raw_tar) =
        compute_cost_volumes_masked(left, &warped, Some(&warp_mask), &params.ncc)?;
    timings.costs = t.elapsed();

    let t = Instant::now();
    let agg_ref = aggregate_volume(&raw_ref, left, &params.bilateral)?;
    let agg_tar = aggregate_volume(&raw_tar, &warped, &params.bilateral)?;
    timings.aggregate = t.elapsed();

    let (raw_reference, raw_target) = if params.keep_cost_volumes {
        (Some(raw_ref), Some(raw_tar))
    } else {
        drop(raw_ref);
        drop(raw_tar);
        (None, None)
    };

    let t = Instant::now();
    let ref_map = wta(&agg_ref);
    let tar_map = wta(&agg_tar);
    timings.wta = t.elapsed();

    let t = Instant::now();
    let consistent = lr_consistency(&ref_map, &tar_map, params.lr_tolerance)?;
    timings.consistency = t.elapsed();

    let t = Instant::now();
    let refined = subpixel_refine(&consistent, &agg_ref);
    timings.subpixel = t.elapsed();

    let t = Instant::now();
    let disparity = postprocess(&refined, model);
    timings.postprocess = t.elapsed();

    timings.total = start.elapsed();
    let mde_per_s = mde_per_second(
        left.width(),
        left.height(),
        params.ncc.d_max,
        timings.total.as_secs_f64(),
    )?;

    Ok(MatchOutput {
        disparity,
        warped_target: warped,
        warp_mask,
        timings,
        mde_per_s,
        raw_reference,
        raw_target,
    })
}

/// One measured configuration of the benchmark sweep.
#[derive(Debug)]
pub struct BenchRow {
    pub rho_block: usize,
    pub rho_agg: usize,
    pub seconds: f64,
    pub mde_per_s: f64,
    pub disparity: DisparityMap,
}

/// Runs the pipeline over the cross product of block and aggregation radii.
/// With `reps > 1` the grid is repeated as whole rounds and each
/// configuration reports its minimum, which estimates the uncontended
/// runtime: scheduling noise and throttling bursts only ever add time, and
/// round-robin ordering keeps a burst from poisoning every repetition of
/// one configuration.
pub fn bench_sweep(
    left: &GrayImage,
    right: &GrayImage,
    model: &RoadModel,
    base: &MatchParams,
    rho_blocks: &[usize],
    rho_aggs: &[usize],
    reps: usize,
) -> Result<Vec<BenchRow>> {
    let reps = reps.max(1);
    let mut rows: Vec<BenchRow> = Vec::with_capacity(rho_blocks.len() * rho_aggs.len());
    for round in 0..reps {
        let mut index = 0;
        for &rho_block in rho_blocks {
            for &rho_agg in rho_aggs {
                let params = MatchParams {
                    ncc: NccParams {
                        rho_block,
                        ..base.ncc
                    },
                    bilateral: BilateralParams {
                        rho_agg,
                        ..base.bilateral
                    },
                    keep_cost_volumes: false,
                    ..*base
                };
                let out = run_match(left, right, model, &params)?;
                let seconds = out.timings.total.as_secs_f64();
                if round == 0 {
                    rows.push(BenchRow {
                        rho_block,
                        rho_agg,
                        seconds,
                        mde_per_s: 0.0,
                        disparity: out.disparity,
                    });
                } else if seconds < rows[index].seconds {
                    rows[index].seconds = seconds;
                }
                index += 1;
            }
        }
    }
    for row in &mut rows {
        row.mde_per_s =
            mde_per_second(left.width(), left.height(), base.ncc.d_max, row.seconds)?;
    }
    Ok(rows)
}

/// CSV encoding of a sweep: `rho_block,rho_agg,seconds,mde_per_s`.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("rho_block,rho_agg,seconds,mde_per_s\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.9},{:.4}\n",
            r.rho_block, r.rho_agg, r.seconds, r.mde_per_s
        ));
    }
    out
}
