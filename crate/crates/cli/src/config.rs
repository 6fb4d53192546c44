//! Run configuration: defaults, a flat `key = value` file, and flag
//! overrides, in that order of precedence (flags win).

use road_stereo::aggregate::BilateralParams;
use road_stereo::costs::NccParams;
use road_stereo::kv::KvFile;
use road_stereo::pipeline::MatchParams;
use road_stereo::transform::{RansacParams, SparseMatcherParams};
use road_stereo::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub rho_block: usize,
    pub rho_agg: usize,
    pub gamma_d: f64,
    pub gamma_r: f64,
    /// Search range; when absent from file and flags it follows the margin,
    /// `d_max = 2 * d_margin`.
    pub d_max: usize,
    pub d_margin: f64,
    pub sigma_min: f64,
    pub lr_tolerance: f64,
    pub d_min: f64,
    pub ransac_iterations: usize,
    pub ransac_threshold: f64,
    pub ransac_min_consensus: f64,
    pub ransac_seed: u64,
    /// Worker threads; 0 = hardware parallelism.
    pub threads: usize,
    /// Linear scaling for 8-bit disparity visualisations.
    pub vis_scale: f64,
    pub matcher_grid: usize,
    pub matcher_half_window: usize,
    pub matcher_min_correlation: f64,
    pub matcher_min_sigma: f64,
}

impl Default for Config {
    fn default() -> Self {
        let ncc = NccParams::new(3, 20);
        let bilateral = BilateralParams::default();
        let ransac = RansacParams::default();
        let matcher = SparseMatcherParams::default();
        Self {
            rho_block: ncc.rho_block,
            rho_agg: bilateral.rho_agg,
            gamma_d: bilateral.gamma_d,
            gamma_r: bilateral.gamma_r,
            d_max: ncc.d_max,
            d_margin: 10.0,
            sigma_min: ncc.sigma_min,
            lr_tolerance: 0.0,
            d_min: 1.0,
            ransac_iterations: ransac.iterations,
            ransac_threshold: ransac.inlier_threshold,
            ransac_min_consensus: ransac.min_consensus_frac,
            ransac_seed: ransac.seed,
            threads: 0,
            vis_scale: 8.0,
            matcher_grid: matcher.grid_step,
            matcher_half_window: matcher.half_window,
            matcher_min_correlation: matcher.min_correlation,
            matcher_min_sigma: matcher.min_sigma,
        }
    }
}

/// Flag overrides collected by the argument parser; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub rho_block: Option<usize>,
    pub rho_agg: Option<usize>,
    pub gamma_d: Option<f64>,
    pub gamma_r: Option<f64>,
    pub d_max: Option<usize>,
    pub delta_margin: Option<f64>,
    pub lr_tolerance: Option<f64>,
    pub d_min: Option<f64>,
    pub ransac_seed: Option<u64>,
    pub vis_scale: Option<f64>,
}

impl Config {
    /// Defaults, then file keys, then flags. `d_max` tracks `2 * d_margin`
    /// until set explicitly.
    pub fn resolve(file: Option<&str>, over: &Overrides) -> Result<Self> {
        let mut cfg = Config::default();
        let mut d_max_explicit = false;
        if let Some(text) = file {
            let kv = KvFile::parse(text)?;
            for (key, _) in kv.pairs() {
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    return Err(Error::Parameter(format!("unknown config key `{key}`")));
                }
            }
            cfg.rho_block = kv.usize_or("rho_block", cfg.rho_block)?;
            cfg.rho_agg = kv.usize_or("rho_agg", cfg.rho_agg)?;
            cfg.gamma_d = kv.f64_or("gamma_d", cfg.gamma_d)?;
            cfg.gamma_r = kv.f64_or("gamma_r", cfg.gamma_r)?;
            cfg.d_margin = kv.f64_or("d_margin", cfg.d_margin)?;
            if kv.get("d_max").is_some() {
                cfg.d_max = kv.usize_or("d_max", cfg.d_max)?;
                d_max_explicit = true;
            }
            cfg.sigma_min = kv.f64_or("sigma_min", cfg.sigma_min)?;
            cfg.lr_tolerance = kv.f64_or("lr_tolerance", cfg.lr_tolerance)?;
            cfg.d_min = kv.f64_or("d_min", cfg.d_min)?;
            cfg.ransac_iterations = kv.usize_or("ransac_iterations", cfg.ransac_iterations)?;
            cfg.ransac_threshold = kv.f64_or("ransac_threshold", cfg.ransac_threshold)?;
            cfg.ransac_min_consensus =
                kv.f64_or("ransac_min_consensus", cfg.ransac_min_consensus)?;
            cfg.ransac_seed = kv.u64_or("ransac_seed", cfg.ransac_seed)?;
            cfg.threads = kv.usize_or("threads", cfg.threads)?;
            cfg.vis_scale = kv.f64_or("vis_scale", cfg.vis_scale)?;
            cfg.matcher_grid = kv.usize_or("matcher_grid", cfg.matcher_grid)?;
            cfg.matcher_half_window =
                kv.usize_or("matcher_half_window", cfg.matcher_half_window)?;
            cfg.matcher_min_correlation =
                kv.f64_or("matcher_min_correlation", cfg.matcher_min_correlation)?;
            cfg.matcher_min_sigma = kv.f64_or("matcher_min_sigma", cfg.matcher_min_sigma)?;
        }
        if let Some(v) = over.delta_margin {
            cfg.d_margin = v;
        }
        if let Some(v) = over.d_max {
            cfg.d_max = v;
            d_max_explicit = true;
        }
        if !d_max_explicit {
            cfg.d_max = (2.0 * cfg.d_margin).round().max(1.0) as usize;
        }
        if let Some(v) = over.rho_block {
            cfg.rho_block = v;
        }
        if let Some(v) = over.rho_agg {
            cfg.rho_agg = v;
        }
        if let Some(v) = over.gamma_d {
            cfg.gamma_d = v;
        }
        if let Some(v) = over.gamma_r {
            cfg.gamma_r = v;
        }
        if let Some(v) = over.lr_tolerance {
            cfg.lr_tolerance = v;
        }
        if let Some(v) = over.d_min {
            cfg.d_min = v;
        }
        if let Some(v) = over.ransac_seed {
            cfg.ransac_seed = v;
        }
        if let Some(v) = over.vis_scale {
            cfg.vis_scale = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.match_params().validate()?;
        self.ransac_params().validate()?;
        if !(self.d_margin >= 0.0) {
            return Err(Error::Parameter("d_margin must be >= 0".into()));
        }
        if !(self.d_min > 0.0) {
            return Err(Error::Parameter("d_min must be > 0".into()));
        }
        if !(self.vis_scale > 0.0) {
            return Err(Error::Parameter("vis_scale must be > 0".into()));
        }
        if self.matcher_grid == 0 || self.matcher_half_window == 0 {
            return Err(Error::Parameter(
                "matcher_grid and matcher_half_window must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn match_params(&self) -> MatchParams {
        MatchParams {
            ncc: NccParams {
                rho_block: self.rho_block,
                d_max: self.d_max,
                sigma_min: self.sigma_min,
            },
            bilateral: BilateralParams {
                rho_agg: self.rho_agg,
                gamma_d: self.gamma_d,
                gamma_r: self.gamma_r,
            },
            lr_tolerance: self.lr_tolerance,
            keep_cost_volumes: false,
        }
    }

    pub fn ransac_params(&self) -> RansacParams {
        RansacParams {
            iterations: self.ransac_iterations,
            inlier_threshold: self.ransac_threshold,
            min_consensus_frac: self.ransac_min_consensus,
            seed: self.ransac_seed,
        }
    }

    pub fn matcher_params(&self) -> SparseMatcherParams {
        SparseMatcherParams {
            grid_step: self.matcher_grid,
            half_window: self.matcher_half_window,
            min_correlation: self.matcher_min_correlation,
            min_sigma: self.matcher_min_sigma,
        }
    }

    pub fn to_kv_text(&self) -> String {
        format!(
            "rho_block = {}\nrho_agg = {}\ngamma_d = {}\ngamma_r = {}\nd_max = {}\n\
             d_margin = {}\nsigma_min = {}\nlr_tolerance = {}\nd_min = {}\n\
             ransac_iterations = {}\nransac_threshold = {}\nransac_min_consensus = {}\n\
             ransac_seed = {}\nthreads = {}\nvis_scale = {}\nmatcher_grid = {}\n\
             matcher_half_window = {}\nmatcher_min_correlation = {}\nmatcher_min_sigma = {}\n",
            self.rho_block,
            self.rho_agg,
            self.gamma_d,
            self.gamma_r,
            self.d_max,
            self.d_margin,
            self.sigma_min,
            self.lr_tolerance,
            self.d_min,
            self.ransac_iterations,
            self.ransac_threshold,
            self.ransac_min_consensus,
            self.ransac_seed,
            self.threads,
            self.vis_scale,
            self.matcher_grid,
            self.matcher_half_window,
            self.matcher_min_correlation,
            self.matcher_min_sigma,
        )
    }
}

const KNOWN_KEYS: [&str; 19] = [
    "rho_block",
    "rho_agg",
    "gamma_d",
    "gamma_r",
    "d_max",
    "d_margin",
    "sigma_min",
    "lr_tolerance",
    "d_min",
    "ransac_iterations",
    "ransac_threshold",
    "ransac_min_consensus",
    "ransac_seed",
    "threads",
    "vis_scale",
    "matcher_grid",
    "matcher_half_window",
    "matcher_min_correlation",
    "matcher_min_sigma",
];
