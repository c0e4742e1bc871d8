//! End-to-end registration: DRS features, matching, RANSAC initialization,
//! slice selection, then optimization of the regularized slice objective.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::drs::{match_in_squares, run_drs, DrsConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::imaging::{gaussian_blur, RateCheck};
use crate::initializer::{ransac_affine, RansacConfig};
use crate::optimizer::{solve, ObjectiveConfig, RegistrationResult};
use crate::sliceset::{build_candidates, select, SliceSet};
use crate::transform::{AffineTransform, Point};

/// Every tunable of the pipeline. Serialized as a flat JSON object; missing
/// fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Downsampling denominator `N`.
    pub rate: usize,
    /// Target slice-set proportion.
    pub proportion: f64,
    pub lambda: f64,
    pub max_gen: usize,
    pub seed: u64,
    pub ratio: f64,
    pub slice_size: usize,
    pub ransac_iterations: usize,
    pub ransac_threshold: f64,
    pub ransac_min_inliers: usize,
    /// Refuse rates that leave fewer than 128 low-res pixels per side.
    pub enforce_rate_bound: bool,
    /// Gaussian pre-filter applied before feature extraction; 0 disables.
    pub feature_smoothing: f64,
    /// Gaussian pre-filter applied before the area optimization; 0 disables.
    pub area_smoothing: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let ransac = RansacConfig::default();
        let objective = ObjectiveConfig::default();
        PipelineConfig {
            rate: 4,
            proportion: 0.05,
            lambda: objective.lambda,
            max_gen: objective.max_generations,
            seed: 0,
            ratio: 0.8,
            slice_size: 256,
            ransac_iterations: ransac.max_iterations,
            ransac_threshold: ransac.threshold,
            ransac_min_inliers: ransac.min_inliers,
            enforce_rate_bound: true,
            feature_smoothing: 1.5,
            area_smoothing: 2.0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.rate == 0 {
            return bad("rate must be >= 1".into());
        }
        if !(self.proportion > 0.0 && self.proportion <= 1.0) {
            return bad(format!("proportion must lie in (0, 1], got {}", self.proportion));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return bad(format!("ratio must lie in (0, 1), got {}", self.ratio));
        }
        if self.slice_size == 0 {
            return bad("slice size must be >= 1".into());
        }
        if !(self.feature_smoothing >= 0.0) || !(self.area_smoothing >= 0.0) {
            return bad("smoothing sigmas must be >= 0".into());
        }
        self.objective().validate()
    }

    pub fn drs(&self) -> DrsConfig {
        DrsConfig {
            rate: self.rate,
            seed: self.seed,
            ratio: self.ratio,
            rate_check: if self.enforce_rate_bound {
                RateCheck::Enforce
            } else {
                RateCheck::Skip
            },
            ..DrsConfig::default()
        }
    }

    pub fn ransac(&self) -> RansacConfig {
        RansacConfig {
            max_iterations: self.ransac_iterations,
            threshold: self.ransac_threshold,
            min_inliers: self.ransac_min_inliers,
            seed: self.seed,
        }
    }

    pub fn objective(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            lambda: self.lambda,
            max_generations: self.max_gen,
            ..ObjectiveConfig::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub drs_ms: f64,
    pub matching_ms: f64,
    pub ransac_ms: f64,
    pub selection_ms: f64,
    pub optimization_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub transform: AffineTransform,
    /// RANSAC initialization `H₀`.
    pub initial: AffineTransform,
    pub slices: SliceSet,
    pub result: RegistrationResult,
    pub features: (usize, usize),
    pub matches: usize,
    pub inliers: usize,
    pub timings: Timings,
}

/// Matched full-resolution keypoint positions and the RANSAC fit on them.
#[derive(Debug, Clone)]
pub struct Initialization {
    pub pairs: Vec<(Point, Point)>,
    pub inliers: Vec<bool>,
    pub transform: AffineTransform,
    pub features: (usize, usize),
}

fn smoothed(i1: &Image, i2: &Image, sigma: f64) -> (Image, Image) {
    if sigma > 0.0 {
        rayon::join(|| gaussian_blur(i1, sigma), || gaussian_blur(i2, sigma))
    } else {
        (i1.clone(), i2.clone())
    }
}

/// DRS features on the pre-filtered pair, matched between related squares,
/// then RANSAC.
pub fn initialize(i1: &Image, i2: &Image, cfg: &PipelineConfig, timings: &mut Timings) -> Result<Initialization> {
    let t = Instant::now();
    let (s1, s2) = smoothed(i1, i2, cfg.feature_smoothing);
    let drs = run_drs(&s1, &s2, &cfg.drs())?;
    timings.drs_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let matches = match_in_squares(&drs, cfg.ratio);
    let pairs: Vec<(Point, Point)> = matches
        .iter()
        .map(|m| (drs.features1[m.query].position, drs.features2[m.train].position))
        .collect();
    timings.matching_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let fit = ransac_affine(&pairs, &cfg.ransac())?;
    timings.ransac_ms = t.elapsed().as_secs_f64() * 1e3;
    Ok(Initialization {
        pairs,
        inliers: fit.inliers,
        transform: fit.transform,
        features: (drs.features1.len(), drs.features2.len()),
    })
}

/// Registers `i2` onto `i1`; the returned transform maps fixed-image
/// coordinates to moving-image coordinates.
pub fn register(i1: &Image, i2: &Image, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let mut timings = Timings::default();
    let init = initialize(i1, i2, cfg, &mut timings)?;

    let t = Instant::now();
    let dims1 = (i1.width(), i1.height());
    let dims2 = (i2.width(), i2.height());
    let candidates = build_candidates(&init.pairs, &init.inliers, dims1, dims2, cfg.slice_size);
    let slices = select(&candidates, cfg.proportion, &init.transform, cfg.seed, dims1, dims2)?;
    timings.selection_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let (s1, s2) = smoothed(i1, i2, cfg.area_smoothing);
    let result = solve(&init.transform, &slices, &s1, &s2, &cfg.objective())?;
    timings.optimization_ms = t.elapsed().as_secs_f64() * 1e3;
    timings.total_ms = start.elapsed().as_secs_f64() * 1e3;

    Ok(PipelineOutput {
        transform: result.transform,
        initial: init.transform,
        slices,
        features: init.features,
        matches: init.pairs.len(),
        inliers: init.inliers.iter().filter(|&&v| v).count(),
        result,
        timings,
    })
}
