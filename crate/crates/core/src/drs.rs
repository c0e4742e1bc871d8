//! Feature extraction in a dual-resolution space.
//!
//! Both images are first decimated by the rate `N` and matched at low
//! resolution; the matches roughly outline where the two images overlap.
//! Squares of side `max(N², 64)` are then cut around the matched keypoints,
//! scaled back to full resolution, and features are extracted only inside
//! those squares. Each square is detected with a context margin around it so
//! that keypoints near its border keep their full description support; only
//! keypoints inside the square itself are kept. The full-resolution detector
//! therefore touches a small fraction of each image.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{
    detect_and_describe_with, match_features, octave_count, Feature, FeatureMatch, SiftConfig,
    DEFAULT_RATIO, MIN_DETECT_SIDE,
};
use crate::image::{Image, Rect};
use crate::imaging::{check_rate, downsample, RateCheck};
use crate::sliceset::union_area;
use crate::transform::Point;

/// Fewest low-resolution matches that count as a located overlap.
pub const MIN_LOWRES_MATCHES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DrsConfig {
    /// Downsampling denominator `N`.
    pub rate: usize,
    pub seed: u64,
    pub ratio: f64,
    pub rate_check: RateCheck,
    /// Stop incising once the detection regions (squares plus context)
    /// cover this fraction of an image.
    pub max_square_coverage: f64,
    /// Context margin around each square; `None` uses half the side.
    pub context_margin: Option<usize>,
    pub sift: SiftConfig,
}

impl Default for DrsConfig {
    fn default() -> Self {
        DrsConfig {
            rate: 4,
            seed: 0,
            ratio: DEFAULT_RATIO,
            rate_check: RateCheck::Enforce,
            max_square_coverage: 0.3,
            context_margin: None,
            sift: SiftConfig::default(),
        }
    }
}

impl DrsConfig {
    pub fn with_rate(rate: usize) -> Self {
        DrsConfig {
            rate,
            ..Default::default()
        }
    }

    /// Side of each incised square: `max(N², 64)` pixels.
    pub fn square_side(&self) -> usize {
        (self.rate * self.rate).max(64)
    }

    pub fn margin(&self) -> usize {
        self.context_margin.unwrap_or(self.square_side() / 2)
    }
}

/// `rect` grown by `margin` on every side, clipped to `dims`.
pub fn context_rect(rect: Rect, margin: usize, dims: (usize, usize)) -> Rect {
    let x0 = rect.x0.saturating_sub(margin);
    let y0 = rect.y0.saturating_sub(margin);
    let x1 = (rect.x1() + margin).min(dims.0);
    let y1 = (rect.y1() + margin).min(dims.1);
    Rect::new(x0, y0, x1 - x0, y1 - y0)
}

/// Octaves for a detection crop: as many as keep the smallest level at
/// least 64 px, but never more than plain detection on the host image.
pub fn crop_octaves(crop: (usize, usize), host: (usize, usize)) -> usize {
    (octave_count(crop.0, crop.1) + 1)
        .min(octave_count(host.0, host.1))
        .max(1)
}

/// Low-resolution features and their ratio-test matches, in low-res pixels.
#[derive(Debug, Clone)]
pub struct LowResMatches {
    pub features1: Vec<Feature>,
    pub features2: Vec<Feature>,
    pub matches: Vec<FeatureMatch>,
}

impl LowResMatches {
    /// Matched keypoint positions `(p1, p2)` in low-res coordinates.
    pub fn point_pairs(&self) -> Vec<(Point, Point)> {
        self.matches
            .iter()
            .map(|m| {
                (
                    self.features1[m.query].position,
                    self.features2[m.train].position,
                )
            })
            .collect()
    }
}

/// Incised squares; `fixed[i]` and `moving[i]` come from the same match.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Squares {
    pub fixed: Vec<Rect>,
    pub moving: Vec<Rect>,
}

impl Squares {
    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct DrsOutput {
    /// Full-resolution features of the fixed image, in full-image coordinates.
    pub features1: Vec<Feature>,
    pub features2: Vec<Feature>,
    pub lowres: LowResMatches,
    pub squares: Squares,
    pub elapsed_ms: f64,
}

/// Maps a low-res pixel coordinate to the center of its `n x n` source block.
pub fn lowres_to_full(p: Point, rate: usize) -> Point {
    let n = rate as f64;
    Point::new((p.x + 0.5) * n - 0.5, (p.y + 0.5) * n - 0.5)
}

/// Decimates both images by `N` and matches their features.
pub fn demarcate_superposition(i1: &Image, i2: &Image, cfg: &DrsConfig) -> Result<LowResMatches> {
    if cfg.rate_check == RateCheck::Enforce {
        check_rate(i1.min_dim().min(i2.min_dim()), cfg.rate)?;
    }
    let (low1, low2) = rayon::join(
        || downsample(i1, cfg.rate, cfg.rate_check),
        || downsample(i2, cfg.rate, cfg.rate_check),
    );
    let (low1, low2) = (low1?, low2?);
    let (f1, f2) = rayon::join(
        || detect_and_describe_with(&low1, &cfg.sift),
        || detect_and_describe_with(&low2, &cfg.sift),
    );
    let (features1, features2) = (f1?, f2?);
    let matches = match_features(&features1, &features2, cfg.ratio);
    if matches.len() < MIN_LOWRES_MATCHES {
        return Err(Error::TooFewMatches {
            found: matches.len(),
            needed: MIN_LOWRES_MATCHES,
        });
    }
    Ok(LowResMatches {
        features1,
        features2,
        matches,
    })
}

/// Places one square per low-res match in each image, in seeded random
/// order. A square is skipped when its center lies within `side / 2` of an
/// already accepted square in either image, or when clipping leaves it
/// smaller than the detector minimum. Incision stops once the accepted
/// squares, with their context margins, cover `max_square_coverage` of
/// either image.
pub fn incise_squares(
    lowres: &LowResMatches,
    size1: (usize, usize),
    size2: (usize, usize),
    cfg: &DrsConfig,
) -> Squares {
    let side = cfg.square_side();
    let half = side as f64 / 2.0;
    let mut pairs = lowres.point_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    pairs.shuffle(&mut rng);

    let budget1 = cfg.max_square_coverage * (size1.0 * size1.1) as f64;
    let budget2 = cfg.max_square_coverage * (size2.0 * size2.1) as f64;
    let margin = cfg.margin();
    let mut context1 = Vec::new();
    let mut context2 = Vec::new();
    let mut out = Squares::default();
    let mut centers: Vec<(Point, Point)> = Vec::new();
    for (p1, p2) in pairs {
        let (c1, c2) = (lowres_to_full(p1, cfg.rate), lowres_to_full(p2, cfg.rate));
        if centers
            .iter()
            .any(|(a, b)| a.distance(c1) < half || b.distance(c2) < half)
        {
            continue;
        }
        let (Some(r1), Some(r2)) = (
            Rect::centered_clipped(c1, side, size1.0, size1.1),
            Rect::centered_clipped(c2, side, size2.0, size2.1),
        ) else {
            continue;
        };
        if r1.width.min(r1.height) < MIN_DETECT_SIDE || r2.width.min(r2.height) < MIN_DETECT_SIDE {
            continue;
        }
        centers.push((c1, c2));
        out.fixed.push(r1);
        out.moving.push(r2);
        context1.push(context_rect(r1, margin, size1));
        context2.push(context_rect(r2, margin, size2));
        if union_area(&context1) as f64 >= budget1 || union_area(&context2) as f64 >= budget2 {
            break;
        }
    }
    out
}

/// Runs the detector on every square grown by `margin` and returns the
/// features whose keypoint lies inside the square, in full-image
/// coordinates, concatenated in square order. A feature found again in an
/// overlapping square is kept only once.
pub fn extract_in_squares(img: &Image, squares: &[Rect], sift: &SiftConfig, margin: usize) -> Vec<Feature> {
    let host = (img.width(), img.height());
    let per_square: Vec<Vec<Feature>> = squares
        .par_iter()
        .map(|&rect| {
            if rect.width.min(rect.height) < MIN_DETECT_SIDE {
                return Vec::new();
            }
            let ctx = context_rect(rect, margin, host);
            let cfg = SiftConfig {
                octaves: Some(crop_octaves((ctx.width, ctx.height), host)),
                ..sift.clone()
            };
            detect_and_describe_with(&img.crop(ctx), &cfg)
                .map(|fs| {
                    fs.into_iter()
                        .map(|f| f.translated(ctx.x0 as f64, ctx.y0 as f64))
                        .filter(|f| rect.contains_point(f.position))
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();
    let mut out: Vec<Feature> = Vec::new();
    for f in per_square.into_iter().flatten() {
        let duplicate = out.iter().any(|g| {
            g.position.distance_sq(f.position) < 0.25
                && (g.scale - f.scale).abs() < 0.05 * f.scale
                && angle_diff(g.orientation, f.orientation) < 0.1
        });
        if !duplicate {
            out.push(f);
        }
    }
    out
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

/// Full-resolution extraction restricted to the incised squares.
pub fn extract_original_resolution(
    i1: &Image,
    i2: &Image,
    squares: &Squares,
    lowres: LowResMatches,
    cfg: &DrsConfig,
) -> DrsOutput {
    let (features1, features2) = rayon::join(
        || extract_in_squares(i1, &squares.fixed, &cfg.sift, cfg.margin()),
        || extract_in_squares(i2, &squares.moving, &cfg.sift, cfg.margin()),
    );
    DrsOutput {
        features1,
        features2,
        lowres,
        squares: squares.clone(),
        elapsed_ms: 0.0,
    }
}

/// Matches full-resolution features only between related squares: features
/// inside `fixed[i]` are compared with features inside `moving[i]`. Indices
/// refer to `out.features1` / `out.features2`; a pair found through several
/// overlapping squares is reported once.
pub fn match_in_squares(out: &DrsOutput, ratio: f64) -> Vec<FeatureMatch> {
    let members = |feats: &[Feature], r: &Rect| -> Vec<usize> {
        (0..feats.len())
            .filter(|&i| r.contains_point(feats[i].position))
            .collect()
    };
    let per_square: Vec<Vec<FeatureMatch>> = out
        .squares
        .fixed
        .par_iter()
        .zip(&out.squares.moving)
        .map(|(r1, r2)| {
            let idx1 = members(&out.features1, r1);
            let idx2 = members(&out.features2, r2);
            let f1: Vec<Feature> = idx1.iter().map(|&i| out.features1[i].clone()).collect();
            let f2: Vec<Feature> = idx2.iter().map(|&i| out.features2[i].clone()).collect();
            match_features(&f1, &f2, ratio)
                .into_iter()
                .map(|m| FeatureMatch {
                    query: idx1[m.query],
                    train: idx2[m.train],
                    ..m
                })
                .collect()
        })
        .collect();
    let mut seen = std::collections::HashSet::new();
    per_square
        .into_iter()
        .flatten()
        .filter(|m| seen.insert((m.query, m.train)))
        .collect()
}

/// The whole dual-resolution pipeline.
pub fn run_drs(i1: &Image, i2: &Image, cfg: &DrsConfig) -> Result<DrsOutput> {
    let start = Instant::now();
    let lowres = demarcate_superposition(i1, i2, cfg)?;
    if cfg.rate == 1 {
        // The low-res space is the original one; its features are final.
        return Ok(DrsOutput {
            features1: lowres.features1.clone(),
            features2: lowres.features2.clone(),
            squares: Squares {
                fixed: vec![i1.bounds()],
                moving: vec![i2.bounds()],
            },
            lowres,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    let squares = incise_squares(
        &lowres,
        (i1.width(), i1.height()),
        (i2.width(), i2.height()),
        cfg,
    );
    let mut out = extract_original_resolution(i1, i2, &squares, lowres, cfg);
    out.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}
