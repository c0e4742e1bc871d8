//! Synthetic test scenes and speckled image pairs with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::transform::{AffineTransform, Point};

/// Minimum fraction of the moving frame that must be covered by the warped source.
pub const MIN_OVERLAP: f64 = 0.25;

/// Recipe for a synthetic registration pair.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub source: Image,
    /// Maps fixed-image coordinates to moving-image coordinates.
    pub truth: AffineTransform,
    /// Equivalent number of looks of the gamma speckle; larger is cleaner.
    pub looks: u32,
    pub seed: u64,
    /// Optional `(gain, bias)` applied to the moving image before speckle,
    /// for stress-testing radiometric differences between acquisitions.
    pub gain_bias: Option<(f64, f64)>,
}

impl SynthSpec {
    pub fn new(source: Image, truth: AffineTransform, looks: u32, seed: u64) -> Self {
        SynthSpec {
            source,
            truth,
            looks,
            seed,
            gain_bias: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthPair {
    pub fixed: Image,
    pub moving: Image,
    pub truth: AffineTransform,
    /// `true` where a moving-image pixel has a preimage inside the source.
    pub valid: Vec<bool>,
}

impl SynthPair {
    pub fn overlap_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }
}

/// Unit-mean gamma speckle field with `looks` degrees of freedom.
pub fn speckle_field(width: usize, height: usize, looks: u32, rng: &mut impl Rng) -> Vec<f64> {
    let l = looks as f64;
    let gamma = Gamma::new(l, 1.0 / l).expect("looks >= 1 gives a valid gamma law");
    (0..width * height).map(|_| gamma.sample(rng)).collect()
}

/// Multiplies `img` pixelwise by fresh speckle.
pub fn apply_speckle(img: &Image, looks: u32, rng: &mut impl Rng) -> Image {
    let field = speckle_field(img.width(), img.height(), looks, rng);
    let data = img.data().iter().zip(field).map(|(v, s)| v * s).collect();
    Image::from_raw(img.width(), img.height(), data)
}

/// Resamples `source` into a `width x height` frame so that
/// `out(H p) = source(p)`. Pixels without a preimage are 0 and flagged invalid.
pub fn warp_image(
    source: &Image,
    h: &AffineTransform,
    width: usize,
    height: usize,
) -> Result<(Image, Vec<bool>)> {
    let inv = h.invert()?;
    let mut data = vec![0.0; width * height];
    let mut valid = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            let p = inv.apply(Point::new(x as f64, y as f64));
            if let Some(v) = source.sample_bilinear(p) {
                data[y * width + x] = v;
                valid[y * width + x] = true;
            }
        }
    }
    Ok((Image::from_raw(width, height, data), valid))
}

/// Builds `(I1, I2, H_true)` with `I1 = source ⊙ s1` and
/// `I2 = warp(source, H_true) ⊙ s2`, `s1, s2` i.i.d. unit-mean gamma speckle.
pub fn synth_pair(spec: &SynthSpec) -> Result<SynthPair> {
    if spec.looks == 0 {
        return Err(Error::InvalidInput("speckle looks must be >= 1".into()));
    }
    let (w, h) = (spec.source.width(), spec.source.height());
    let (mut warped, valid) = warp_image(&spec.source, &spec.truth, w, h)?;
    let overlap = valid.iter().filter(|&&v| v).count() as f64 / valid.len() as f64;
    if overlap < MIN_OVERLAP {
        return Err(Error::InsufficientOverlap { overlap });
    }
    if let Some((gain, bias)) = spec.gain_bias {
        warped = warped.map(|v| gain * v + bias);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fixed = apply_speckle(&spec.source, spec.looks, &mut rng);
    let moving = apply_speckle(&warped, spec.looks, &mut rng);
    Ok(SynthPair {
        fixed,
        moving,
        truth: spec.truth,
        valid,
    })
}

/// Deterministic textured scene in `[0.05, 0.95]`: multi-octave value noise,
/// piecewise-constant fields with sharp borders, and bright point-like
/// scatterers. Rich enough in blobs and corners for scale-space detectors.
pub fn textured_scene(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; width * height];

    for (cell, amp) in [(96.0, 0.5), (48.0, 0.35), (24.0, 0.25), (12.0, 0.15), (6.0, 0.1)] {
        add_value_noise(&mut data, width, height, cell, amp, &mut rng);
    }

    let n_fields = (width * height / 12_000).max(4);
    for _ in 0..n_fields {
        let fw = rng.random_range(10.0..90.0f64);
        let fh = rng.random_range(10.0..90.0f64);
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let level = rng.random_range(-0.8..0.8f64);
        let (x0, x1) = ((cx - fw / 2.0).max(0.0) as usize, ((cx + fw / 2.0) as usize).min(width));
        let (y0, y1) = ((cy - fh / 2.0).max(0.0) as usize, ((cy + fh / 2.0) as usize).min(height));
        for y in y0..y1 {
            for v in &mut data[y * width + x0..y * width + x1] {
                *v += level;
            }
        }
    }

    let n_blobs = (width * height / 800).max(8);
    for _ in 0..n_blobs {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let s = rng.random_range(1.2..5.0f64);
        let amp = rng.random_range(0.6..1.6f64) * if rng.random_bool(0.6) { 1.0 } else { -1.0 };
        let r = (3.0 * s).ceil() as isize;
        for dy in -r..=r {
            let y = cy as isize + dy;
            if y < 0 || y >= height as isize {
                continue;
            }
            for dx in -r..=r {
                let x = cx as isize + dx;
                if x < 0 || x >= width as isize {
                    continue;
                }
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                data[y as usize * width + x as usize] += amp * (-d2 / (2.0 * s * s)).exp();
            }
        }
    }

    // Robust contrast stretch: the 1st..99th percentile maps onto [0.05, 0.95].
    let mut sorted = data.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[sorted.len() / 100];
    let hi = sorted[sorted.len() - 1 - sorted.len() / 100];
    let span = (hi - lo).max(1e-12);
    data.iter_mut()
        .for_each(|v| *v = (0.05 + 0.9 * (*v - lo) / span).clamp(0.05, 0.95));
    Image::from_raw(width, height, data)
}

fn add_value_noise(
    data: &mut [f64],
    width: usize,
    height: usize,
    cell: f64,
    amp: f64,
    rng: &mut impl Rng,
) {
    let gw = (width as f64 / cell).ceil() as usize + 2;
    let gh = (height as f64 / cell).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random_range(-1.0..1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    for y in 0..height {
        let gy = y as f64 / cell;
        let iy = gy as usize;
        let ty = smooth(gy - iy as f64);
        for x in 0..width {
            let gx = x as f64 / cell;
            let ix = gx as usize;
            let tx = smooth(gx - ix as f64);
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(ix, iy) + tx * (g(ix + 1, iy) - g(ix, iy));
            let bot = g(ix, iy + 1) + tx * (g(ix + 1, iy + 1) - g(ix, iy + 1));
            data[y * width + x] += amp * (top + ty * (bot - top));
        }
    }
}
