//! Scale-invariant keypoint detection and description.
//!
//! A difference-of-Gaussians pyramid with three scales per octave is searched
//! for 3-D extrema, which are refined to sub-pixel accuracy with a quadratic
//! fit, filtered for contrast and edge response, assigned dominant
//! orientations from a 36-bin gradient histogram and described by a 4x4x8
//! gradient histogram with trilinear binning.
//!
//! The input image is not upsampled: octave 0 runs at the native resolution,
//! so keypoint coordinates are directly in host-image pixels.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::imaging::gaussian_blur;
use crate::transform::Point;

pub const DESCRIPTOR_LEN: usize = 128;
/// Smallest image side accepted by the detector.
pub const MIN_DETECT_SIDE: usize = 64;

const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const ORI_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f64 = 1.5;
const ORI_RADIUS_FACTOR: f64 = 3.0 * ORI_SIGMA_FACTOR;
const ORI_PEAK_RATIO: f64 = 0.8;
const DESC_HIST_FACTOR: f64 = 3.0;
const DESC_CLAMP: f32 = 0.2;
const MAX_REFINE_STEPS: usize = 5;
const IMG_BORDER: usize = 5;

/// A described keypoint in host-image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub position: Point,
    /// Absolute Gaussian scale in host-image pixels.
    pub scale: f64,
    /// Dominant gradient orientation in `[0, 2π)`.
    pub orientation: f64,
    pub descriptor: [f32; DESCRIPTOR_LEN],
}

impl Feature {
    pub fn descriptor_distance(&self, other: &Feature) -> f32 {
        descriptor_distance_sq(&self.descriptor, &other.descriptor).sqrt()
    }

    /// Radius of the description region that must stay inside the image.
    pub fn region_radius(&self, cfg: &SiftConfig) -> f64 {
        cfg.min_region_radius * self.scale / cfg.sigma0
    }

    /// Same feature with its position shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Feature {
        Feature {
            position: Point::new(self.position.x + dx, self.position.y + dy),
            ..self.clone()
        }
    }
}

#[inline]
pub(crate) fn descriptor_distance_sq(a: &[f32; DESCRIPTOR_LEN], b: &[f32; DESCRIPTOR_LEN]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Detector parameters. Defaults follow the classic scale-invariant
/// feature transform settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftConfig {
    pub sigma0: f64,
    pub scales_per_octave: usize,
    /// Minimum `|D(x̂)|` of a refined extremum, for intensities in `[0, 1]`.
    pub contrast_threshold: f64,
    /// Principal-curvature ratio bound `r` of the edge test.
    pub edge_ratio: f64,
    /// Blur already present in the input image.
    pub assumed_blur: f64,
    /// Description-region radius at scale `sigma0`; grows linearly with scale.
    pub min_region_radius: f64,
    /// Octave count; `None` picks `max(1, floor(log2(min side)) - 6)`.
    pub octaves: Option<usize>,
}

impl Default for SiftConfig {
    fn default() -> Self {
        SiftConfig {
            sigma0: 1.6,
            scales_per_octave: 3,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            assumed_blur: 0.5,
            min_region_radius: 11.0,
            octaves: None,
        }
    }
}

/// Octave count keeping the smallest level at least 64 px wide.
pub fn octave_count(width: usize, height: usize) -> usize {
    let min = width.min(height).max(1);
    let log2 = usize::BITS as usize - 1 - min.leading_zeros() as usize;
    log2.saturating_sub(6).max(1)
}

/// Detects and describes features with the default configuration.
pub fn detect_and_describe(img: &Image) -> Result<Vec<Feature>> {
    detect_and_describe_with(img, &SiftConfig::default())
}

pub fn detect_and_describe_with(img: &Image, cfg: &SiftConfig) -> Result<Vec<Feature>> {
    let (w, h) = (img.width(), img.height());
    if w.min(h) < MIN_DETECT_SIDE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    let n_oct = cfg.octaves.unwrap_or_else(|| octave_count(w, h)).max(1);
    let pyramid = Pyramid::build(img, n_oct, cfg);

    let s = cfg.scales_per_octave;
    let jobs: Vec<(usize, usize)> = (0..pyramid.octaves.len())
        .flat_map(|o| (1..=s).map(move |l| (o, l)))
        .collect();
    let features: Vec<Feature> = jobs
        .par_iter()
        .map(|&(o, l)| pyramid.detect_layer(o, l, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .filter(|f| {
            let r = f.region_radius(cfg);
            f.position.x - r >= 0.0
                && f.position.y - r >= 0.0
                && f.position.x + r <= (w - 1) as f64
                && f.position.y + r <= (h - 1) as f64
        })
        .collect();
    Ok(features)
}

struct Octave {
    gauss: Vec<Image>,
    dog: Vec<Image>,
    /// Host pixels per octave pixel.
    step: f64,
}

struct Pyramid {
    octaves: Vec<Octave>,
}

impl Pyramid {
    fn build(img: &Image, n_oct: usize, cfg: &SiftConfig) -> Pyramid {
        let s = cfg.scales_per_octave;
        let k = 2f64.powf(1.0 / s as f64);
        // Incremental blur taking level i-1 to level i, relative to the octave.
        let incr: Vec<f64> = (1..s + 3)
            .map(|i| {
                let prev = cfg.sigma0 * k.powi(i as i32 - 1);
                let cur = prev * k;
                (cur * cur - prev * prev).sqrt()
            })
            .collect();
        let init = (cfg.sigma0 * cfg.sigma0 - cfg.assumed_blur * cfg.assumed_blur)
            .max(0.01)
            .sqrt();
        let mut base = gaussian_blur(img, init);
        let mut octaves = Vec::with_capacity(n_oct);
        for o in 0..n_oct {
            let mut gauss = Vec::with_capacity(s + 3);
            gauss.push(base);
            for &sigma in &incr {
                let next = gaussian_blur(gauss.last().unwrap(), sigma);
                gauss.push(next);
            }
            let dog: Vec<Image> = gauss
                .windows(2)
                .map(|pair| {
                    let data = pair[1]
                        .data()
                        .iter()
                        .zip(pair[0].data())
                        .map(|(a, b)| a - b)
                        .collect();
                    Image::from_raw(pair[0].width(), pair[0].height(), data)
                })
                .collect();
            let src = &gauss[s];
            let (nw, nh) = (src.width() / 2, src.height() / 2);
            base = if o + 1 < n_oct && nw > 2 * IMG_BORDER + 2 && nh > 2 * IMG_BORDER + 2 {
                Image::from_fn(nw, nh, |x, y| src.get(2 * x, 2 * y))
            } else {
                Image::filled(1, 1, 0.0)
            };
            octaves.push(Octave {
                gauss,
                dog,
                step: (1u64 << o) as f64,
            });
            if base.width() == 1 {
                break;
            }
        }
        Pyramid { octaves }
    }

    fn detect_layer(&self, o: usize, layer: usize, cfg: &SiftConfig) -> Vec<Feature> {
        let oct = &self.octaves[o];
        let dog = &oct.dog;
        let (w, h) = (dog[0].width(), dog[0].height());
        if w <= 2 * IMG_BORDER || h <= 2 * IMG_BORDER {
            return Vec::new();
        }
        let prelim = 0.5 * cfg.contrast_threshold;
        let mut out = Vec::new();
        let (prev, cur, next) = (&dog[layer - 1], &dog[layer], &dog[layer + 1]);
        for y in IMG_BORDER..h - IMG_BORDER {
            for x in IMG_BORDER..w - IMG_BORDER {
                let v = cur.get(x, y);
                if v.abs() <= prelim || !is_extremum(prev, cur, next, x, y, v) {
                    continue;
                }
                if let Some(kp) = refine(dog, x, y, layer, cfg) {
                    self.describe_keypoint(o, &kp, cfg, &mut out);
                }
            }
        }
        out
    }

    fn describe_keypoint(&self, o: usize, kp: &Refined, cfg: &SiftConfig, out: &mut Vec<Feature>) {
        let oct = &self.octaves[o];
        let s = cfg.scales_per_octave as f64;
        let sigma_oct = cfg.sigma0 * 2f64.powf((kp.layer as f64 + kp.offset[2]) / s);
        let gauss = &oct.gauss[kp.layer];
        let x = kp.x as f64 + kp.offset[0];
        let y = kp.y as f64 + kp.offset[1];
        let position = Point::new(x * oct.step, y * oct.step);
        let scale = sigma_oct * oct.step;
        for orientation in dominant_orientations(gauss, kp.x, kp.y, sigma_oct) {
            let descriptor = describe(gauss, x, y, sigma_oct, orientation);
            out.push(Feature {
                position,
                scale,
                orientation,
                descriptor,
            });
        }
    }
}

fn is_extremum(prev: &Image, cur: &Image, next: &Image, x: usize, y: usize, v: f64) -> bool {
    let is_max = v > 0.0;
    for img in [prev, cur, next] {
        for yy in y - 1..=y + 1 {
            let row = &img.row(yy)[x - 1..=x + 1];
            for &n in row {
                if (is_max && n > v) || (!is_max && n < v) {
                    return false;
                }
            }
        }
    }
    true
}

struct Refined {
    x: usize,
    y: usize,
    layer: usize,
    offset: [f64; 3],
}

fn refine(dog: &[Image], mut x: usize, mut y: usize, mut layer: usize, cfg: &SiftConfig) -> Option<Refined> {
    let s = cfg.scales_per_octave;
    let (w, h) = (dog[0].width(), dog[0].height());
    let mut offset = [0.0; 3];
    let mut grad = [0.0; 3];
    let mut converged = false;
    for _ in 0..MAX_REFINE_STEPS {
        let (p, c, n) = (&dog[layer - 1], &dog[layer], &dog[layer + 1]);
        let v = c.get(x, y);
        grad = [
            0.5 * (c.get(x + 1, y) - c.get(x - 1, y)),
            0.5 * (c.get(x, y + 1) - c.get(x, y - 1)),
            0.5 * (n.get(x, y) - p.get(x, y)),
        ];
        let dxx = c.get(x + 1, y) + c.get(x - 1, y) - 2.0 * v;
        let dyy = c.get(x, y + 1) + c.get(x, y - 1) - 2.0 * v;
        let dss = n.get(x, y) + p.get(x, y) - 2.0 * v;
        let dxy = 0.25
            * (c.get(x + 1, y + 1) - c.get(x - 1, y + 1) - c.get(x + 1, y - 1)
                + c.get(x - 1, y - 1));
        let dxs = 0.25 * (n.get(x + 1, y) - n.get(x - 1, y) - p.get(x + 1, y) + p.get(x - 1, y));
        let dys = 0.25 * (n.get(x, y + 1) - n.get(x, y - 1) - p.get(x, y + 1) + p.get(x, y - 1));
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let sol = solve3(&hess, &grad)?;
        offset = [-sol[0], -sol[1], -sol[2]];
        if offset.iter().all(|o| o.abs() < 0.5) {
            converged = true;
            break;
        }
        if offset.iter().any(|o| o.abs() > 1e3) {
            return None;
        }
        let nx = x as isize + offset[0].round() as isize;
        let ny = y as isize + offset[1].round() as isize;
        let nl = layer as isize + offset[2].round() as isize;
        if nl < 1
            || nl > s as isize
            || nx < IMG_BORDER as isize
            || ny < IMG_BORDER as isize
            || nx >= (w - IMG_BORDER) as isize
            || ny >= (h - IMG_BORDER) as isize
        {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        layer = nl as usize;
    }
    if !converged {
        return None;
    }
    let c = &dog[layer];
    let contrast = c.get(x, y) + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2]);
    if contrast.abs() < cfg.contrast_threshold {
        return None;
    }
    let v = c.get(x, y);
    let dxx = c.get(x + 1, y) + c.get(x - 1, y) - 2.0 * v;
    let dyy = c.get(x, y + 1) + c.get(x, y - 1) - 2.0 * v;
    let dxy =
        0.25 * (c.get(x + 1, y + 1) - c.get(x - 1, y + 1) - c.get(x + 1, y - 1) + c.get(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = cfg.edge_ratio;
    if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
        return None;
    }
    Some(Refined {
        x,
        y,
        layer,
        offset,
    })
}

/// Solves the symmetric 3x3 system `a * x = b` by Cramer's rule.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-18 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, slot) in out.iter_mut().enumerate() {
        let mut m = *a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *slot = det(&m) / d;
    }
    Some(out)
}

#[inline]
fn pixel_gradient(img: &Image, x: usize, y: usize) -> (f64, f64) {
    (
        img.get(x + 1, y) - img.get(x - 1, y),
        img.get(x, y + 1) - img.get(x, y - 1),
    )
}

fn dominant_orientations(img: &Image, x: usize, y: usize, sigma: f64) -> Vec<f64> {
    let radius = (ORI_RADIUS_FACTOR * sigma).round() as isize;
    let weight_denom = 2.0 * (ORI_SIGMA_FACTOR * sigma).powi(2);
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut hist = [0.0f64; ORI_BINS];
    for dy in -radius..=radius {
        let yy = y as isize + dy;
        if yy <= 0 || yy >= h - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let xx = x as isize + dx;
            if xx <= 0 || xx >= w - 1 {
                continue;
            }
            let (gx, gy) = pixel_gradient(img, xx as usize, yy as usize);
            let mag = gx.hypot(gy);
            let weight = (-((dx * dx + dy * dy) as f64) / weight_denom).exp();
            let angle = gy.atan2(gx).rem_euclid(2.0 * PI);
            let bin = ((angle * ORI_BINS as f64 / (2.0 * PI)).round() as usize) % ORI_BINS;
            hist[bin] += weight * mag;
        }
    }
    let n = ORI_BINS;
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let at = |d: isize| hist[(i as isize + d).rem_euclid(n as isize) as usize];
            (at(-2) + at(2)) / 16.0 + (at(-1) + at(1)) * 4.0 / 16.0 + at(0) * 6.0 / 16.0
        })
        .collect();
    let max = smooth.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..n {
        let l = smooth[(i + n - 1) % n];
        let r = smooth[(i + 1) % n];
        let c = smooth[i];
        if c > l && c > r && c >= ORI_PEAK_RATIO * max {
            let shift = 0.5 * (l - r) / (l - 2.0 * c + r);
            let bin = (i as f64 + shift).rem_euclid(n as f64);
            out.push((bin * 2.0 * PI / n as f64).rem_euclid(2.0 * PI));
        }
    }
    out
}

fn describe(img: &Image, x: f64, y: f64, sigma: f64, orientation: f64) -> [f32; DESCRIPTOR_LEN] {
    let d = DESC_WIDTH as f64;
    let nb = DESC_BINS as f64;
    let hist_width = DESC_HIST_FACTOR * sigma;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let radius = (hist_width * 2f64.sqrt() * (d + 1.0) * 0.5).round() as isize;
    let radius = radius.min(((w * w + h * h) as f64).sqrt() as isize);
    let (sin_t, cos_t) = orientation.sin_cos();
    let (cx, cy) = (x.round() as isize, y.round() as isize);
    let (fx, fy) = (x - cx as f64, y - cy as f64);
    let weight_denom = 2.0 * (0.5 * d).powi(2);

    // (d + 2)^2 spatial cells x (n + 2) orientation bins, padded for trilinear spill.
    let stride_o = DESC_BINS + 2;
    let stride_c = (DESC_WIDTH + 2) * stride_o;
    let mut hist = vec![0.0f64; (DESC_WIDTH + 2) * stride_c];

    for i in -radius..=radius {
        let yy = cy + i;
        if yy <= 0 || yy >= h - 1 {
            continue;
        }
        for j in -radius..=radius {
            let xx = cx + j;
            if xx <= 0 || xx >= w - 1 {
                continue;
            }
            let (ox, oy) = (j as f64 - fx, i as f64 - fy);
            let x_rot = (ox * cos_t + oy * sin_t) / hist_width;
            let y_rot = (-ox * sin_t + oy * cos_t) / hist_width;
            let rbin = y_rot + d / 2.0 - 0.5;
            let cbin = x_rot + d / 2.0 - 0.5;
            if rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d {
                continue;
            }
            let (gx, gy) = pixel_gradient(img, xx as usize, yy as usize);
            let mag = gx.hypot(gy) * (-(x_rot * x_rot + y_rot * y_rot) / weight_denom).exp();
            let angle = (gy.atan2(gx) - orientation).rem_euclid(2.0 * PI);
            let obin = angle * nb / (2.0 * PI);

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (dr, dc, dob) = (rbin - r0, cbin - c0, obin - o0);
            let (r0, c0) = ((r0 + 1.0) as usize, (c0 + 1.0) as usize);
            let o0 = (o0 as usize) % DESC_BINS;
            for (ri, wr) in [(0, 1.0 - dr), (1, dr)] {
                for (ci, wc) in [(0, 1.0 - dc), (1, dc)] {
                    for (oi, wo) in [(0, 1.0 - dob), (1, dob)] {
                        let idx = (r0 + ri) * stride_c + (c0 + ci) * stride_o + (o0 + oi);
                        hist[idx] += mag * wr * wc * wo;
                    }
                }
            }
        }
    }

    let mut desc = [0.0f32; DESCRIPTOR_LEN];
    for r in 0..DESC_WIDTH {
        for c in 0..DESC_WIDTH {
            let base = (r + 1) * stride_c + (c + 1) * stride_o;
            for o in 0..DESC_BINS {
                // Orientation bin n wraps onto bin 0.
                let mut v = hist[base + o];
                if o == 0 {
                    v += hist[base + DESC_BINS];
                }
                desc[(r * DESC_WIDTH + c) * DESC_BINS + o] = v as f32;
            }
        }
    }
    normalize_descriptor(&mut desc);
    desc
}

/// Scales to unit norm with every component at most 0.2: the fixed point of
/// repeated clamp-and-renormalize, found by bisection on the scale factor.
/// Falls back to plain unit normalization when fewer than 25 bins are
/// nonzero, since no unit vector can then satisfy the clamp.
pub(crate) fn normalize_descriptor(desc: &mut [f32; DESCRIPTOR_LEN]) {
    let norm = desc.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return;
    }
    let unit: Vec<f64> = desc.iter().map(|&v| v as f64 / norm).collect();
    let clamp = DESC_CLAMP as f64;
    let nonzero = unit.iter().filter(|&&v| v > 0.0).count();
    let scaled_norm = |c: f64| {
        unit.iter()
            .map(|&v| (c * v).min(clamp).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    if (nonzero as f64) * clamp * clamp <= 1.0 {
        for (d, u) in desc.iter_mut().zip(&unit) {
            *d = *u as f32;
        }
        return;
    }
    // scaled_norm is nondecreasing in c; scaled_norm(1) <= 1 and it reaches
    // sqrt(nonzero) * clamp > 1 once every bin saturates.
    let (mut lo, mut hi) = (1.0, 1.0);
    while scaled_norm(hi) < 1.0 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if scaled_norm(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut out: Vec<f64> = unit.iter().map(|&v| (hi * v).min(clamp)).collect();
    let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    out.iter_mut().for_each(|v| *v /= n);
    for (d, v) in desc.iter_mut().zip(out) {
        // Rounding can push a saturated bin a hair above the clamp.
        *d = (v as f32).min(DESC_CLAMP);
    }
}
