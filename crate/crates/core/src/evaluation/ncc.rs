//! Translation-only normalized cross-correlation registration.
//!
//! Cross products for every shift come from one FFT correlation; window
//! sums and sums of squares come from integral images, so each shift costs
//! O(1) after the transforms.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::transform::AffineTransform;

/// Default search half-width in pixels.
pub const DEFAULT_WINDOW: usize = 64;

/// Shifts whose overlap is smaller than this fraction of the smaller image
/// are not scored.
pub const MIN_OVERLAP_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NccResult {
    /// Pure translation `p ↦ p + (dx, dy)` from fixed to moving coordinates.
    pub transform: AffineTransform,
    pub dx: i64,
    pub dy: i64,
    /// Correlation at the peak, in `[-1, 1]`.
    pub score: f64,
}

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(img: &Image) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut sum = vec![0.0; (w + 1) * (h + 1)];
        let mut sq = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let (mut rs, mut rq) = (0.0, 0.0);
            for x in 0..w {
                let v = img.get(x, y);
                rs += v;
                rq += v * v;
                sum[(y + 1) * (w + 1) + x + 1] = sum[y * (w + 1) + x + 1] + rs;
                sq[(y + 1) * (w + 1) + x + 1] = sq[y * (w + 1) + x + 1] + rq;
            }
        }
        Integral { w, sum, sq }
    }

    /// Sum and sum of squares over `[x0, x1) x [y0, y1)`.
    fn window(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> (f64, f64) {
        let s = self.w + 1;
        let at = |t: &[f64]| t[y1 * s + x1] - t[y0 * s + x1] - t[y1 * s + x0] + t[y0 * s + x0];
        (at(&self.sum), at(&self.sq))
    }
}

fn smooth_size(min: usize) -> usize {
    (min..)
        .find(|&n| {
            let mut m = n;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            m == 1
        })
        .expect("5-smooth numbers are unbounded")
}

/// In-place 2-D FFT of a row-major `w x h` grid.
fn fft2(data: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    let col = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    data.par_chunks_mut(w).for_each(|r| row.process(r));
    let mut t = vec![Complex::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            t[x * h + y] = data[y * w + x];
        }
    }
    t.par_chunks_mut(h).for_each(|c| col.process(c));
    for x in 0..w {
        for y in 0..h {
            data[y * w + x] = t[x * h + y];
        }
    }
}

/// `C(dx, dy) = Σ_p I1(p) I2(p + d)` for `|dx|, |dy| <= window`, indexed
/// `[(dy + window) * (2 window + 1) + dx + window]`.
fn cross_products(i1: &Image, i2: &Image, window: usize) -> Vec<f64> {
    let pw = smooth_size(i1.width().max(i2.width()) + window + 1);
    let ph = smooth_size(i1.height().max(i2.height()) + window + 1);
    let embed = |img: &Image| {
        let mut g = vec![Complex::new(0.0, 0.0); pw * ph];
        for y in 0..img.height() {
            for (x, &v) in img.row(y).iter().enumerate() {
                g[y * pw + x] = Complex::new(v, 0.0);
            }
        }
        g
    };
    let (mut a, mut b) = rayon::join(|| embed(i1), || embed(i2));
    fft2(&mut a, pw, ph, false);
    fft2(&mut b, pw, ph, false);
    a.par_iter_mut().zip(&b).for_each(|(x, y)| *x = x.conj() * y);
    fft2(&mut a, pw, ph, true);
    let scale = 1.0 / (pw * ph) as f64;
    let side = 2 * window + 1;
    let w = window as i64;
    let mut out = vec![0.0; side * side];
    for dy in -w..=w {
        for dx in -w..=w {
            let ix = dx.rem_euclid(pw as i64) as usize;
            let iy = dy.rem_euclid(ph as i64) as usize;
            out[(dy + w) as usize * side + (dx + w) as usize] = a[iy * pw + ix].re * scale;
        }
    }
    out
}

/// Overlap of the fixed image with the moving image shifted by `(dx, dy)`,
/// in fixed coordinates: `[x0, x1) x [y0, y1)`.
fn overlap(i1: &Image, i2: &Image, dx: i64, dy: i64) -> Option<(usize, usize, usize, usize)> {
    let x0 = 0.max(-dx);
    let y0 = 0.max(-dy);
    let x1 = (i1.width() as i64).min(i2.width() as i64 - dx);
    let y1 = (i1.height() as i64).min(i2.height() as i64 - dy);
    (x1 > x0 && y1 > y0).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
}

fn correlation(n: f64, s1: f64, q1: f64, s2: f64, q2: f64, s12: f64) -> Option<f64> {
    let v1 = q1 - s1 * s1 / n;
    let v2 = q2 - s2 * s2 / n;
    let eps = 1e-12 * n;
    if v1 <= eps || v2 <= eps {
        return None;
    }
    Some(((s12 - s1 * s2 / n) / (v1 * v2).sqrt()).clamp(-1.0, 1.0))
}

/// Normalized cross-correlation of the overlap at integer shift `(dx, dy)`,
/// computed directly. `None` when the overlap is empty or flat.
pub fn ncc_at(i1: &Image, i2: &Image, dx: i64, dy: i64) -> Option<f64> {
    let (x0, y0, x1, y1) = overlap(i1, i2, dx, dy)?;
    let (mut s1, mut q1, mut s2, mut q2, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in y0..y1 {
        for x in x0..x1 {
            let a = i1.get(x, y);
            let b = i2.get((x as i64 + dx) as usize, (y as i64 + dy) as usize);
            s1 += a;
            q1 += a * a;
            s2 += b;
            q2 += b * b;
            s12 += a * b;
        }
    }
    correlation(((x1 - x0) * (y1 - y0)) as f64, s1, q1, s2, q2, s12)
}

fn is_flat(img: &Image) -> bool {
    let m = img.mean();
    img.data().iter().all(|&v| (v - m).abs() < 1e-12)
}

/// Exhaustive search over integer shifts within `±window`; ties go to the
/// smallest `(dy, dx)` in lexicographic order.
pub fn ncc_register(i1: &Image, i2: &Image, window: usize) -> Result<NccResult> {
    if is_flat(i1) || is_flat(i2) {
        return Err(Error::FlatImage);
    }
    let cross = cross_products(i1, i2, window);
    let (int1, int2) = rayon::join(|| Integral::new(i1), || Integral::new(i2));
    let min_n = MIN_OVERLAP_FRACTION * i1.area().min(i2.area()) as f64;
    let w = window as i64;
    let side = 2 * window + 1;
    let rows: Vec<Option<(f64, i64, i64)>> = (-w..=w)
        .into_par_iter()
        .map(|dy| {
            let mut best: Option<(f64, i64, i64)> = None;
            for dx in -w..=w {
                let Some((x0, y0, x1, y1)) = overlap(i1, i2, dx, dy) else { continue };
                let n = ((x1 - x0) * (y1 - y0)) as f64;
                if n < min_n {
                    continue;
                }
                let (s1, q1) = int1.window(x0, y0, x1, y1);
                let (s2, q2) = int2.window(
                    (x0 as i64 + dx) as usize,
                    (y0 as i64 + dy) as usize,
                    (x1 as i64 + dx) as usize,
                    (y1 as i64 + dy) as usize,
                );
                let s12 = cross[(dy + w) as usize * side + (dx + w) as usize];
                if let Some(c) = correlation(n, s1, q1, s2, q2, s12) {
                    if best.is_none_or(|b| c > b.0) {
                        best = Some((c, dx, dy));
                    }
                }
            }
            best
        })
        .collect();
    let mut best: Option<(f64, i64, i64)> = None;
    for r in rows.into_iter().flatten() {
        if best.is_none_or(|b| r.0 > b.0) {
            best = Some(r);
        }
    }
    let (score, dx, dy) = best.ok_or(Error::FlatImage)?;
    Ok(NccResult {
        transform: AffineTransform::translation(dx as f64, dy as f64),
        dx,
        dy,
        score,
    })
}
