use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Smallest low-resolution side the dual-resolution pipeline accepts.
pub const MIN_LOWRES_SIDE: usize = 128;

/// Whether [`downsample`] enforces the `L / N >= 128` bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateCheck {
    #[default]
    Enforce,
    /// Skip the bound; for unit tests and exploratory sweeps only.
    Skip,
}

/// Checks `min_dim / rate >= 128`.
pub fn check_rate(min_dim: usize, rate: usize) -> Result<()> {
    if rate == 0 {
        return Err(Error::InvalidInput("downsampling rate must be >= 1".into()));
    }
    if min_dim < MIN_LOWRES_SIDE * rate {
        return Err(Error::RateTooHigh { rate, min_dim });
    }
    Ok(())
}

/// Box-filter decimation by an integer factor: each output pixel is the mean
/// of an `n x n` source block. Output size is `floor(w/n) x floor(h/n)`.
pub fn downsample(img: &Image, n: usize, check: RateCheck) -> Result<Image> {
    if n == 0 {
        return Err(Error::InvalidInput("downsampling rate must be >= 1".into()));
    }
    if check == RateCheck::Enforce {
        check_rate(img.min_dim(), n)?;
    }
    let (ow, oh) = (img.width() / n, img.height() / n);
    if ow == 0 || oh == 0 {
        return Err(Error::RateTooHigh {
            rate: n,
            min_dim: img.min_dim(),
        });
    }
    if n == 1 {
        return Ok(img.clone().with_bit_depth(None));
    }
    let norm = 1.0 / (n * n) as f64;
    let mut out = vec![0.0; ow * oh];
    out.par_chunks_mut(ow).enumerate().for_each(|(oy, row)| {
        for sy in oy * n..(oy + 1) * n {
            let src = img.row(sy);
            for (ox, dst) in row.iter_mut().enumerate() {
                *dst += src[ox * n..(ox + 1) * n].iter().sum::<f64>();
            }
        }
        row.iter_mut().for_each(|v| *v *= norm);
    });
    Ok(Image::from_raw(ow, oh, out))
}

/// Normalized Gaussian kernel truncated at `±ceil(4σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Mirror index into `[0, n)`, repeating the edge sample (`cba|abc|cba`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur with mirror-reflected borders.
///
/// # Panics
/// If `sigma` is not strictly positive.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    assert!(sigma > 0.0, "gaussian_blur requires sigma > 0, got {sigma}");
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());

    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        let src = img.row(y);
        for (x, dst) in out.iter_mut().enumerate() {
            let xi = x as isize;
            let mut acc = 0.0;
            if xi >= r && xi + r < w as isize {
                let base = (xi - r) as usize;
                for (k, &wk) in kernel.iter().enumerate() {
                    acc += wk * src[base + k];
                }
            } else {
                for (k, &wk) in kernel.iter().enumerate() {
                    acc += wk * src[reflect(xi - r + k as isize, w)];
                }
            }
            *dst = acc;
        }
    });

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (k, &wk) in kernel.iter().enumerate() {
            let sy = reflect(y as isize - r + k as isize, h);
            let src = &tmp[sy * w..(sy + 1) * w];
            for (dst, &s) in row.iter_mut().zip(src) {
                *dst += wk * s;
            }
        }
    });
    Image::from_raw(w, h, out)
}
