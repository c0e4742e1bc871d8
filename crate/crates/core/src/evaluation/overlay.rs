use crate::error::{Error, Result};
use crate::image::Image;
use crate::transform::{AffineTransform, Point};

/// Brightness added where both images are defined.
pub const HEIGHTENING: f64 = 0.25;

/// Canvases larger than this multiple of the inputs' total area are refused.
const MAX_CANVAS_FACTOR: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub image: Image,
    /// Fixed-image coordinates of the canvas's top-left pixel.
    pub origin: (i64, i64),
}

/// Superimposes `i2`, resampled through `h`, on the fixed image's frame.
///
/// The canvas spans both footprints. Where both images are defined the
/// output is `clamp(0.5 (I1 + I2∘H) + 0.25, 0, 1)`, so the superposition
/// stands out brighter and misregistration shows as ghosting; elsewhere it
/// is whichever image is defined, or 0.
pub fn render_overlay(i1: &Image, i2: &Image, h: &AffineTransform) -> Result<Overlay> {
    let inv = h.invert()?;
    let (w2, h2) = (i2.width() as f64 - 1.0, i2.height() as f64 - 1.0);
    let mut xs = vec![0.0, i1.width() as f64 - 1.0];
    let mut ys = vec![0.0, i1.height() as f64 - 1.0];
    for c in [Point::new(0.0, 0.0), Point::new(w2, 0.0), Point::new(0.0, h2), Point::new(w2, h2)] {
        let p = inv.apply(c);
        xs.push(p.x);
        ys.push(p.y);
    }
    let lo = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min).floor() as i64;
    let hi = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    let (x0, y0) = (lo(&xs), lo(&ys));
    let (cw, ch) = ((hi(&xs) - x0 + 1) as usize, (hi(&ys) - y0 + 1) as usize);
    if (cw * ch) as f64 > MAX_CANVAS_FACTOR * (i1.area() + i2.area()) as f64 {
        return Err(Error::InvalidInput(format!(
            "overlay canvas {cw}x{ch} is implausibly large for this transform"
        )));
    }
    let image = Image::from_fn(cw, ch, |u, v| {
        let (x, y) = (u as i64 + x0, v as i64 + y0);
        let a = (x >= 0 && y >= 0 && (x as usize) < i1.width() && (y as usize) < i1.height())
            .then(|| i1.get(x as usize, y as usize));
        let b = i2.sample_bilinear(h.apply(Point::new(x as f64, y as f64)));
        match (a, b) {
            (Some(a), Some(b)) => (0.5 * (a + b) + HEIGHTENING).clamp(0.0, 1.0),
            (Some(v), None) | (None, Some(v)) => v,
            (None, None) => 0.0,
        }
    });
    Ok(Overlay {
        image,
        origin: (x0, y0),
    })
}
