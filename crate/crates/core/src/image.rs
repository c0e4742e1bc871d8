//! Single-channel intensity images, integer rectangles and sub-pixel sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::Point;

/// A row-major grid of finite intensities.
///
/// Images loaded from disk are normalized to `[0, 1]` by their source bit
/// depth; `bit_depth` remembers that depth so the image can be written back
/// losslessly.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
    bit_depth: Option<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Image> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "image buffer has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite intensity at index {i}")));
        }
        Ok(Image {
            width,
            height,
            data,
            bit_depth: None,
        })
    }

    /// Builds an image whose pixels are all `value`.
    pub fn filled(width: usize, height: usize, value: f64) -> Image {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Image {
            width,
            height,
            data: vec![value; width * height],
            bit_depth: None,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Image {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            data,
            bit_depth: None,
        }
    }

    // Internal constructor for buffers produced by this crate's own kernels.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Image {
        debug_assert_eq!(data.len(), width * height);
        Image {
            width,
            height,
            data,
            bit_depth: None,
        }
    }

    pub fn with_bit_depth(mut self, depth: Option<u8>) -> Image {
        self.bit_depth = depth;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn min_dim(&self) -> usize {
        self.width.min(self.height)
    }

    pub fn area(&self) -> u64 {
        (self.width * self.height) as u64
    }

    pub fn bit_depth(&self) -> Option<u8> {
        self.bit_depth
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    /// Copies out the pixels covered by `rect`, which must lie inside the image.
    pub fn crop(&self, rect: Rect) -> Image {
        assert!(
            rect.x1() <= self.width && rect.y1() <= self.height,
            "crop rect {rect:?} exceeds {}x{}",
            self.width,
            self.height
        );
        let mut data = Vec::with_capacity(rect.area() as usize);
        for y in rect.y0..rect.y1() {
            data.extend_from_slice(&self.row(y)[rect.x0..rect.x1()]);
        }
        Image::from_raw(rect.width, rect.height, data)
    }

    /// Returns a copy with every intensity passed through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
            bit_depth: self.bit_depth,
        }
    }

    /// Whether `p` lies in the closed sampling domain `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= (self.width - 1) as f64
            && p.y <= (self.height - 1) as f64
    }

    /// Bilinear sample at `p`, or `None` outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn sample_bilinear(&self, p: Point) -> Option<f64> {
        let cell = self.cell(p)?;
        Some(cell.value())
    }

    /// Bilinear sample at `p` together with the spatial gradient of the
    /// interpolant `(d/dx, d/dy)`.
    #[inline]
    pub fn sample_bilinear_grad(&self, p: Point) -> Option<(f64, f64, f64)> {
        let cell = self.cell(p)?;
        Some((cell.value(), cell.dx(), cell.dy()))
    }

    #[inline]
    fn cell(&self, p: Point) -> Option<Cell> {
        if !self.contains(p) {
            return None;
        }
        // Points on the far border use the last full cell with weight 1.
        let x0 = (p.x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (p.y.floor() as usize).min(self.height.saturating_sub(2));
        let fx = p.x - x0 as f64;
        let fy = p.y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        Some(Cell {
            v00: self.get(x0, y0),
            v10: self.get(x1, y0),
            v01: self.get(x0, y1),
            v11: self.get(x1, y1),
            fx,
            fy,
        })
    }
}

struct Cell {
    v00: f64,
    v10: f64,
    v01: f64,
    v11: f64,
    fx: f64,
    fy: f64,
}

impl Cell {
    #[inline]
    fn value(&self) -> f64 {
        let top = self.v00 + self.fx * (self.v10 - self.v00);
        let bottom = self.v01 + self.fx * (self.v11 - self.v01);
        top + self.fy * (bottom - top)
    }

    #[inline]
    fn dx(&self) -> f64 {
        (1.0 - self.fy) * (self.v10 - self.v00) + self.fy * (self.v11 - self.v01)
    }

    #[inline]
    fn dy(&self) -> f64 {
        (1.0 - self.fx) * (self.v01 - self.v00) + self.fx * (self.v11 - self.v10)
    }
}

/// Free-function form of [`Image::sample_bilinear`].
pub fn sample_bilinear(img: &Image, p: Point) -> Option<f64> {
    img.sample_bilinear(p)
}

/// Axis-aligned integer rectangle: `[x0, x0 + width) x [y0, y0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    #[serde(rename = "w")]
    pub width: usize,
    #[serde(rename = "h")]
    pub height: usize,
}

impl Rect {
    pub const fn new(x0: usize, y0: usize, width: usize, height: usize) -> Rect {
        Rect {
            x0,
            y0,
            width,
            height,
        }
    }

    /// Square of side `side` centered on `center`, clipped to a
    /// `width x height` image. `None` if nothing remains.
    pub fn centered_clipped(center: Point, side: usize, width: usize, height: usize) -> Option<Rect> {
        let half = side as f64 / 2.0;
        let x0 = (center.x - half).round();
        let y0 = (center.y - half).round();
        let x1 = x0 + side as f64;
        let y1 = y0 + side as f64;
        let cx0 = x0.max(0.0);
        let cy0 = y0.max(0.0);
        let cx1 = x1.min(width as f64);
        let cy1 = y1.min(height as f64);
        if cx1 <= cx0 || cy1 <= cy0 {
            return None;
        }
        Some(Rect::new(
            cx0 as usize,
            cy0 as usize,
            (cx1 - cx0) as usize,
            (cy1 - cy0) as usize,
        ))
    }

    pub fn x1(&self) -> usize {
        self.x0 + self.width
    }

    pub fn y1(&self) -> usize {
        self.y0 + self.height
    }

    pub fn area(&self) -> u64 {
        (self.width * self.height) as u64
    }

    pub fn center(&self) -> Point {
        Point::new(
            self.x0 as f64 + (self.width as f64 - 1.0) / 2.0,
            self.y0 as f64 + (self.height as f64 - 1.0) / 2.0,
        )
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1().min(other.x1());
        let y1 = self.y1().min(other.y1());
        (x1 > x0 && y1 > y0).then(|| Rect::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= self.x0 as f64
            && p.y >= self.y0 as f64
            && p.x <= (self.x1() - 1) as f64
            && p.y <= (self.y1() - 1) as f64
    }

    pub fn within(&self, width: usize, height: usize) -> bool {
        self.width > 0 && self.height > 0 && self.x1() <= width && self.y1() <= height
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp() -> Image {
        Image::from_fn(5, 4, |x, y| (x * 10 + y) as f64 / 100.0)
    }

    #[test]
    fn lattice_points_are_exact() {
        let img = ramp();
        for y in 0..4 {
            for x in 0..5 {
                let v = img.sample_bilinear(Point::new(x as f64, y as f64)).unwrap();
                assert_eq!(v, img.get(x, y));
            }
        }
    }

    #[test]
    fn midpoint_of_block() {
        let img = Image::new(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(img.sample_bilinear(Point::new(0.5, 0.5)), Some(0.5));
    }

    #[test]
    fn out_of_bounds_is_absent() {
        let img = ramp();
        assert_eq!(img.sample_bilinear(Point::new(-0.5, 3.0)), None);
        assert_eq!(img.sample_bilinear(Point::new(4.0001, 1.0)), None);
        assert!(img.sample_bilinear(Point::new(4.0, 3.0)).is_some());
    }

    #[test]
    fn single_row_image_samples_along_x() {
        let img = Image::new(3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(img.sample_bilinear(Point::new(1.5, 0.0)), Some(1.5));
        assert_eq!(img.sample_bilinear(Point::new(0.0, 0.5)), None);
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(Image::new(0, 3, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn gradient_of_linear_ramp() {
        let img = Image::from_fn(6, 6, |x, y| 0.3 * x as f64 - 0.2 * y as f64);
        let (_, gx, gy) = img.sample_bilinear_grad(Point::new(2.3, 4.7)).unwrap();
        assert!((gx - 0.3).abs() < 1e-12 && (gy + 0.2).abs() < 1e-12);
    }

    #[test]
    fn rect_geometry() {
        let r = Rect::new(10, 20, 30, 40);
        assert_eq!(r.area(), 1200);
        assert_eq!(
            r.intersection(&Rect::new(25, 0, 100, 30)),
            Some(Rect::new(25, 20, 15, 10))
        );
        assert_eq!(r.intersection(&Rect::new(40, 20, 5, 5)), None);
        let c = Rect::centered_clipped(Point::new(2048.0, 2048.0), 256, 4096, 4096).unwrap();
        assert_eq!(c, Rect::new(1920, 1920, 256, 256));
        let c = Rect::centered_clipped(Point::new(10.0, 10.0), 256, 4096, 4096).unwrap();
        assert_eq!(c, Rect::new(0, 0, 138, 138));
    }

    proptest! {
        #[test]
        fn constant_image_samples_constant(v in -1.0f64..1.0, x in 0.0f64..9.0, y in 0.0f64..6.0) {
            let img = Image::filled(10, 7, v);
            let s = img.sample_bilinear(Point::new(x, y)).unwrap();
            prop_assert!((s - v).abs() < 1e-15);
        }
    }
}
