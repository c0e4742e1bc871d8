//! Affine transforms and point types.
//!
//! Coordinates follow the image convention used throughout the crate: the
//! origin sits on the center of the top-left pixel, `x` grows to the right
//! and `y` grows downward. A transform maps fixed-image coordinates to
//! moving-image coordinates, `p2 = H * p1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Determinants smaller than this in magnitude are treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

/// A 2-D point in pixel coordinates. The homogeneous coordinate is always 1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Ordered pixel set used when evaluating area objectives.
pub type PointSet = Vec<Point>;

/// The six free coefficients of a 2-D affine map
///
/// ```text
/// | a1 b1 c1 |
/// | a2 b2 c2 |
/// |  0  0  1 |
/// ```
///
/// The bottom row is implicit. Serializes to the flat JSON object
/// `{"a1":..,"b1":..,"c1":..,"a2":..,"b2":..,"c2":..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        a1: 1.0,
        b1: 0.0,
        c1: 0.0,
        a2: 0.0,
        b2: 1.0,
        c2: 0.0,
    };

    pub const fn new(a1: f64, b1: f64, c1: f64, a2: f64, b2: f64, c2: f64) -> Self {
        AffineTransform {
            a1,
            b1,
            c1,
            a2,
            b2,
            c2,
        }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self::new(1.0, 0.0, tx, 0.0, 1.0, ty)
    }

    /// Rotation by `angle` radians and uniform `scale` about `center`,
    /// followed by a translation of `(tx, ty)`.
    pub fn similarity_about(center: Point, angle: f64, scale: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let a1 = scale * c;
        let b1 = -scale * s;
        let a2 = scale * s;
        let b2 = scale * c;
        let c1 = center.x - a1 * center.x - b1 * center.y + tx;
        let c2 = center.y - a2 * center.x - b2 * center.y + ty;
        Self::new(a1, b1, c1, a2, b2, c2)
    }

    /// Coefficients in the order `[a1, b1, c1, a2, b2, c2]`.
    pub fn to_array(self) -> [f64; 6] {
        [self.a1, self.b1, self.c1, self.a2, self.b2, self.c2]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn determinant(&self) -> f64 {
        self.a1 * self.b2 - self.b1 * self.a2
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        Point {
            x: self.a1 * p.x + self.b1 * p.y + self.c1,
            y: self.a2 * p.x + self.b2 * p.y + self.c2,
        }
    }

    /// `self ∘ first`: the transform that applies `first`, then `self`.
    pub fn compose(&self, first: &AffineTransform) -> AffineTransform {
        let h = self;
        let g = first;
        AffineTransform {
            a1: h.a1 * g.a1 + h.b1 * g.a2,
            b1: h.a1 * g.b1 + h.b1 * g.b2,
            c1: h.a1 * g.c1 + h.b1 * g.c2 + h.c1,
            a2: h.a2 * g.a1 + h.b2 * g.a2,
            b2: h.a2 * g.b1 + h.b2 * g.b2,
            c2: h.a2 * g.c1 + h.b2 * g.c2 + h.c2,
        }
    }

    pub fn invert(&self) -> Result<AffineTransform> {
        let det = self.determinant();
        if !(det.abs() >= SINGULAR_DET) {
            return Err(Error::SingularTransform { det });
        }
        let a1 = self.b2 / det;
        let b1 = -self.b1 / det;
        let a2 = -self.a2 / det;
        let b2 = self.a1 / det;
        Ok(AffineTransform {
            a1,
            b1,
            c1: -(a1 * self.c1 + b1 * self.c2),
            a2,
            b2,
            c2: -(a2 * self.c1 + b2 * self.c2),
        })
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &AffineTransform) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("transform serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<AffineTransform> {
        let h: AffineTransform = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("transform JSON: {e}")))?;
        if !h.is_finite() {
            return Err(Error::InvalidInput("transform has non-finite coefficients".into()));
        }
        Ok(h)
    }
}

/// `h2 ∘ h1`.
pub fn compose(h2: &AffineTransform, h1: &AffineTransform) -> AffineTransform {
    h2.compose(h1)
}

pub fn apply_transform(h: &AffineTransform, p: Point) -> Point {
    h.apply(p)
}

pub fn invert(h: &AffineTransform) -> Result<AffineTransform> {
    h.invert()
}
