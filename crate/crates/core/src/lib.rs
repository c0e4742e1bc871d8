//! Feature-area optimization (FAO) for SAR image registration.

pub mod drs;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod image;
pub mod imaging;
pub mod initializer;
pub mod optimizer;
pub mod pipeline;
pub mod sliceset;
pub mod transform;

pub use error::{Error, ErrorClass, Result};
pub use image::{sample_bilinear, Image, Rect};
pub use transform::{apply_transform, compose, invert, AffineTransform, Point, PointSet};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/images.md")]
    mod images {}
    #[doc = include_str!("../../../book/src/dual-resolution.md")]
    mod dual_resolution {}
    #[doc = include_str!("../../../book/src/initialization.md")]
    mod initialization {}
    #[doc = include_str!("../../../book/src/slices.md")]
    mod slices {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
