//! The seeded synthetic benchmark: textured scenes under small similarity
//! warps with alternating single-look and four-look speckle.

use crate::error::Result;
use crate::imaging::{synth_pair, textured_scene, SynthPair, SynthSpec};
use crate::transform::{AffineTransform, Point};

/// Ground truth of benchmark pair `index`: rotation within ±5°, scale
/// within [0.95, 1.05] and translation within ±50 px, about the center of
/// a `size x size` frame. Indices 0..10 sweep the whole range.
pub fn benchmark_truth(index: u64, size: usize) -> AffineTransform {
    let k = (index % 10) as f64 - 4.5;
    let c = size as f64 / 2.0;
    AffineTransform::similarity_about(
        Point::new(c, c),
        (1.1 * k).to_radians(),
        1.0 + 0.01 * k,
        -10.0 * k,
        27.35 + 3.3 * k,
    )
}

/// Looks of benchmark pair `index`: 1 for even indices, 4 for odd ones.
pub fn benchmark_looks(index: u64) -> u32 {
    if index.is_multiple_of(2) {
        1
    } else {
        4
    }
}

/// Benchmark pair `index` on a `size x size` scene.
pub fn benchmark_pair(index: u64, size: usize) -> Result<SynthPair> {
    let scene = textured_scene(size, size, 100 + index);
    synth_pair(&SynthSpec::new(scene, benchmark_truth(index, size), benchmark_looks(index), index))
}
