use rayon::prelude::*;

use super::sift::{descriptor_distance_sq, Feature};

/// Default nearest/second-nearest distance ratio bound.
pub const DEFAULT_RATIO: f64 = 0.8;

/// A ratio-test survivor: `a[query]` ↔ `b[train]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureMatch {
    pub query: usize,
    pub train: usize,
    /// Euclidean descriptor distance to the nearest neighbour.
    pub distance: f64,
    /// Nearest over second-nearest distance; always below the threshold used.
    pub ratio: f64,
}

/// Nearest-neighbour matching with the distance-ratio test.
///
/// For every feature of `a` the two closest descriptors in `b` are found by
/// exhaustive search; a match is emitted iff `d1 / d2 < ratio`. With a single
/// candidate in `b` there is no second neighbour and nothing is emitted.
/// Ties on the nearest distance resolve to the lowest index in `b`.
///
/// # Panics
/// If `ratio` is not in `(0, 1)`.
pub fn match_features(a: &[Feature], b: &[Feature], ratio: f64) -> Vec<FeatureMatch> {
    assert!(ratio > 0.0 && ratio < 1.0, "ratio must lie in (0, 1), got {ratio}");
    if b.len() < 2 {
        return Vec::new();
    }
    a.par_iter()
        .enumerate()
        .filter_map(|(qi, q)| {
            let mut best = (f32::INFINITY, usize::MAX);
            let mut second = f32::INFINITY;
            for (ti, t) in b.iter().enumerate() {
                let d = descriptor_distance_sq(&q.descriptor, &t.descriptor);
                if d < best.0 {
                    second = best.0;
                    best = (d, ti);
                } else if d < second {
                    second = d;
                }
            }
            let d1 = (best.0 as f64).sqrt();
            let d2 = (second as f64).sqrt();
            let r = if d2 > 0.0 { d1 / d2 } else { 1.0 };
            (r < ratio).then_some(FeatureMatch {
                query: qi,
                train: best.1,
                distance: d1,
                ratio: r,
            })
        })
        .collect()
}
