//! Slice sets: the sub-images that stand in for the full images in the
//! area objective.
//!
//! Every inlier match proposes a related slice pair, one square slice in each
//! image centered on the matched keypoints. Pairs are then drawn in seeded
//! random order and accepted only if
//!
//! * no two accepted slices of the same image overlap, and
//! * the fixed slice mapped through the initialization `H₀` overlaps its
//!   moving partner with positive area,
//!
//! until the coverage ratio (the *proportion*) reaches its target.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Rect;
use crate::transform::{AffineTransform, Point};

/// Default slice side in pixels.
pub const DEFAULT_SLICE_SIZE: usize = 256;

/// Two related slices cut around one matched keypoint pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SlicePair {
    pub index: usize,
    #[serde(rename = "rect1")]
    pub fixed: Rect,
    #[serde(rename = "rect2")]
    pub moving: Rect,
    /// Index of the originating match.
    #[serde(skip)]
    pub match_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceSet {
    pairs: Vec<SlicePair>,
    fixed_dims: (usize, usize),
    moving_dims: (usize, usize),
    proportion: f64,
}

impl SliceSet {
    /// Wraps arbitrary pairs without checking the slice constraints.
    /// Rects must lie within their images.
    pub fn from_pairs(
        pairs: Vec<SlicePair>,
        fixed_dims: (usize, usize),
        moving_dims: (usize, usize),
    ) -> Result<SliceSet> {
        for p in &pairs {
            if !p.fixed.within(fixed_dims.0, fixed_dims.1)
                || !p.moving.within(moving_dims.0, moving_dims.1)
            {
                return Err(Error::InvalidInput(format!(
                    "slice pair {} lies outside its image",
                    p.index
                )));
            }
        }
        let proportion = proportion_of(&pairs, fixed_dims, moving_dims);
        Ok(SliceSet {
            pairs,
            fixed_dims,
            moving_dims,
            proportion,
        })
    }

    /// One pair spanning both images entirely.
    pub fn full_images(fixed_dims: (usize, usize), moving_dims: (usize, usize)) -> SliceSet {
        let pair = SlicePair {
            index: 0,
            fixed: Rect::new(0, 0, fixed_dims.0, fixed_dims.1),
            moving: Rect::new(0, 0, moving_dims.0, moving_dims.1),
            match_id: 0,
        };
        SliceSet::from_pairs(vec![pair], fixed_dims, moving_dims).expect("full rects are in bounds")
    }

    pub fn pairs(&self) -> &[SlicePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn proportion(&self) -> f64 {
        self.proportion
    }

    pub fn fixed_dims(&self) -> (usize, usize) {
        self.fixed_dims
    }

    pub fn moving_dims(&self) -> (usize, usize) {
        self.moving_dims
    }

    /// Verifies pairwise disjointness within each image and positive
    /// `H₀`-overlap of every related pair.
    pub fn check_constraints(&self, h0: &AffineTransform) -> Result<()> {
        for (i, a) in self.pairs.iter().enumerate() {
            for b in &self.pairs[i + 1..] {
                if overlap_area(&a.fixed, &b.fixed) > 0 || overlap_area(&a.moving, &b.moving) > 0 {
                    return Err(Error::InvalidInput(format!(
                        "slices {} and {} overlap",
                        a.index, b.index
                    )));
                }
            }
            if !related_overlap(h0, a) {
                return Err(Error::InvalidInput(format!(
                    "slice pair {} does not overlap under H0",
                    a.index
                )));
            }
        }
        Ok(())
    }

    /// JSON array of `{index, rect1:{x0,y0,w,h}, rect2:{...}}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.pairs).expect("slice serialization cannot fail")
    }
}

/// Exact pixel area of `a ∩ b`.
pub fn overlap_area(a: &Rect, b: &Rect) -> u64 {
    a.intersection(b).map_or(0, |r| r.area())
}

/// Exact pixel area of the union of `rects`, by a sweep over x-intervals.
pub fn union_area(rects: &[Rect]) -> u64 {
    let rects: Vec<&Rect> = rects.iter().filter(|r| r.area() > 0).collect();
    if rects.is_empty() {
        return 0;
    }
    let mut xs: Vec<usize> = rects.iter().flat_map(|r| [r.x0, r.x1()]).collect();
    xs.sort_unstable();
    xs.dedup();
    let mut total = 0u64;
    let mut spans: Vec<(usize, usize)> = Vec::with_capacity(rects.len());
    for w in xs.windows(2) {
        let (xa, xb) = (w[0], w[1]);
        spans.clear();
        spans.extend(
            rects
                .iter()
                .filter(|r| r.x0 <= xa && r.x1() >= xb)
                .map(|r| (r.y0, r.y1())),
        );
        if spans.is_empty() {
            continue;
        }
        spans.sort_unstable();
        let mut covered = 0usize;
        let (mut cur0, mut cur1) = spans[0];
        for &(s0, s1) in &spans[1..] {
            if s0 > cur1 {
                covered += cur1 - cur0;
                (cur0, cur1) = (s0, s1);
            } else {
                cur1 = cur1.max(s1);
            }
        }
        covered += cur1 - cur0;
        total += (covered * (xb - xa)) as u64;
    }
    total
}

fn proportion_of(pairs: &[SlicePair], fixed_dims: (usize, usize), moving_dims: (usize, usize)) -> f64 {
    let fixed: Vec<Rect> = pairs.iter().map(|p| p.fixed).collect();
    let moving: Vec<Rect> = pairs.iter().map(|p| p.moving).collect();
    let covered = union_area(&fixed) + union_area(&moving);
    let total = (fixed_dims.0 * fixed_dims.1 + moving_dims.0 * moving_dims.1) as f64;
    covered as f64 / total
}

/// Coverage of the slice set relative to both images.
pub fn proportion(set: &[SlicePair], fixed_dims: (usize, usize), moving_dims: (usize, usize)) -> f64 {
    proportion_of(set, fixed_dims, moving_dims)
}

/// One candidate per inlier match: a `size x size` slice centered on each
/// keypoint. Candidates that would need clipping in either image are
/// dropped, so every candidate has the full size.
pub fn build_candidates(
    matches: &[(Point, Point)],
    inliers: &[bool],
    fixed_dims: (usize, usize),
    moving_dims: (usize, usize),
    size: usize,
) -> Vec<SlicePair> {
    let mut out = Vec::new();
    for (id, ((p1, p2), &inlier)) in matches.iter().zip(inliers).enumerate() {
        if !inlier {
            continue;
        }
        let full = |p: Point, dims: (usize, usize)| {
            Rect::centered_clipped(p, size, dims.0, dims.1)
                .filter(|r| r.width == size && r.height == size)
        };
        if let (Some(fixed), Some(moving)) = (full(*p1, fixed_dims), full(*p2, moving_dims)) {
            out.push(SlicePair {
                index: out.len(),
                fixed,
                moving,
                match_id: id,
            });
        }
    }
    out
}

/// Area of `H·rect_fixed ∩ rect_moving`, treating rects as continuous regions.
pub fn mapped_overlap_area(h: &AffineTransform, fixed: &Rect, moving: &Rect) -> f64 {
    let (x0, y0, x1, y1) = (
        fixed.x0 as f64,
        fixed.y0 as f64,
        fixed.x1() as f64,
        fixed.y1() as f64,
    );
    let quad = vec![
        h.apply(Point::new(x0, y0)),
        h.apply(Point::new(x1, y0)),
        h.apply(Point::new(x1, y1)),
        h.apply(Point::new(x0, y1)),
    ];
    let clipped = clip_to_rect(
        quad,
        moving.x0 as f64,
        moving.y0 as f64,
        moving.x1() as f64,
        moving.y1() as f64,
    );
    polygon_area(&clipped)
}

fn related_overlap(h0: &AffineTransform, pair: &SlicePair) -> bool {
    mapped_overlap_area(h0, &pair.fixed, &pair.moving) > 0.0
}

/// Sutherland–Hodgman clipping of a polygon against an axis-aligned box.
fn clip_to_rect(poly: Vec<Point>, x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    // Each edge: inside test and intersection of segment with the boundary.
    let edges: [(fn(Point, f64) -> bool, f64, bool); 4] = [
        (|p, v| p.x >= v, x0, true),
        (|p, v| p.x <= v, x1, true),
        (|p, v| p.y >= v, y0, false),
        (|p, v| p.y <= v, y1, false),
    ];
    let mut out = poly;
    for (inside, v, vertical) in edges {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        let cross = |a: Point, b: Point| {
            if vertical {
                let t = (v - a.x) / (b.x - a.x);
                Point::new(v, a.y + t * (b.y - a.y))
            } else {
                let t = (v - a.y) / (b.y - a.y);
                Point::new(a.x + t * (b.x - a.x), v)
            }
        };
        let mut prev = *input.last().unwrap();
        for &cur in &input {
            match (inside(prev, v), inside(cur, v)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(cross(prev, cur)),
                (false, true) => {
                    out.push(cross(prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
            prev = cur;
        }
    }
    out
}

fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, a) in poly.iter().enumerate() {
        let b = poly[(i + 1) % poly.len()];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc.abs()
}

/// Greedy random selection under the slice constraints with a proportion
/// target.
///
/// Candidates are visited in seeded random order. The pair that first brings
/// the proportion to `target` is kept, so the result may overshoot slightly.
/// If the candidates run out first, the set is still returned as long as it
/// reached `target / 2`; below that the constraints are deemed
/// unsatisfiable.
pub fn select(
    candidates: &[SlicePair],
    target: f64,
    h0: &AffineTransform,
    seed: u64,
    fixed_dims: (usize, usize),
    moving_dims: (usize, usize),
) -> Result<SliceSet> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "target proportion must lie in (0, 1], got {target}"
        )));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = (fixed_dims.0 * fixed_dims.1 + moving_dims.0 * moving_dims.1) as f64;
    let mut accepted: Vec<SlicePair> = Vec::new();
    // Accepted slices are disjoint per image, so covered area is a plain sum.
    let mut covered = 0u64;
    for i in order {
        if covered as f64 / total >= target {
            break;
        }
        let cand = &candidates[i];
        if !cand.fixed.within(fixed_dims.0, fixed_dims.1)
            || !cand.moving.within(moving_dims.0, moving_dims.1)
        {
            continue;
        }
        let clashes = accepted.iter().any(|a| {
            overlap_area(&a.fixed, &cand.fixed) > 0 || overlap_area(&a.moving, &cand.moving) > 0
        });
        if clashes || !related_overlap(h0, cand) {
            continue;
        }
        covered += cand.fixed.area() + cand.moving.area();
        accepted.push(SlicePair {
            index: accepted.len(),
            ..*cand
        });
    }

    let set = SliceSet::from_pairs(accepted, fixed_dims, moving_dims)?;
    debug_assert!((set.proportion - covered as f64 / total).abs() < 1e-12);
    set.check_constraints(h0)?;
    if set.proportion < target / 2.0 {
        return Err(Error::ConstraintUnsatisfiable {
            reached: set.proportion,
            target,
        });
    }
    Ok(set)
}
