use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::Feature;
use crate::transform::{AffineTransform, Point};

/// Default lattice resolution of a control grid.
pub const DEFAULT_GRID: usize = 20;
/// Default pairing radius for [`feature_error`], in pixels.
pub const DEFAULT_MATCH_RADIUS: f64 = 4.0;

/// Tie points `source[i]` in the fixed image and their reference positions
/// `reference[i]` in the moving image.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    pub source: Vec<Point>,
    pub reference: Vec<Point>,
}

impl ControlGrid {
    pub fn new(source: Vec<Point>, reference: Vec<Point>) -> Result<Self> {
        if source.is_empty() || source.len() != reference.len() {
            return Err(Error::InvalidInput(format!(
                "control grid needs equal, nonzero point counts (got {} and {})",
                source.len(),
                reference.len()
            )));
        }
        Ok(ControlGrid { source, reference })
    }

    /// `n x n` interior lattice on a `width x height` fixed image, cell
    /// centers at `((i + 0.5) w / n, (j + 0.5) h / n)`, mapped through `truth`.
    pub fn lattice(width: usize, height: usize, n: usize, truth: &AffineTransform) -> Self {
        let n = n.max(1);
        let source: Vec<Point> = (0..n)
            .flat_map(|j| {
                (0..n).map(move |i| {
                    Point::new(
                        (i as f64 + 0.5) * width as f64 / n as f64,
                        (j as f64 + 0.5) * height as f64 / n as f64,
                    )
                })
            })
            .collect();
        let reference = source.iter().map(|&p| truth.apply(p)).collect();
        ControlGrid { source, reference }
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Reads `x1,y1,x2,y2` lines; a non-numeric first line is taken as a header.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(input);
        let mut source = Vec::new();
        let mut reference = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidInput(format!("tie points: {e}")))?;
            if rec.len() != 4 {
                return Err(Error::InvalidInput(format!(
                    "tie points line {}: expected 4 fields, got {}",
                    line + 1,
                    rec.len()
                )));
            }
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match vals {
                Ok(v) => {
                    source.push(Point::new(v[0], v[1]));
                    reference.push(Point::new(v[2], v[3]));
                }
                Err(_) if line == 0 => continue,
                Err(e) => {
                    return Err(Error::InvalidInput(format!("tie points line {}: {e}", line + 1)))
                }
            }
        }
        ControlGrid::new(source, reference)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for (s, r) in self.source.iter().zip(&self.reference) {
            w.write_record([s.x, s.y, r.x, r.y].map(|v| v.to_string()))
                .map_err(|e| Error::InvalidInput(format!("tie points: {e}")))?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("tie points: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Root-mean-square distance between `H·source` and the reference points.
pub fn rmse(h: &AffineTransform, grid: &ControlGrid) -> f64 {
    let sum: f64 = grid
        .source
        .iter()
        .zip(&grid.reference)
        .map(|(&s, &r)| h.apply(s).distance_sq(r))
        .sum();
    (sum / grid.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureError {
    /// Mean position error over paired features, in pixels.
    pub mean_px: f64,
    /// Mean squared position error, in px².
    pub mean_sq_px: f64,
    pub paired: usize,
    pub unpaired: usize,
}

/// Position error of `candidates` against `reference` features.
///
/// Pairs are formed greedily by increasing distance, each feature used at
/// most once, and only within `radius`. Unpaired candidates are counted but
/// excluded from the means.
pub fn feature_error(candidates: &[Feature], reference: &[Feature], radius: f64) -> Result<FeatureError> {
    let points = |f: &[Feature]| f.iter().map(|f| f.position).collect::<Vec<_>>();
    feature_point_error(&points(candidates), &points(reference), radius)
}

pub fn feature_point_error(candidates: &[Point], reference: &[Point], radius: f64) -> Result<FeatureError> {
    let r2 = radius * radius;
    // Bucket the reference points so each candidate only scans nearby cells.
    let cell = radius.max(1.0);
    let key = |p: &Point| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
    for (j, p) in reference.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(j);
    }
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in candidates.iter().enumerate() {
        let (kx, ky) = key(p);
        for dy in -1..=1 {
            for dx in -1..=1 {
                for &j in buckets.get(&(kx + dx, ky + dy)).into_iter().flatten() {
                    let d2 = p.distance_sq(reference[j]);
                    if d2 <= r2 {
                        cands.push((d2, i, j));
                    }
                }
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_c = vec![false; candidates.len()];
    let mut used_r = vec![false; reference.len()];
    let (mut sum, mut sum_sq, mut paired) = (0.0, 0.0, 0usize);
    for (d2, i, j) in cands {
        if used_c[i] || used_r[j] {
            continue;
        }
        used_c[i] = true;
        used_r[j] = true;
        sum += d2.sqrt();
        sum_sq += d2;
        paired += 1;
    }
    if paired == 0 {
        return Err(Error::NoPairs { radius });
    }
    Ok(FeatureError {
        mean_px: sum / paired as f64,
        mean_sq_px: sum_sq / paired as f64,
        paired,
        unpaired: candidates.len() - paired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rmse_examples() {
        let truth = AffineTransform::new(1.01, 0.02, 5.0, -0.02, 0.99, -3.0);
        let grid = ControlGrid::lattice(1024, 768, 20, &truth);
        assert_eq!(grid.len(), 400);
        assert_eq!(rmse(&truth, &grid), 0.0);
        let one = ControlGrid::new(vec![Point::new(10.0, 10.0)], vec![Point::new(10.0, 10.0)]).unwrap();
        assert_eq!(rmse(&AffineTransform::translation(3.0, 4.0), &one), 5.0);
    }

    #[test]
    fn rmse_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src: Vec<Point> = (0..50).map(|_| Point::new(rng.random_range(0.0..500.0), rng.random_range(0.0..500.0))).collect();
        let refs: Vec<Point> = src.iter().map(|p| Point::new(p.x + rng.random_range(-2.0..2.0), p.y)).collect();
        let grid = ControlGrid::new(src.clone(), refs.clone()).unwrap();
        let h = AffineTransform::new(1.001, 0.003, 0.4, -0.002, 0.998, -0.7);
        let mut acc = 0.0;
        for i in 0..src.len() {
            let q = h.apply(src[i]);
            acc += (q.x - refs[i].x).powi(2) + (q.y - refs[i].y).powi(2);
        }
        assert!((rmse(&h, &grid) - (acc / 50.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let grid = ControlGrid::lattice(100, 100, 3, &AffineTransform::translation(1.5, -2.0));
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        assert_eq!(ControlGrid::read_csv(&buf[..]).unwrap(), grid);
        let text = "x1,y1,x2,y2\n1,2,3,4\n";
        let g = ControlGrid::read_csv(text.as_bytes()).unwrap();
        assert_eq!(g.reference, vec![Point::new(3.0, 4.0)]);
        assert!(ControlGrid::read_csv("1,2,3\n".as_bytes()).is_err());
        assert!(ControlGrid::read_csv("1,2,3,4\na,b,c,d\n".as_bytes()).is_err());
        assert!(ControlGrid::read_csv("".as_bytes()).is_err());
    }

    #[test]
    fn feature_error_examples() {
        let pts: Vec<Point> = (0..30).map(|i| Point::new(10.0 * i as f64, 7.0 * (i % 5) as f64)).collect();
        let e = feature_point_error(&pts, &pts, 4.0).unwrap();
        assert_eq!((e.mean_px, e.paired, e.unpaired), (0.0, 30, 0));
        let shifted: Vec<Point> = pts.iter().map(|p| Point::new(p.x + 1.0, p.y)).collect();
        let e = feature_point_error(&shifted, &pts, 4.0).unwrap();
        assert!((e.mean_px - 1.0).abs() < 1e-12 && (e.mean_sq_px - 1.0).abs() < 1e-12);
        let far: Vec<Point> = pts.iter().map(|p| Point::new(p.x + 100.0, p.y + 100.0)).collect();
        assert!(matches!(feature_point_error(&far[..1], &pts[..1], 4.0), Err(Error::NoPairs { .. })));
    }

    proptest! {
        #[test]
        fn rmse_is_permutation_invariant_and_scales(seed in 0u64..1000, k in 0.1..10.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..40usize);
            let src: Vec<Point> = (0..n).map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect();
            let err: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))).collect();
            let refs: Vec<Point> = src.iter().zip(&err).map(|(p, e)| Point::new(p.x + e.0, p.y + e.1)).collect();
            let base = rmse(&AffineTransform::IDENTITY, &ControlGrid::new(src.clone(), refs.clone()).unwrap());
            let mut idx: Vec<usize> = (0..n).collect();
            idx.reverse();
            let perm = ControlGrid::new(idx.iter().map(|&i| src[i]).collect(), idx.iter().map(|&i| refs[i]).collect()).unwrap();
            prop_assert!((rmse(&AffineTransform::IDENTITY, &perm) - base).abs() < 1e-12);
            let scaled: Vec<Point> = src.iter().zip(&err).map(|(p, e)| Point::new(p.x + k * e.0, p.y + k * e.1)).collect();
            let s = rmse(&AffineTransform::IDENTITY, &ControlGrid::new(src.clone(), scaled).unwrap());
            prop_assert!((s - k * base).abs() < 1e-9 * (1.0 + k * base));
        }
    }
}
