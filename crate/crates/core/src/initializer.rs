//! Initialization `H₀` from feature matches: closed-form affine least squares
//! and a RANSAC wrapper around it.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::transform::{AffineTransform, Point};

/// Normal matrices with a larger condition number are degenerate.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Reprojection error bound in pixels; inliers satisfy `err < threshold`.
    pub threshold: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            max_iterations: 2000,
            threshold: 2.0,
            min_inliers: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub transform: AffineTransform,
    pub inliers: Vec<bool>,
    /// Iteration whose hypothesis had the best consensus.
    pub best_iteration: usize,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&v| v).count()
    }
}

/// Euclidean reprojection error `‖H·p1 − p2‖`.
pub fn reprojection_error(h: &AffineTransform, pair: &(Point, Point)) -> f64 {
    h.apply(pair.0).distance(pair.1)
}

/// Least-squares affine fit minimizing `Σ ‖H·p1 − p2‖²`.
///
/// Source points are centered and scaled before the normal equations are
/// formed; the configuration is rejected as degenerate when the normalized
/// normal matrix has condition number above [`MAX_CONDITION`].
pub fn estimate_affine_lsq(pairs: &[(Point, Point)]) -> Result<AffineTransform> {
    if pairs.len() < 3 {
        return Err(Error::TooFewMatches {
            found: pairs.len(),
            needed: 3,
        });
    }
    let n = pairs.len() as f64;
    let cx = pairs.iter().map(|p| p.0.x).sum::<f64>() / n;
    let cy = pairs.iter().map(|p| p.0.y).sum::<f64>() / n;
    let spread = (pairs
        .iter()
        .map(|p| (p.0.x - cx).powi(2) + (p.0.y - cy).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::DegenerateConfiguration {
            condition: f64::INFINITY,
        });
    }

    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs_x = Vector3::<f64>::zeros();
    let mut rhs_y = Vector3::<f64>::zeros();
    for (p1, p2) in pairs {
        let row = Vector3::new((p1.x - cx) / spread, (p1.y - cy) / spread, 1.0);
        normal += row * row.transpose();
        rhs_x += row * p2.x;
        rhs_y += row * p2.y;
    }
    let eig = SymmetricEigen::new(normal);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::DegenerateConfiguration { condition });
    }
    let chol = normal
        .cholesky()
        .ok_or(Error::DegenerateConfiguration { condition })?;
    let tx = chol.solve(&rhs_x);
    let ty = chol.solve(&rhs_y);
    let (a1, b1) = (tx[0] / spread, tx[1] / spread);
    let (a2, b2) = (ty[0] / spread, ty[1] / spread);
    Ok(AffineTransform::new(
        a1,
        b1,
        tx[2] - a1 * cx - b1 * cy,
        a2,
        b2,
        ty[2] - a2 * cx - b2 * cy,
    ))
}

fn consensus(h: &AffineTransform, pairs: &[(Point, Point)], threshold: f64) -> Vec<bool> {
    pairs
        .iter()
        .map(|p| reprojection_error(h, p) < threshold)
        .collect()
}

/// Hypothesize-and-verify affine estimation.
///
/// Each iteration fits an exact affine map to three random pairs and counts
/// the pairs it reprojects within the threshold. The best hypothesis (first
/// one wins ties) is refit by least squares on its consensus set, and the
/// inlier mask is recomputed against the refit model.
pub fn ransac_affine(pairs: &[(Point, Point)], cfg: &RansacConfig) -> Result<RansacResult> {
    if cfg.threshold <= 0.0 || cfg.max_iterations == 0 {
        return Err(Error::InvalidInput(
            "RANSAC needs threshold > 0 and at least one iteration".into(),
        ));
    }
    if pairs.len() < 3 {
        return Err(Error::TooFewMatches {
            found: pairs.len(),
            needed: 3,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, usize, Vec<bool>)> = None;
    for iter in 0..cfg.max_iterations {
        let idx = sample(&mut rng, pairs.len(), 3);
        let sample_pairs: Vec<(Point, Point)> = idx.iter().map(|i| pairs[i]).collect();
        let Ok(h) = estimate_affine_lsq(&sample_pairs) else {
            continue;
        };
        if h.determinant().abs() < 1e-6 {
            continue;
        }
        let mask = consensus(&h, pairs, cfg.threshold);
        let count = mask.iter().filter(|&&v| v).count();
        if best.as_ref().is_none_or(|b| count > b.1) {
            best = Some((iter, count, mask));
        }
    }
    let Some((best_iteration, count, mask)) = best else {
        return Err(Error::NoConsensus {
            best: 0,
            needed: cfg.min_inliers,
        });
    };
    if count < cfg.min_inliers.max(3) {
        return Err(Error::NoConsensus {
            best: count,
            needed: cfg.min_inliers,
        });
    }
    let support: Vec<(Point, Point)> = pairs
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| *p)
        .collect();
    let transform = estimate_affine_lsq(&support)?;
    let inliers = consensus(&transform, pairs, cfg.threshold);
    let refit_count = inliers.iter().filter(|&&v| v).count();
    if refit_count < cfg.min_inliers {
        return Err(Error::NoConsensus {
            best: refit_count,
            needed: cfg.min_inliers,
        });
    }
    Ok(RansacResult {
        transform,
        inliers,
        best_iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn truth() -> AffineTransform {
        AffineTransform::new(0.98, -0.05, 12.5, 0.04, 1.03, -7.25)
    }

    fn random_points(n: usize, rng: &mut impl Rng) -> Vec<Point> {
        (0..n)
            .map(|_| Point::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)))
            .collect()
    }

    #[test]
    fn three_exact_pairs_recover_transform() {
        let h = truth();
        let pairs: Vec<(Point, Point)> = [Point::new(10.0, 20.0), Point::new(900.0, 40.0), Point::new(300.0, 700.0)]
            .iter()
            .map(|&p| (p, h.apply(p)))
            .collect();
        let est = estimate_affine_lsq(&pairs).unwrap();
        assert!(est.max_abs_diff(&h) < 1e-9, "{est:?}");
    }

    #[test]
    fn collinear_is_degenerate() {
        let pairs: Vec<(Point, Point)> = (0..3)
            .map(|i| {
                let p = Point::new(i as f64 * 5.0, i as f64 * 5.0);
                (p, p)
            })
            .collect();
        assert!(matches!(
            estimate_affine_lsq(&pairs),
            Err(Error::DegenerateConfiguration { .. })
        ));
        let same = vec![(Point::new(1.0, 1.0), Point::new(1.0, 1.0)); 3];
        assert!(matches!(
            estimate_affine_lsq(&same),
            Err(Error::DegenerateConfiguration { .. })
        ));
    }

    /// Coefficients estimated from noisy pairs stay within three standard
    /// errors of the truth. Standard errors come from the Monte-Carlo spread
    /// of the estimator over independent noise draws.
    #[test]
    fn noisy_regression_is_unbiased() {
        let h = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let src = random_points(100, &mut rng);
        let draw = |rng: &mut ChaCha8Rng| -> [f64; 6] {
            let pairs: Vec<(Point, Point)> = src
                .iter()
                .map(|&p| {
                    let q = h.apply(p);
                    (p, Point::new(q.x + noise.sample(rng), q.y + noise.sample(rng)))
                })
                .collect();
            estimate_affine_lsq(&pairs).unwrap().to_array()
        };
        let runs: Vec<[f64; 6]> = (0..400).map(|_| draw(&mut rng)).collect();
        let single = draw(&mut rng);
        let t = h.to_array();
        for k in 0..6 {
            let mean = runs.iter().map(|r| r[k]).sum::<f64>() / runs.len() as f64;
            let sd = (runs.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (runs.len() - 1) as f64).sqrt();
            assert!((single[k] - t[k]).abs() < 3.0 * sd + 1e-12, "coef {k}");
            assert!((mean - t[k]).abs() < 3.0 * sd / (runs.len() as f64).sqrt() + 1e-12, "bias in coef {k}");
        }
    }

    #[test]
    fn ransac_clean_inliers() {
        let h = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs: Vec<(Point, Point)> = random_points(50, &mut rng).into_iter().map(|p| (p, h.apply(p))).collect();
        let res = ransac_affine(&pairs, &RansacConfig::default()).unwrap();
        assert_eq!(res.inlier_count(), 50);
        assert!(res.transform.max_abs_diff(&h) < 1e-8);
    }

    #[test]
    fn ransac_half_contaminated() {
        let h = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pairs: Vec<(Point, Point)> = random_points(50, &mut rng).into_iter().map(|p| (p, h.apply(p))).collect();
        let outl = random_points(50, &mut rng);
        let dst = random_points(50, &mut rng);
        pairs.extend(outl.into_iter().zip(dst));
        let res = ransac_affine(&pairs, &RansacConfig::default()).unwrap();
        assert!(res.inlier_count() >= 45);
        let mean: f64 = pairs[..50].iter().map(|p| reprojection_error(&res.transform, p)).sum::<f64>() / 50.0;
        assert!(mean < 0.5, "mean reprojection {mean}");
        for (p, &inl) in pairs.iter().zip(&res.inliers) {
            assert_eq!(inl, reprojection_error(&res.transform, p) < 2.0);
        }
        let again = ransac_affine(&pairs, &RansacConfig::default()).unwrap();
        assert_eq!(again, res);
    }

    #[test]
    fn ransac_no_consensus() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pairs: Vec<(Point, Point)> = random_points(5, &mut rng)
            .into_iter()
            .zip(random_points(5, &mut rng))
            .collect();
        assert!(matches!(
            ransac_affine(&pairs, &RansacConfig::default()),
            Err(Error::NoConsensus { .. })
        ));
    }

    #[test]
    fn refit_does_not_worsen_fit_on_consensus() {
        let h = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 0.6).unwrap();
        let pairs: Vec<(Point, Point)> = random_points(80, &mut rng)
            .into_iter()
            .map(|p| {
                let q = h.apply(p);
                (p, Point::new(q.x + noise.sample(&mut rng), q.y + noise.sample(&mut rng)))
            })
            .collect();
        let cfg = RansacConfig::default();
        let res = ransac_affine(&pairs, &cfg).unwrap();
        // Re-run the hypothesis loop to recover the winning 3-point model.
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut hyp = None;
        for iter in 0..=res.best_iteration {
            let idx = sample(&mut rng, pairs.len(), 3);
            if iter == res.best_iteration {
                let s: Vec<(Point, Point)> = idx.iter().map(|i| pairs[i]).collect();
                hyp = Some(estimate_affine_lsq(&s).unwrap());
            }
        }
        let hyp = hyp.unwrap();
        let support: Vec<&(Point, Point)> = pairs.iter().filter(|p| reprojection_error(&hyp, p) < cfg.threshold).collect();
        let mse = |h: &AffineTransform| support.iter().map(|p| reprojection_error(h, p).powi(2)).sum::<f64>() / support.len() as f64;
        assert!(mse(&res.transform) <= mse(&hyp) + 1e-12);
    }
}
