//! Two-view relative pose from point correspondences.
//!
//! Normalized 8-point essential matrix estimation inside a seeded RANSAC
//! loop, scored with the truncated Sampson distance. The best few distinct
//! hypotheses, plus a pure-translation seed from the mean image motion, are
//! decomposed with the cheirality test and polished by Levenberg-Marquardt
//! on the inlier Sampson residuals. The cheapest result wins.
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector2, Vector3};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self { fx, fy, cx, cy }
    }

    fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Domain("intrinsics need positive focal lengths".into()));
        }
        Ok(())
    }

    pub fn normalize(&self, px: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    pub fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RansacConfig {
    pub iterations: usize,
    /// Inlier threshold on the Sampson distance, pixels.
    pub threshold_px: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            threshold_px: 1.5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoViewEstimate {
    /// Pose of the second camera in the first camera's frame; the
    /// translation has unit norm.
    pub motion: Isometry3<f64>,
    /// Essential matrix with `x₂ᵀ E x₁ = 0` in normalized coordinates.
    pub essential: Matrix3<f64>,
    pub inliers: Vec<bool>,
}

impl TwoViewEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Replaces the singular values of `e` with `(1, 1, 0)`.
pub fn project_to_essential(e: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = e.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * v_t
}

/// Similarity that moves the centroid to the origin and sets the mean
/// distance to √2.
fn hartley_transform(points: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    let s = if mean_dist > 0.0 {
        core::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * centroid.x, 0.0, s, -s * centroid.y, 0.0, 0.0, 1.0)
}

fn apply(t: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let h = t * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(h.x / h.z, h.y / h.z)
}

/// Linear 8-point estimate from `idx` correspondences, already projected.
fn eight_point(x1: &[Vector2<f64>], x2: &[Vector2<f64>], idx: &[usize]) -> Option<Matrix3<f64>> {
    let p1: Vec<Vector2<f64>> = idx.iter().map(|&i| x1[i]).collect();
    let p2: Vec<Vector2<f64>> = idx.iter().map(|&i| x2[i]).collect();
    let t1 = hartley_transform(&p1);
    let t2 = hartley_transform(&p2);
    let rows = idx.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (r, (q1, q2)) in p1.iter().zip(&p2).enumerate() {
        let a1 = apply(&t1, q1);
        let a2 = apply(&t2, q2);
        let row = [
            a2.x * a1.x,
            a2.x * a1.y,
            a2.x,
            a2.y * a1.x,
            a2.y * a1.y,
            a2.y,
            a1.x,
            a1.y,
            1.0,
        ];
        for (c, v) in row.iter().enumerate() {
            a[(r, c)] = *v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let f = v_t.row(min_idx);
    let e_hat = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    let e = t2.transpose() * e_hat * t1;
    if !e.iter().all(|v| v.is_finite()) || e.norm() == 0.0 {
        return None;
    }
    Some(project_to_essential(&(e / e.norm())))
}

fn sampson(e: &Matrix3<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let x1 = Vector3::new(a.x, a.y, 1.0);
    let x2 = Vector3::new(b.x, b.y, 1.0);
    let ex1 = e * x1;
    let etx2 = e.transpose() * x2;
    let num = x2.dot(&ex1);
    let den = ex1.x * ex1.x + ex1.y * ex1.y + etx2.x * etx2.x + etx2.y * etx2.y;
    if den <= 0.0 {
        f64::INFINITY
    } else {
        num * num / den
    }
}

/// Depths of a correspondence along both rays for `x₂ ∝ R x₁ + t`.
pub(crate) fn depths(r: &Matrix3<f64>, t: &Vector3<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> (f64, f64) {
    let ray1 = r * Vector3::new(a.x, a.y, 1.0);
    let ray2 = Vector3::new(b.x, b.y, 1.0);
    // Least squares for [ray1, -ray2] [d1, d2]ᵀ = -t.
    let m11 = ray1.dot(&ray1);
    let m12 = -ray1.dot(&ray2);
    let m22 = ray2.dot(&ray2);
    let r1 = -ray1.dot(t);
    let r2 = ray2.dot(t);
    let det = m11 * m22 - m12 * m12;
    if det.abs() < 1e-15 {
        return (0.0, 0.0);
    }
    ((r1 * m22 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det)
}

fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

fn sampson_residual(e: &Matrix3<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let x1 = Vector3::new(a.x, a.y, 1.0);
    let x2 = Vector3::new(b.x, b.y, 1.0);
    let ex1 = e * x1;
    let etx2 = e.transpose() * x2;
    let den = ex1.x * ex1.x + ex1.y * ex1.y + etx2.x * etx2.x + etx2.y * etx2.y;
    if den <= 0.0 {
        0.0
    } else {
        x2.dot(&ex1) / den.sqrt()
    }
}

/// `(R, t)` after a 5-parameter update: rotation increment `ω` and a step
/// of `t` in its tangent plane.
fn perturb(
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    basis: &[Vector3<f64>; 2],
    delta: &DVector<f64>,
) -> (Matrix3<f64>, Vector3<f64>) {
    let w = Vector3::new(delta[0], delta[1], delta[2]);
    let r = Rotation3::new(w).matrix() * r;
    let t = (t + basis[0] * delta[3] + basis[1] * delta[4]).normalize();
    (r, t)
}

fn tangent_basis(t: &Vector3<f64>) -> [Vector3<f64>; 2] {
    let helper = if t.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let b0 = t.cross(&helper).normalize();
    let b1 = t.cross(&b0).normalize();
    [b0, b1]
}

/// Levenberg-Marquardt on the Sampson residuals of `idx`, for
/// `x₂ ∝ R x₁ + t` with `|t| = 1`.
fn refine_pose(
    r: Matrix3<f64>,
    t: Vector3<f64>,
    x1: &[Vector2<f64>],
    x2: &[Vector2<f64>],
    idx: &[usize],
) -> (Matrix3<f64>, Vector3<f64>) {
    let residuals = |r: &Matrix3<f64>, t: &Vector3<f64>| -> DVector<f64> {
        let e = skew(t) * r;
        DVector::from_iterator(idx.len(), idx.iter().map(|&i| sampson_residual(&e, &x1[i], &x2[i])))
    };
    let (mut r, mut t) = (r, t);
    let mut res = residuals(&r, &t);
    let mut cost = res.norm_squared();
    let mut lambda = 1e-3;
    let h = 1e-7;
    for _ in 0..30 {
        let basis = tangent_basis(&t);
        let mut jac = DMatrix::<f64>::zeros(idx.len(), 5);
        for k in 0..5 {
            let mut d = DVector::zeros(5);
            d[k] = h;
            let (rp, tp) = perturb(&r, &t, &basis, &d);
            jac.set_column(k, &((residuals(&rp, &tp) - &res) / h));
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &res;
        let mut improved = false;
        for _ in 0..8 {
            let mut a = jtj.clone();
            for k in 0..5 {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let (rn, tn) = perturb(&r, &t, &basis, &step);
            let rn_res = residuals(&rn, &tn);
            let rn_cost = rn_res.norm_squared();
            if rn_cost < cost {
                let gain = cost - rn_cost;
                (r, t, res, cost) = (rn, tn, rn_res, rn_cost);
                lambda = (lambda * 0.3).max(1e-12);
                improved = gain > 1e-15 * cost.max(1e-300);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (r, t)
}

fn sample_indices(rng: &mut ChaCha8Rng, n: usize, out: &mut [usize; 8]) {
    let mut k = 0;
    while k < 8 {
        let candidate = rng.random_range(0..n);
        if !out[..k].contains(&candidate) {
            out[k] = candidate;
            k += 1;
        }
    }
}

/// Refined `(R, t)`, its inlier mask and truncated cost.
type Polished = (Matrix3<f64>, Vector3<f64>, Vec<bool>, f64);

/// Hypotheses polished after sampling.
const MAX_POLISHED: usize = 4;
/// Translation directions closer than this cosine count as one hypothesis.
const DISTINCT_COS: f64 = 0.985;

/// The `(R, t)` factorization of `e` that puts the most inliers in front of
/// both cameras.
fn decompose(
    e: &Matrix3<f64>,
    x1: &[Vector2<f64>],
    x2: &[Vector2<f64>],
    inliers: &[bool],
) -> Option<(Matrix3<f64>, Vector3<f64>)> {
    let svd = e.svd(true, true);
    let mut u = svd.u?;
    let mut v_t = svd.v_t?;
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let t_dir: Vector3<f64> = u.column(2).into();
    let mut best: Option<(Matrix3<f64>, Vector3<f64>, usize)> = None;
    for r in [u * w * v_t, u * w.transpose() * v_t] {
        for t in [t_dir, -t_dir] {
            let front = (0..x1.len())
                .filter(|&i| inliers[i])
                .filter(|&i| {
                    let (d1, d2) = depths(&r, &t, &x1[i], &x2[i]);
                    d1 > 0.0 && d2 > 0.0
                })
                .count();
            if best.as_ref().is_none_or(|(_, _, c)| front > *c) {
                best = Some((r, t, front));
            }
        }
    }
    best.filter(|b| b.2 > 0).map(|(r, t, _)| (r, t))
}

/// Estimates the motion of camera B relative to camera A from pixel
/// correspondences `(a, b)`.
pub fn estimate_relative_pose(
    matches: &[(Vector2<f64>, Vector2<f64>)],
    intrinsics: &Intrinsics,
    ransac: &RansacConfig,
) -> Result<TwoViewEstimate> {
    if matches.len() < 8 {
        return Err(Error::InsufficientCorrespondences(matches.len()));
    }
    intrinsics.validate()?;
    let x1: Vec<Vector2<f64>> = matches.iter().map(|(a, _)| intrinsics.normalize(a)).collect();
    let x2: Vec<Vector2<f64>> = matches.iter().map(|(_, b)| intrinsics.normalize(b)).collect();
    let focal = 0.5 * (intrinsics.fx + intrinsics.fy);
    let threshold = (ransac.threshold_px / focal).powi(2);
    let n = matches.len();

    // Truncated Sampson cost. Counting inliers alone cannot separate the two
    // poses that explain a near-planar scene equally well within threshold.
    let score = |e: &Matrix3<f64>| -> (usize, f64) {
        let mut count = 0;
        let mut total = 0.0;
        for (a, b) in x1.iter().zip(&x2) {
            let d = sampson(e, a, b);
            if d < threshold {
                count += 1;
            }
            total += d.min(threshold);
        }
        (count, total)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(ransac.seed);
    let mut hypotheses: Vec<(Matrix3<f64>, f64)> = Vec::new();
    let mut idx = [0usize; 8];
    let all: Vec<usize> = (0..n).collect();
    let iterations = if n == 8 { 1 } else { ransac.iterations.max(1) };
    for _ in 0..iterations {
        let chosen: &[usize] = if n == 8 {
            &all
        } else {
            sample_indices(&mut rng, n, &mut idx);
            &idx
        };
        let Some(e) = eight_point(&x1, &x2, chosen) else {
            continue;
        };
        hypotheses.push((e, score(&e).1));
    }
    if hypotheses.is_empty() {
        return Err(Error::DegenerateGeometry("no model could be fit"));
    }
    hypotheses.sort_by(|a, b| a.1.total_cmp(&b.1));

    let inliers_of =
        |e: &Matrix3<f64>| -> Vec<bool> { x1.iter().zip(&x2).map(|(a, b)| sampson(e, a, b) < threshold).collect() };
    let count = |v: &[bool]| v.iter().filter(|&&b| b).count();

    // Near-planar scenes admit a second pose (rotation plus motion along the
    // plane normal) that fits almost as well, and the best sample often lands
    // in its basin. Polish several distinct hypotheses and keep the cheapest.
    // A pure-translation seed from the mean image motion covers the case
    // where every sample lands in the wrong basin.
    let flow = x1.iter().zip(&x2).fold(Vector2::zeros(), |acc, (a, b)| acc + (b - a)) / n as f64;
    let mut seeds: Vec<Matrix3<f64>> = hypotheses.iter().map(|h| h.0).collect();
    if flow.norm() > 0.0 {
        let t = Vector3::new(flow.x, flow.y, 0.0).normalize();
        seeds.insert(1.min(seeds.len()), skew(&t));
    }
    let mut refined: Vec<Polished> = Vec::new();
    for (k, seed) in seeds.iter().enumerate() {
        if refined.len() >= MAX_POLISHED {
            break;
        }
        let mut essential = *seed;
        let mut inliers = inliers_of(&essential);
        if k == 0 {
            let inlier_idx: Vec<usize> = (0..n).filter(|&i| inliers[i]).collect();
            if inlier_idx.len() >= 8 {
                if let Some(refit) = eight_point(&x1, &x2, &inlier_idx) {
                    let refit_inliers = inliers_of(&refit);
                    if count(&refit_inliers) >= count(&inliers) {
                        essential = refit;
                        inliers = refit_inliers;
                    }
                }
            }
        }
        let Some((r, t)) = decompose(&essential, &x1, &x2, &inliers) else {
            continue;
        };
        if refined.iter().any(|(_, rt, _, _)| rt.dot(&t) > DISTINCT_COS) {
            continue;
        }
        let (mut r, mut t) = (r, t);
        for _ in 0..3 {
            let idx: Vec<usize> = (0..n).filter(|&i| inliers[i]).collect();
            if idx.len() < 8 {
                break;
            }
            (r, t) = refine_pose(r, t, &x1, &x2, &idx);
            let next = inliers_of(&(skew(&t) * r));
            if next == inliers {
                break;
            }
            inliers = next;
        }
        let front = (0..n)
            .filter(|&i| inliers[i])
            .filter(|&i| {
                let (d1, d2) = depths(&r, &t, &x1[i], &x2[i]);
                d1 > 0.0 && d2 > 0.0
            })
            .count();
        if 2 * front <= count(&inliers) {
            continue;
        }
        let cost = score(&(skew(&t) * r)).1;
        refined.push((r, t, inliers, cost));
    }
    let (r, t, inliers, _) = refined
        .into_iter()
        .min_by(|a, b| a.3.total_cmp(&b.3))
        .ok_or(Error::DegenerateGeometry("no decomposition passes cheirality"))?;
    let essential = skew(&t) * r;
    // x₂ = R x₁ + t maps camera-A coordinates into camera B; the pose of B in
    // A is the inverse.
    let rot_ab = Rotation3::from_matrix_unchecked(r);
    let rotation = UnitQuaternion::from_rotation_matrix(&rot_ab.inverse());
    let center = -(rot_ab.inverse() * t);
    let center = center / center.norm();
    Ok(TwoViewEstimate {
        motion: Isometry3::from_parts(Translation3::from(center), rotation),
        essential,
        inliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_matches() {
        let m = alloc::vec![(Vector2::zeros(), Vector2::zeros()); 7];
        let k = Intrinsics::new(500.0, 500.0, 320.0, 240.0);
        assert_eq!(
            estimate_relative_pose(&m, &k, &RansacConfig::default()).unwrap_err(),
            Error::InsufficientCorrespondences(7)
        );
    }

    #[test]
    fn projection_has_two_equal_singular_values() {
        let e = Matrix3::new(0.3, -1.2, 0.5, 2.0, 0.1, -0.7, 0.4, 0.9, 1.1);
        let p = project_to_essential(&e);
        let s = p.svd(false, false).singular_values;
        let mut s: alloc::vec::Vec<f64> = s.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        assert!((s[0] - s[1]).abs() < 1e-9);
        assert!(s[2].abs() < 1e-9);
    }
}
