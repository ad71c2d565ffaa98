use alloc::vec::Vec;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};

use super::{PoseSE3, Trajectory};
use crate::error::{Error, Result};

/// Largest timestamp gap accepted when pairing poses of two trajectories.
pub const DEFAULT_MAX_GAP_NS: i64 = 50_000_000;

/// Pairs each pose of `est` with the nearest-in-time pose of `reference`
/// within `max_gap_ns`. Every reference pose is used at most once.
pub fn associate(est: &Trajectory, reference: &Trajectory, max_gap_ns: i64) -> Vec<(usize, usize)> {
    let ref_ts: Vec<i64> = reference.poses().iter().map(|p| p.timestamp_ns).collect();
    let mut used = alloc::vec![false; ref_ts.len()];
    let mut pairs = Vec::new();
    for (i, pose) in est.poses().iter().enumerate() {
        let t = pose.timestamp_ns;
        let k = ref_ts.partition_point(|&r| r < t);
        let nearest = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter(|&j| j < ref_ts.len())
            .min_by_key(|&j| (ref_ts[j] - t).abs());
        if let Some(j) = nearest {
            if (ref_ts[j] - t).abs() <= max_gap_ns && !used[j] {
                used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Least-squares similarity `ref ≈ s·R·est + t` and the aligned estimate.
#[derive(Debug, Clone)]
pub struct SimilarityAlignment {
    pub scale: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    /// Estimated trajectory mapped into the reference frame.
    pub aligned: Trajectory,
    /// `(est index, ref index)` pairs used for the fit.
    pub pairs: Vec<(usize, usize)>,
}

impl SimilarityAlignment {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }
}

/// Closed-form (Umeyama) similarity alignment over timestamp-associated
/// positions.
pub fn align_similarity(est: &Trajectory, reference: &Trajectory, max_gap_ns: i64) -> Result<SimilarityAlignment> {
    let pairs = associate(est, reference, max_gap_ns);
    if pairs.len() < 3 {
        return Err(Error::AlignmentInsufficient(pairs.len()));
    }
    let src: Vec<Vector3<f64>> = pairs.iter().map(|&(i, _)| est.poses()[i].translation).collect();
    let dst: Vec<Vector3<f64>> = pairs.iter().map(|&(_, j)| reference.poses()[j].translation).collect();
    let n = src.len() as f64;
    let mu_src = src.iter().sum::<Vector3<f64>>() / n;
    let mu_dst = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_src = 0.0;
    for (s, d) in src.iter().zip(&dst) {
        let ds = s - mu_src;
        cov += (d - mu_dst) * ds.transpose();
        var_src += ds.norm_squared();
    }
    cov /= n;
    var_src /= n;

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(var_src > 0.0) || !(sv[1] > 1e-12 * sv[0]) {
        return Err(Error::RankDeficient);
    }
    let mut s_fix = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        s_fix[(2, 2)] = -1.0;
    }
    let r = u * s_fix * v_t;
    let d = svd.singular_values;
    let trace = d[0] * s_fix[(0, 0)] + d[1] * s_fix[(1, 1)] + d[2] * s_fix[(2, 2)];
    let scale = trace / var_src;
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let translation = mu_dst - scale * (rotation * mu_src);

    let g = Isometry3::from_parts(Translation3::from(translation), rotation);
    let aligned = est
        .poses()
        .iter()
        .map(|p| {
            let scaled = Isometry3::from_parts(Translation3::from(p.translation * scale), p.rotation);
            PoseSE3::from_isometry(&(g * scaled), p.timestamp_ns)
        })
        .collect();
    Ok(SimilarityAlignment {
        scale,
        rotation,
        translation,
        aligned: Trajectory::new(aligned)?,
        pairs,
    })
}
