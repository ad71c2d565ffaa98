use alloc::vec::Vec;

use nalgebra::UnitQuaternion;
#[allow(unused_imports)]
use num_traits::Float;

use super::{associate, Trajectory, DEFAULT_MAX_GAP_NS};
use crate::stats;

/// Accepted relative deviation between a segment's reference length and the
/// requested length.
pub const DEFAULT_LENGTH_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RpeEntry {
    pub length_m: f64,
    pub pair_count: usize,
    /// `None` when no pose pair spans this length.
    pub median_translation_pct: Option<f64>,
    pub median_rotation_deg_per_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RpeReport {
    pub entries: Vec<RpeEntry>,
}

/// Relative pose error over path segments of the given lengths.
///
/// Poses are associated by timestamp (nearest within 50 ms). For every start
/// pose `i` and length `d`, the end pose `j` is the one whose reference path
/// length from `i` is closest to `d`, kept if within 20 % of `d`. The error
/// pose is `(Qᵢ⁻¹Qⱼ)⁻¹(Pᵢ⁻¹Pⱼ)` with `Q` the reference and `P` the estimate.
pub fn relative_pose_error(est: &Trajectory, reference: &Trajectory, segment_lengths: &[f64]) -> RpeReport {
    let pairs = associate(est, reference, DEFAULT_MAX_GAP_NS);
    let p: Vec<_> = pairs.iter().map(|&(i, _)| est.poses()[i].isometry()).collect();
    let q: Vec<_> = pairs.iter().map(|&(_, j)| reference.poses()[j].isometry()).collect();
    let mut acc = Vec::with_capacity(q.len());
    let mut total = 0.0;
    for (k, pose) in q.iter().enumerate() {
        if k > 0 {
            total += (pose.translation.vector - q[k - 1].translation.vector).norm();
        }
        acc.push(total);
    }

    let entries = segment_lengths
        .iter()
        .map(|&d| {
            let mut trans = Vec::new();
            let mut rot = Vec::new();
            if d > 0.0 {
                for i in 0..q.len() {
                    let goal = acc[i] + d;
                    let k = acc.partition_point(|&a| a < goal);
                    let j = [k.checked_sub(1), Some(k)]
                        .into_iter()
                        .flatten()
                        .filter(|&j| j > i && j < acc.len())
                        .min_by(|&a, &b| (acc[a] - goal).abs().total_cmp(&(acc[b] - goal).abs()));
                    let Some(j) = j else { continue };
                    if (acc[j] - acc[i] - d).abs() > DEFAULT_LENGTH_TOLERANCE * d {
                        continue;
                    }
                    let rel_ref = q[i].inverse() * q[j];
                    let rel_est = p[i].inverse() * p[j];
                    let dt = rel_ref
                        .rotation
                        .inverse_transform_vector(&(rel_est.translation.vector - rel_ref.translation.vector));
                    trans.push(dt.norm() / d * 100.0);
                    rot.push(quaternion_distance(&rel_ref.rotation, &rel_est.rotation).to_degrees() / d);
                }
            }
            RpeEntry {
                length_m: d,
                pair_count: trans.len(),
                median_translation_pct: stats::median(&trans),
                median_rotation_deg_per_m: stats::median(&rot),
            }
        })
        .collect();
    RpeReport { entries }
}

/// Angle of `a⁻¹b` from the chord between the quaternions; exactly zero for
/// equal inputs.
fn quaternion_distance(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let (a, b) = (a.as_ref().coords, b.as_ref().coords);
    let chord = (a - b).norm().min((a + b).norm());
    4.0 * (0.5 * chord).min(1.0).asin()
}
