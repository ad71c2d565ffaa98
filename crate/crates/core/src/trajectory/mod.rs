//! Poses, trajectories and their evaluation.
//!
//! Poses are camera-to-world transforms. Relative motions returned by
//! [`estimate_relative_pose`] are expressed in the first camera's frame, so
//! a trajectory is built by right-multiplying them onto the previous pose.
mod align;
pub(crate) mod essential;
mod rpe;

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub use align::{align_similarity, associate, SimilarityAlignment, DEFAULT_MAX_GAP_NS};
pub use essential::{estimate_relative_pose, project_to_essential, Intrinsics, RansacConfig, TwoViewEstimate};
pub use rpe::{relative_pose_error, RpeEntry, RpeReport, DEFAULT_LENGTH_TOLERANCE};

/// A timestamped rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PoseSE3 {
    pub rotation: UnitQuaternion<f64>,
    /// Meters.
    pub translation: Vector3<f64>,
    pub timestamp_ns: i64,
}

impl PoseSE3 {
    pub fn identity(timestamp_ns: i64) -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            timestamp_ns,
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>, timestamp_ns: i64) -> Self {
        Self {
            rotation,
            translation,
            timestamp_ns,
        }
    }

    pub fn from_isometry(iso: &Isometry3<f64>, timestamp_ns: i64) -> Self {
        Self::new(iso.rotation, iso.translation.vector, timestamp_ns)
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    /// Checks the rotation invariant: orthonormal with determinant +1.
    pub fn validate(&self) -> Result<()> {
        let norm = self.rotation.as_ref().norm();
        if !((norm - 1.0).abs() <= 1e-9) || !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTrajectory(format!(
                "pose at {} ns is not a valid rigid transform",
                self.timestamp_ns
            )));
        }
        Ok(())
    }
}

/// Rotation angle of an isometry, radians in `[0, π]`.
pub fn rotation_angle(iso: &Isometry3<f64>) -> f64 {
    iso.rotation.angle()
}

/// Ordered poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    poses: Vec<PoseSE3>,
}

impl Trajectory {
    pub fn new(poses: Vec<PoseSE3>) -> Result<Self> {
        if poses.len() < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "need at least 2 poses, got {}",
                poses.len()
            )));
        }
        for pose in &poses {
            pose.validate()?;
        }
        if let Some(i) = poses.windows(2).position(|w| w[1].timestamp_ns <= w[0].timestamp_ns) {
            return Err(Error::InvalidTrajectory(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[PoseSE3] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.translation).collect()
    }

    /// Cumulative path length at every pose, starting at 0.
    pub fn cumulative_length(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.poses.len());
        let mut total = 0.0;
        acc.push(0.0);
        for w in self.poses.windows(2) {
            total += (w[1].translation - w[0].translation).norm();
            acc.push(total);
        }
        acc
    }

    pub fn path_length(&self) -> f64 {
        self.cumulative_length().last().copied().unwrap_or(0.0)
    }

    /// Applies `g` on the left of every pose (a change of world frame).
    pub fn transformed(&self, g: &Isometry3<f64>) -> Trajectory {
        Trajectory {
            poses: self
                .poses
                .iter()
                .map(|p| PoseSE3::from_isometry(&(g * p.isometry()), p.timestamp_ns))
                .collect(),
        }
    }
}

/// Chains frame-to-frame motions from the identity:
/// `P₀ = I`, `Pₖ₊₁ = Pₖ · Tₖ`. `timestamps` holds one entry per output pose.
pub fn compose_trajectory(relative: &[Isometry3<f64>], timestamps: &[i64]) -> Result<Trajectory> {
    if relative.is_empty() {
        return Err(Error::InvalidTrajectory("no relative poses to compose".into()));
    }
    if timestamps.len() != relative.len() + 1 {
        return Err(Error::InvalidTrajectory(format!(
            "{} relative poses need {} timestamps, got {}",
            relative.len(),
            relative.len() + 1,
            timestamps.len()
        )));
    }
    let mut current = Isometry3::identity();
    let mut poses = Vec::with_capacity(timestamps.len());
    poses.push(PoseSE3::from_isometry(&current, timestamps[0]));
    for (step, &ts) in relative.iter().zip(&timestamps[1..]) {
        current *= step;
        poses.push(PoseSE3::from_isometry(&current, ts));
    }
    Trajectory::new(poses)
}
