//! Benchmark pipelines: controller roster runs, feature tracking along a
//! controller's output, and the minimal monocular VO scored by RPE.
use alloc::string::ToString;
use alloc::vec::Vec;

use nalgebra::{Isometry3, Vector2};

use crate::ae_control::{make_controller, run_controller, AeConfig, ControlStep, ControllerKind};
use crate::emulation::BracketCycle;
use crate::error::{domain, Result};
use crate::features::{detect_keypoints_with, grid_uniformity, match_features_with, FeatureConfig, Keypoint};
use crate::image::RawImage;
use crate::photometry::ResponseCurve;
use crate::stats;
use crate::trajectory::essential::depths;
use crate::trajectory::{
    align_similarity, compose_trajectory, estimate_relative_pose, relative_pose_error, Intrinsics, RansacConfig,
    RpeReport, Trajectory,
};

/// All steps of one controller over one sequence.
#[derive(Debug, Clone)]
pub struct ControllerRun {
    pub kind: ControllerKind,
    pub steps: Vec<ControlStep>,
}

impl ControllerRun {
    pub fn images(&self) -> Vec<&RawImage> {
        self.steps.iter().map(|s| &s.emulated.image).collect()
    }

    pub fn mean_saturation(&self) -> f64 {
        stats::mean(&self.steps.iter().map(|s| s.saturation_fraction).collect::<Vec<_>>()).unwrap_or(0.0)
    }

    /// Cycle timestamps (first bracket) of every step.
    pub fn timestamps_ns(&self, sequence: &[BracketCycle]) -> Vec<i64> {
        self.steps
            .iter()
            .zip(sequence)
            .map(|(_, c)| c.images()[0].timestamp_ns)
            .collect()
    }
}

/// Runs every controller in `kinds` over `sequence`.
pub fn run_roster(
    sequence: &[BracketCycle],
    kinds: &[ControllerKind],
    crf: &ResponseCurve,
    config: &AeConfig,
) -> Result<Vec<ControllerRun>> {
    let first = sequence
        .first()
        .ok_or_else(|| domain("cannot benchmark an empty sequence"))?;
    kinds
        .iter()
        .map(|&kind| {
            let mut controller = make_controller(kind, config, first, crf)?;
            let steps = run_controller(sequence, controller.as_mut(), crf, config.sat_threshold)?;
            Ok(ControllerRun { kind, steps })
        })
        .collect()
}

/// Matching statistics of consecutive frames `frame_pair` and
/// `frame_pair + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FramePairStats {
    pub frame_pair: usize,
    pub matches: usize,
    pub uniformity_pct_a: f64,
}

#[derive(Debug, Clone)]
pub struct PairTrack {
    pub stats: FramePairStats,
    /// Pixel positions `(in A, in B)` of every match.
    pub correspondences: Vec<(Vector2<f64>, Vector2<f64>)>,
}

/// Detects keypoints in every image and matches each consecutive pair.
pub fn track_features(images: &[&RawImage], config: &FeatureConfig) -> Result<Vec<PairTrack>> {
    let keypoints: Vec<Vec<Keypoint>> = images
        .iter()
        .map(|img| detect_keypoints_with(img, config))
        .collect::<Result<_>>()?;
    Ok((0..images.len().saturating_sub(1))
        .map(|i| {
            let (a, b) = (images[i], images[i + 1]);
            let m = match_features_with(a, &keypoints[i], b, &keypoints[i + 1], config);
            let correspondences = m
                .pairs
                .iter()
                .map(|&(ia, ib)| {
                    let (ka, kb) = (keypoints[i][ia], keypoints[i + 1][ib]);
                    (Vector2::new(ka.x, ka.y), Vector2::new(kb.x, kb.y))
                })
                .collect();
            PairTrack {
                stats: FramePairStats {
                    frame_pair: i,
                    matches: m.count(),
                    uniformity_pct_a: grid_uniformity(&keypoints[i], a.width(), a.height()),
                },
                correspondences,
            }
        })
        .collect())
}

/// Lower quartile, median and upper quartile.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            q1: stats::quantile(values, 0.25)?,
            median: stats::median(values)?,
            q3: stats::quantile(values, 0.75)?,
        })
    }
}

/// Chains two-view estimates into a trajectory.
///
/// Each step's unit translation is rescaled so that the median depth of its
/// inliers in the first view is 1, which keeps a consistent scale over a
/// roughly constant-depth scene. The global scale is left to the similarity
/// alignment.
pub fn visual_odometry(
    tracks: &[PairTrack],
    timestamps_ns: &[i64],
    intrinsics: &Intrinsics,
    ransac: &RansacConfig,
) -> Result<Trajectory> {
    if timestamps_ns.len() != tracks.len() + 1 {
        return Err(domain("VO needs one timestamp per frame"));
    }
    let mut motions = Vec::with_capacity(tracks.len());
    for track in tracks {
        let est = estimate_relative_pose(&track.correspondences, intrinsics, ransac)?;
        let inv = est.motion.inverse();
        let r = inv.rotation.to_rotation_matrix().into_inner();
        let t = inv.translation.vector;
        let mut d: Vec<f64> = track
            .correspondences
            .iter()
            .zip(&est.inliers)
            .filter(|(_, inlier)| **inlier)
            .map(|((a, b), _)| depths(&r, &t, &intrinsics.normalize(a), &intrinsics.normalize(b)).0)
            .filter(|d| *d > 0.0)
            .collect();
        d.sort_by(f64::total_cmp);
        let scale = stats::median(&d).filter(|m| *m > 0.0).map_or(1.0, |m| 1.0 / m);
        let mut motion: Isometry3<f64> = est.motion;
        motion.translation.vector *= scale;
        motions.push(motion);
    }
    compose_trajectory(&motions, timestamps_ns)
}

/// Similarity-aligns `estimate` to `reference` and reports RPE.
pub fn score_trajectory(
    estimate: &Trajectory,
    reference: &Trajectory,
    lengths_m: &[f64],
    max_gap_ns: i64,
) -> Result<RpeReport> {
    let alignment = align_similarity(estimate, reference, max_gap_ns)?;
    Ok(relative_pose_error(&alignment.aligned, reference, lengths_m))
}

/// Outcome of VO on one controller's images.
#[derive(Debug, Clone)]
pub enum VoOutcome {
    Scored(RpeReport),
    Failed(alloc::string::String),
}

/// Tracks features, runs VO and scores against `reference`; estimation
/// failures become [`VoOutcome::Failed`].
pub fn evaluate_run(
    images: &[&RawImage],
    timestamps_ns: &[i64],
    reference: &Trajectory,
    intrinsics: &Intrinsics,
    features: &FeatureConfig,
    ransac: &RansacConfig,
    lengths_m: &[f64],
    max_gap_ns: i64,
) -> Result<(Vec<PairTrack>, VoOutcome)> {
    let tracks = track_features(images, features)?;
    let outcome = match visual_odometry(&tracks, timestamps_ns, intrinsics, ransac)
        .and_then(|est| score_trajectory(&est, reference, lengths_m, max_gap_ns))
    {
        Ok(report) => VoOutcome::Scored(report),
        Err(e) => VoOutcome::Failed(e.to_string()),
    };
    Ok((tracks, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::PoseSE3;
    use nalgebra::{UnitQuaternion, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quartiles() {
        assert_eq!(Quartiles::of(&[]), None);
        let q = Quartiles::of(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (2.0, 3.0, 4.0));
    }

    #[test]
    fn vo_recovers_straight_track() {
        let k = Intrinsics::new(300.0, 300.0, 160.0, 120.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<Vector3<f64>> = (0..150)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.2..1.2),
                    rng.random_range(-0.9..0.9),
                    rng.random_range(1.5..2.5),
                )
            })
            .collect();
        let centers: Vec<Vector3<f64>> = (0..8)
            .map(|i| Vector3::new(0.06 * i as f64, 0.004 * (i * i) as f64, 0.0))
            .collect();
        let project = |c: &Vector3<f64>, p: &Vector3<f64>| k.project(&(p - c));
        let tracks: Vec<PairTrack> = centers
            .windows(2)
            .enumerate()
            .map(|(i, w)| PairTrack {
                stats: FramePairStats {
                    frame_pair: i,
                    matches: points.len(),
                    uniformity_pct_a: 0.0,
                },
                correspondences: points.iter().map(|p| (project(&w[0], p), project(&w[1], p))).collect(),
            })
            .collect();
        let ts: Vec<i64> = (0..8).map(|i| i * 100_000_000).collect();
        let est = visual_odometry(&tracks, &ts, &k, &RansacConfig::default()).unwrap();
        let reference = Trajectory::new(
            centers
                .iter()
                .zip(&ts)
                .map(|(c, &t)| PoseSE3::new(UnitQuaternion::identity(), *c, t))
                .collect(),
        )
        .unwrap();
        let report = score_trajectory(&est, &reference, &[0.12], DEFAULT_GAP).unwrap();
        let err = report.entries[0].median_translation_pct.unwrap();
        assert!(err < 0.5, "{err}");
        assert!(visual_odometry(&tracks, &ts[..3], &k, &RansacConfig::default()).is_err());
    }

    const DEFAULT_GAP: i64 = crate::trajectory::DEFAULT_MAX_GAP_NS;

    #[test]
    fn identical_frames_track_fully() {
        let img = RawImage::from_fn(64, 64, 1.0, |x, y| {
            let (x, y) = (x as f64, y as f64);
            let v = (0.37 * x + 0.11 * y).sin() + (0.23 * y - 0.05 * x * x / 9.0).cos() + (0.017 * x * y).sin();
            (2000.0 + 600.0 * v) as u16
        })
        .unwrap();
        let tracks = track_features(&[&img, &img], &FeatureConfig::default()).unwrap();
        assert_eq!(tracks.len(), 1);
        assert!(tracks[0].stats.matches > 0);
        assert!(tracks[0].correspondences.iter().all(|(a, b)| a == b));
        assert!(track_features(&[&img], &FeatureConfig::default()).unwrap().is_empty());
    }
}
