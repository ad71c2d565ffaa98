use aebench_core::nalgebra::{Isometry3, Matrix3, Point3, Translation3, UnitQuaternion, Vector2, Vector3};
use aebench_core::trajectory::{
    align_similarity, compose_trajectory, estimate_relative_pose, project_to_essential, relative_pose_error,
    rotation_angle, Intrinsics, PoseSE3, RansacConfig, Trajectory, DEFAULT_MAX_GAP_NS,
};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const STEP_NS: i64 = 100_000_000;

fn iso(axis: Vector3<f64>, angle: f64, t: Vector3<f64>) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::from(t),
        UnitQuaternion::from_scaled_axis(axis.normalize() * angle),
    )
}

/// A smooth 3-D path with slowly turning heading.
fn reference_path(n: usize) -> Trajectory {
    let steps: Vec<Isometry3<f64>> = (0..n - 1)
        .map(|i| {
            let f = i as f64 * 0.05;
            iso(
                Vector3::new(0.1, 0.3, 1.0),
                0.02 * f.sin(),
                Vector3::new(0.1, 0.01 * f.cos(), 0.005),
            )
        })
        .collect();
    let ts: Vec<i64> = (0..n as i64).map(|i| i * STEP_NS).collect();
    compose_trajectory(&steps, &ts).unwrap()
}

fn relative_steps(t: &Trajectory) -> Vec<Isometry3<f64>> {
    t.poses()
        .windows(2)
        .map(|w| w[0].isometry().inverse() * w[1].isometry())
        .collect()
}

fn timestamps(t: &Trajectory) -> Vec<i64> {
    t.poses().iter().map(|p| p.timestamp_ns).collect()
}

fn random_iso(rng: &mut ChaCha8Rng) -> Isometry3<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let t = Vector3::new(
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
    );
    iso(axis + Vector3::new(0.0, 0.0, 1e-3), rng.random_range(-3.0..3.0), t)
}

const LENGTHS: [f64; 3] = [1.0, 2.0, 4.0];

#[test]
fn rpe_of_self_is_exactly_zero() {
    let t = reference_path(120);
    let report = relative_pose_error(&t, &t, &LENGTHS);
    for e in &report.entries {
        assert!(e.pair_count > 0);
        assert_eq!(e.median_translation_pct, Some(0.0));
        assert_eq!(e.median_rotation_deg_per_m, Some(0.0));
    }
}

#[test]
fn one_percent_drift_scores_one_percent() {
    let reference = reference_path(200);
    let stretched: Vec<Isometry3<f64>> = relative_steps(&reference)
        .into_iter()
        .map(|s| Isometry3::from_parts(Translation3::from(s.translation.vector * 1.01), s.rotation))
        .collect();
    let est = compose_trajectory(&stretched, &timestamps(&reference)).unwrap();
    let report = relative_pose_error(&est, &reference, &LENGTHS);
    for e in &report.entries {
        let pct = e.median_translation_pct.unwrap();
        assert!((pct - 1.0).abs() <= 0.2, "length {} gave {pct}", e.length_m);
    }
}

#[test]
fn global_offset_scores_zero() {
    let reference = reference_path(120);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let est = reference.transformed(&random_iso(&mut rng));
    for e in relative_pose_error(&est, &reference, &LENGTHS).entries {
        assert!(e.median_translation_pct.unwrap() < 1e-9);
        assert!(e.median_rotation_deg_per_m.unwrap() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rpe_is_rigid_invariant(seed in any::<u64>(), noise in 0.0f64..0.02) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reference = reference_path(80);
        let noisy: Vec<Isometry3<f64>> = relative_steps(&reference)
            .into_iter()
            .map(|s| {
                let jitter = iso(Vector3::new(rng.random_range(-1.0..1.0), 1.0, 0.0), noise, Vector3::new(noise, -noise, 0.5 * noise));
                s * jitter
            })
            .collect();
        let est = compose_trajectory(&noisy, &timestamps(&reference)).unwrap();
        let g = random_iso(&mut rng);
        let base = relative_pose_error(&est, &reference, &LENGTHS);
        let moved = relative_pose_error(&est.transformed(&g), &reference, &LENGTHS);
        for (a, b) in base.entries.iter().zip(&moved.entries) {
            prop_assert_eq!(a.pair_count, b.pair_count);
            prop_assert!((a.median_translation_pct.unwrap() - b.median_translation_pct.unwrap()).abs() < 1e-9);
            prop_assert!((a.median_rotation_deg_per_m.unwrap() - b.median_rotation_deg_per_m.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn compose_matches_product(seed in any::<u64>(), n in 1usize..20, split in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps: Vec<Isometry3<f64>> = (0..n).map(|_| random_iso(&mut rng)).collect();
        let ts: Vec<i64> = (0..=n as i64).map(|i| i * STEP_NS).collect();
        let t = compose_trajectory(&steps, &ts).unwrap();
        prop_assert_eq!(t.len(), n + 1);
        let product = steps.iter().fold(Isometry3::identity(), |acc, s| acc * s);
        let last = t.poses()[n].isometry();
        prop_assert!((last.translation.vector - product.translation.vector).norm() < 1e-9);
        prop_assert!(last.rotation.angle_to(&product.rotation) < 1e-9);

        let k = split.min(n - 1) + 1;
        if k < n {
            let head = compose_trajectory(&steps[..k], &ts[..=k]).unwrap();
            let tail = compose_trajectory(&steps[k..], &ts[k..]).unwrap();
            let joined = head.poses()[k].isometry() * tail.poses()[n - k].isometry();
            prop_assert!((joined.translation.vector - last.translation.vector).norm() < 1e-9);
            prop_assert!(joined.rotation.angle_to(&last.rotation) < 1e-9);
        }
    }

    #[test]
    fn projected_essential_has_rank_two(entries in prop::array::uniform9(-1.0f64..1.0)) {
        let m = Matrix3::from_row_slice(&entries);
        prop_assume!(m.norm() > 1e-3);
        let e = project_to_essential(&m);
        let mut sv: Vec<f64> = e.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        prop_assert!((sv[0] - 1.0).abs() < 1e-9 && (sv[1] - 1.0).abs() < 1e-9);
        prop_assert!(sv[2] < 1e-9);
        prop_assert!(e.determinant().abs() < 1e-9);
    }

    #[test]
    fn alignment_inverts_similarities(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let est = reference_path(60);
        let g = random_iso(&mut rng);
        let reference = Trajectory::new(
            est.poses()
                .iter()
                .map(|p| {
                    let scaled = Isometry3::from_parts(Translation3::from(p.translation * scale), p.rotation);
                    PoseSE3::from_isometry(&(g * scaled), p.timestamp_ns)
                })
                .collect(),
        )
        .unwrap();
        let a = align_similarity(&est, &reference, DEFAULT_MAX_GAP_NS).unwrap();
        prop_assert!((a.scale / scale - 1.0).abs() < 1e-9);
        prop_assert!(a.rotation.angle_to(&g.rotation) < 1e-9);
        for (p, q) in a.aligned.poses().iter().zip(reference.poses()) {
            prop_assert!((p.translation - q.translation).norm() < 1e-8 * (1.0 + q.translation.norm()));
        }
    }
}

#[test]
fn noisy_alignment_beats_the_true_transform() {
    let normal = Normal::new(0.0, 0.05).unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let est = reference_path(80);
        let g = random_iso(&mut rng);
        let scale = 2.5;
        let truth: Vec<Vector3<f64>> = est
            .poses()
            .iter()
            .map(|p| (g * Point3::from(p.translation * scale)).coords)
            .collect();
        let noisy: Vec<PoseSE3> = est
            .poses()
            .iter()
            .zip(&truth)
            .map(|(p, t)| {
                let n = Vector3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                );
                PoseSE3::new(p.rotation, t + n, p.timestamp_ns)
            })
            .collect();
        let reference = Trajectory::new(noisy).unwrap();
        let a = align_similarity(&est, &reference, DEFAULT_MAX_GAP_NS).unwrap();
        let residual = |f: &dyn Fn(&Vector3<f64>) -> Vector3<f64>| -> f64 {
            est.poses()
                .iter()
                .zip(reference.poses())
                .map(|(p, q)| (f(&p.translation) - q.translation).norm_squared())
                .sum()
        };
        let fitted = residual(&|p| a.apply(p));
        let oracle = residual(&|p| (g * Point3::from(p * scale)).coords);
        assert!(fitted <= oracle + 1e-12, "seed {seed}: {fitted} > {oracle}");
        assert!((a.scale / scale - 1.0).abs() < 0.02);
    }
}

struct TwoView {
    matches: Vec<(Vector2<f64>, Vector2<f64>)>,
    motion: Isometry3<f64>,
}

fn two_view(rng: &mut ChaCha8Rng, k: &Intrinsics, noise_px: f64, n: usize) -> TwoView {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let dir = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-0.3..0.3),
    );
    let motion = iso(axis, rng.random_range(0.02..0.2), dir.normalize());
    let normal = Normal::new(0.0, noise_px.max(1e-300)).unwrap();
    let mut matches = Vec::new();
    while matches.len() < n {
        let z = rng.random_range(2.0..8.0);
        let p = Vector3::new(rng.random_range(-1.6..1.6) * z, rng.random_range(-1.2..1.2) * z, z);
        let q = motion.inverse_transform_point(&p.into()).coords;
        if q.z < 0.5 {
            continue;
        }
        let (a, b) = (k.project(&p), k.project(&q));
        let inside = |v: &Vector2<f64>| v.x >= 0.0 && v.y >= 0.0 && v.x < 1280.0 && v.y < 960.0;
        if !inside(&a) || !inside(&b) {
            continue;
        }
        let mut jitter = || Vector2::new(normal.sample(rng), normal.sample(rng)) * f64::from(noise_px > 0.0);
        matches.push((a + jitter(), b + jitter()));
    }
    TwoView { matches, motion }
}

fn errors(est: &Isometry3<f64>, truth: &Isometry3<f64>) -> (f64, f64) {
    let rot = rotation_angle(&(est.inverse() * truth));
    let cos = est
        .translation
        .vector
        .normalize()
        .dot(&truth.translation.vector.normalize());
    (rot, cos.clamp(-1.0, 1.0).acos())
}

#[test]
fn noise_free_pose_is_exact() {
    let k = Intrinsics::new(400.0, 400.0, 639.5, 479.5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let tv = two_view(&mut rng, &k, 0.0, 100);
        let est = estimate_relative_pose(&tv.matches, &k, &RansacConfig::default()).unwrap();
        let (rot, dir) = errors(&est.motion, &tv.motion);
        assert!(rot < 1e-6 && dir < 1e-6, "rot {rot} dir {dir}");
        assert_relative_eq!(est.motion.translation.vector.norm(), 1.0, epsilon = 1e-12);
        assert_eq!(est.inlier_count(), 100);
    }
}

#[test]
fn noisy_pose_within_tolerance() {
    let k = Intrinsics::new(400.0, 400.0, 639.5, 479.5);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..100 {
        let tv = two_view(&mut rng, &k, 0.5, 300);
        let est = estimate_relative_pose(&tv.matches, &k, &RansacConfig::default()).unwrap();
        let (rot, dir) = errors(&est.motion, &tv.motion);
        assert!(
            rot.to_degrees() < 0.1 && dir.to_degrees() < 0.5,
            "trial {trial}: rot {} dir {}",
            rot.to_degrees(),
            dir.to_degrees()
        );
    }
}

#[test]
fn too_few_matches_is_an_error() {
    let k = Intrinsics::new(400.0, 400.0, 639.5, 479.5);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let tv = two_view(&mut rng, &k, 0.0, 7);
    assert!(estimate_relative_pose(&tv.matches, &k, &RansacConfig::default()).is_err());
}
