use aebench_core::emulation::{emulate_from_cycle, noise_floor, BracketCycle};
use aebench_core::photometry::{make_parametric_crf, CrfKind, ResponseCurve};
use aebench_core::synth::{
    generate_radiance_canvas, log_spaced, render_exposure_sweep, render_frame, render_sequence, CaptureSpec, Scene,
    SceneSpec, View,
};
use aebench_core::MAX_DN;
use proptest::prelude::*;

fn small_scene(seed: u64) -> SceneSpec {
    SceneSpec {
        width: 200,
        height: 150,
        relief: 0.0,
        seed,
        ..SceneSpec::default()
    }
}

fn clean_capture(crf: ResponseCurve) -> CaptureSpec {
    CaptureSpec {
        crf,
        read_noise_dn: 0.0,
        drift_px_per_bracket: 0.0,
        frame_width: 96,
        frame_height: 72,
        focal_px: 96.0,
        ..CaptureSpec::default()
    }
}

const VIEW: View = View {
    center_x: 99.5,
    center_y: 74.5,
};

fn clean_cycle(scene: &Scene, capture: &CaptureSpec) -> BracketCycle {
    let images = capture
        .ladder_us
        .iter()
        .map(|&t| render_frame(scene, &VIEW, t, capture, 0).unwrap())
        .collect();
    BracketCycle::new(images, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generation_is_a_pure_function_of_the_spec(seed in any::<u64>(), bimodality in 0.0f64..=1.0) {
        let spec = SceneSpec { width: 64, height: 48, bimodality, seed, ..SceneSpec::default() };
        prop_assert_eq!(generate_radiance_canvas(&spec).unwrap(), generate_radiance_canvas(&spec).unwrap());
        let a = Scene::generate(&spec).unwrap();
        let capture = CaptureSpec { frame_width: 32, frame_height: 24, focal_px: 32.0, ..CaptureSpec::default() };
        let view = View { center_x: 31.5, center_y: 23.5 };
        let f1 = render_frame(&a, &view, 4000.0, &capture, seed).unwrap();
        let f2 = render_frame(&Scene::generate(&spec).unwrap(), &view, 4000.0, &capture, seed).unwrap();
        prop_assert_eq!(f1, f2);
    }

    #[test]
    fn emulation_matches_direct_render(seed in 0u64..500, target in 20.0f64..50_000.0, gamma in prop::option::of(1.5f64..3.0)) {
        let crf = match gamma {
            Some(g) => make_parametric_crf(CrfKind::Gamma(g)).unwrap(),
            None => ResponseCurve::linear(),
        };
        let capture = clean_capture(crf.clone());
        let scene = Scene::generate(&small_scene(seed)).unwrap();
        let cycle = clean_cycle(&scene, &capture);
        let emulated = emulate_from_cycle(&cycle, target, &crf).unwrap();
        let direct = render_frame(&scene, &VIEW, target, &capture, 0).unwrap();
        let source = &cycle.images()[emulated.source_index];
        for ((&e, &d), &s) in emulated.image.data().iter().zip(direct.data()).zip(source.data()) {
            if s == MAX_DN || d == MAX_DN || s == 0 {
                continue;
            }
            prop_assert!((i32::from(e) - i32::from(d)).abs() <= 2, "emulated {} direct {} source {}", e, d, s);
        }
    }
}

#[test]
fn sweep_mean_is_monotone() {
    let scene = Scene::generate(&small_scene(2)).unwrap();
    let capture = clean_capture(ResponseCurve::linear());
    let sweep = render_exposure_sweep(&scene, &capture, &VIEW, &log_spaced(20.0, 50_000.0, 1000)).unwrap();
    assert_eq!(sweep.len(), 1000);
    let means: Vec<f64> = sweep
        .iter()
        .map(|img| img.data().iter().map(|&v| f64::from(v)).sum::<f64>())
        .collect();
    assert!(means.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn noiseless_repeats_are_identical_and_noisy_ones_are_not() {
    let scene = Scene::generate(&small_scene(3)).unwrap();
    let clean = clean_capture(ResponseCurve::linear());
    let repeats = render_exposure_sweep(&scene, &clean, &VIEW, &[4000.0; 25]).unwrap();
    assert!(repeats.iter().all(|r| r.data() == repeats[0].data()));
    assert_eq!(noise_floor(&repeats).unwrap(), 0.0);
    let noisy = CaptureSpec {
        read_noise_dn: 3.0,
        ..clean
    };
    let repeats = render_exposure_sweep(&scene, &noisy, &VIEW, &[4000.0; 25]).unwrap();
    assert!(noise_floor(&repeats).unwrap() > 0.0);
}

#[test]
fn static_sequence_brackets_are_aligned() {
    let scene = Scene::generate(&small_scene(4)).unwrap();
    let capture = CaptureSpec {
        path: vec![(VIEW.center_x, VIEW.center_y); 3],
        ..clean_capture(ResponseCurve::linear())
    };
    let seq = render_sequence(&scene, &capture, 3).unwrap();
    let crf = ResponseCurve::linear();
    for cycle in &seq.cycles {
        for pair in cycle.images().windows(2) {
            let (base, img) = (&pair[0], &pair[1]);
            let e = aebench_core::emulation::emulate(base, img.exposure_us, &crf).unwrap();
            let worst = e
                .data()
                .iter()
                .zip(img.data())
                .zip(base.data())
                .filter(|((_, &d), &b)| d < MAX_DN && b < MAX_DN && b > 0)
                .map(|((&a, &b), _)| (i32::from(a) - i32::from(b)).abs())
                .max()
                .unwrap_or(0);
            assert!(worst <= 2, "{worst}");
        }
    }
}

#[test]
fn path_leaving_the_canvas_is_rejected() {
    let scene = Scene::generate(&small_scene(5)).unwrap();
    let capture = CaptureSpec {
        path: vec![(VIEW.center_x, VIEW.center_y), (190.0, VIEW.center_y)],
        ..clean_capture(ResponseCurve::linear())
    };
    assert!(render_sequence(&scene, &capture, 2).is_err());
}
