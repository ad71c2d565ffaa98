use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "\
[scene]
width = 480
height = 360

[capture]
frame_width = 160
frame_height = 120
focal_px = 160.0
step_px = 4.0
";

fn aebench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aebench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = aebench(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

/// Writes the small config and a short sequence; returns (config, sequence dir).
fn small_sequence(root: &Path, cycles: &str) -> (PathBuf, PathBuf) {
    let config = root.join("small.toml");
    fs::write(&config, SMALL).unwrap();
    let seq = root.join("seq");
    ok(&[
        "--config",
        s(&config),
        "--out",
        s(&seq),
        "gen-synthetic",
        "--cycles",
        cycles,
    ]);
    (config, seq)
}

fn exposures(csv: &Path) -> Vec<String> {
    fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().to_string())
        .collect()
}

#[test]
fn gen_synthetic_writes_300_images_reproducibly() {
    let root = tempfile::tempdir().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    let printed = ok(&["gen-synthetic", "--cycles", "50", "--seed", "7", "--out", s(&a)]);
    assert_eq!(printed.trim(), a.join("frames.csv").to_str().unwrap());
    ok(&["gen-synthetic", "--cycles", "50", "--seed", "7", "--out", s(&b)]);
    assert_eq!(fs::read_dir(a.join("images")).unwrap().count(), 300);
    assert_eq!(fs::read_to_string(a.join("frames.csv")).unwrap().lines().count(), 301);
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn bad_flags_are_usage_errors() {
    let root = tempfile::tempdir().unwrap();
    let out = s(root.path());
    for args in [
        vec!["--out", out, "gen-synthetic", "--cycles", "0"],
        vec!["--out", out, "gen-synthetic", "--crf", "cubic"],
        vec!["--out", out, "bench-features", "--seq"],
        vec!["--out", out, "report"],
        vec!["--out", out, "frobnicate"],
    ] {
        assert_eq!(aebench(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn unknown_controller_is_a_usage_error() {
    let root = tempfile::tempdir().unwrap();
    let (config, seq) = small_sequence(root.path(), "3");
    let out = aebench(&[
        "--config",
        s(&config),
        "--out",
        s(&root.path().join("r")),
        "run-ae",
        "--seq",
        s(&seq),
        "--controller",
        "nope",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_ae_fixed_and_all() {
    let root = tempfile::tempdir().unwrap();
    let (config, seq) = small_sequence(root.path(), "12");
    let fixed = root.path().join("fixed");
    ok(&[
        "--config",
        s(&config),
        "--out",
        s(&fixed),
        "run-ae",
        "--seq",
        s(&seq),
        "--controller",
        "fixed",
    ]);
    let column = exposures(&fixed.join("run_ae/fixed.csv"));
    assert_eq!(column.len(), 12);
    assert!(column.iter().all(|e| *e == column[0]));

    let all = root.path().join("all");
    let again = root.path().join("again");
    let printed = ok(&[
        "--config",
        s(&config),
        "--out",
        s(&all),
        "run-ae",
        "--seq",
        s(&seq),
        "--controller",
        "all",
    ]);
    assert_eq!(printed.lines().count(), 7);
    ok(&[
        "--config",
        s(&config),
        "--out",
        s(&again),
        "run-ae",
        "--seq",
        s(&seq),
        "--controller",
        "all",
    ]);
    let csvs: Vec<_> = tree(&all)
        .into_iter()
        .filter(|(p, _)| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    assert_eq!(csvs.len(), 7);
    let header = "frame,cycle,exposure_us,source_bracket_us,metric_value,mean_brightness,saturation_fraction";
    for (_, bytes) in &csvs {
        assert!(String::from_utf8_lossy(bytes).starts_with(header));
    }
    assert_eq!(tree(&all), tree(&again));
}

#[test]
fn calibrate_crf_recovers_noiseless_gamma() {
    let root = tempfile::tempdir().unwrap();
    let config = root.path().join("noiseless.toml");
    fs::write(&config, "[capture]\nread_noise_dn = 0.0\n").unwrap();
    let seq = root.path().join("seq");
    ok(&[
        "--config",
        s(&config),
        "--out",
        s(&seq),
        "gen-synthetic",
        "--cycles",
        "2",
        "--static",
        "--crf",
        "gamma:2.2",
    ]);
    let out = root.path().join("cal");
    let printed = ok(&[
        "--out",
        s(&out),
        "calibrate-crf",
        "--stack",
        s(&seq),
        "--reference",
        s(&seq.join("crf.csv")),
    ]);
    let dev: f64 = printed
        .lines()
        .find_map(|l| l.strip_prefix("max deviation from reference: "))
        .and_then(|v| v.trim_end_matches(" %").parse().ok())
        .expect("deviation line");
    assert!(dev <= 1.0, "{dev}");
    let lut = aebench::crf_file::read(&out.join("crf.csv")).unwrap();
    assert!(lut.inverse_lut().windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn calibrate_crf_rejects_two_image_stack() {
    let root = tempfile::tempdir().unwrap();
    let (_, seq) = small_sequence(root.path(), "2");
    let frames = fs::read_to_string(seq.join("frames.csv")).unwrap();
    let kept: Vec<&str> = frames.lines().take(3).collect();
    fs::write(seq.join("frames.csv"), kept.join("\n") + "\n").unwrap();
    let out = aebench(&[
        "--out",
        s(&root.path().join("cal")),
        "calibrate-crf",
        "--stack",
        s(&seq),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_sequence_is_a_runtime_error() {
    let root = tempfile::tempdir().unwrap();
    let out = aebench(&[
        "--out",
        s(root.path()),
        "run-ae",
        "--seq",
        s(&root.path().join("absent")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent"));
}

#[test]
fn emulate_writes_the_requested_exposure() {
    let root = tempfile::tempdir().unwrap();
    let (config, seq) = small_sequence(root.path(), "2");
    let out = root.path().join("em");
    let printed = ok(&[
        "--config",
        s(&config),
        "--out",
        s(&out),
        "emulate",
        "--seq",
        s(&seq),
        "--exposure-us",
        "9000",
    ]);
    assert!(
        printed.contains("from 16000 us bracket") || printed.contains("from 8000 us bracket"),
        "{printed}"
    );
    let path = PathBuf::from(printed.split(" (").next().unwrap());
    let img = aebench::pgm::read(&path, 9000.0).unwrap();
    assert_eq!((img.width(), img.height()), (160, 120));
    assert_eq!(
        aebench(&["--out", s(&out), "emulate", "--seq", s(&seq), "--exposure-us", "-1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn validate_emulation_reports() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("v");
    let printed = ok(&["--out", s(&out), "validate-emulation"]);
    assert!(printed.starts_with("median "), "{printed}");
    let json: serde_json::Value = serde_json::from_slice(&fs::read(out.join("validation.json")).unwrap()).unwrap();
    assert!(json["max_pct"].as_f64().unwrap() <= 1.78);
    assert_eq!(json["report"]["points"].as_array().unwrap().len(), 200);
    assert_eq!(
        fs::read_to_string(out.join("validation.csv")).unwrap().lines().count(),
        201
    );
}

#[test]
fn bench_reports_marker_and_writes_plots() {
    let root = tempfile::tempdir().unwrap();
    let (config, seq) = small_sequence(root.path(), "8");
    let out = root.path().join("b");
    let printed = ok(&[
        "--config",
        s(&config),
        "--out",
        s(&out),
        "bench-features",
        "--seq",
        s(&seq),
        "--controller",
        "fixed",
        "--controller",
        "kim",
        "--tau",
        "5",
    ]);
    assert!(printed.contains("success@5"), "{printed}");
    let json: serde_json::Value = serde_json::from_slice(&fs::read(out.join("features.json")).unwrap()).unwrap();
    assert_eq!(json["tau_marker"].as_u64(), Some(5));
    assert_eq!(json["controllers"].as_array().unwrap().len(), 2);

    let report = root.path().join("r");
    ok(&[
        "--config",
        s(&config),
        "--out",
        s(&report),
        "report",
        "--seq",
        s(&seq),
        "--controller",
        "fixed",
    ]);
    for name in ["features.json", "rpe.json", "success_curve.svg", "run_config.toml"] {
        assert!(report.join(name).is_file(), "{name}");
    }
}
