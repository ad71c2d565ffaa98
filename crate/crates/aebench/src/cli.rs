//! The `aebench` command line.
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use aebench_core::ae_control::{make_controller, run_controller, ControllerKind};
use aebench_core::bench::{evaluate_run, ControllerRun};
use aebench_core::emulation::{
    emulate_from_cycle_with, noise_floor, validate_emulation, BracketCycle, ValidationReport,
};
use aebench_core::photometry::{estimate_inverse_crf, CalibrationStack, CrfKind};
use aebench_core::synth::{derive_seed, log_spaced, render_exposure_sweep, render_sequence, CaptureSpec, Scene, View};
use aebench_core::trajectory::Intrinsics;
use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{parse_controllers, RunConfig};
use crate::report::{self, ControllerEval};
use crate::sequence::{self, Sequence};
use crate::{crf_file, fsutil, pgm, svg};

#[derive(Debug, Parser)]
#[command(
    name = "aebench",
    version,
    about = "Offline auto-exposure benchmarking by exposure emulation"
)]
pub struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed, overriding the configuration (default 7).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Report formats; repeatable. Defaults to csv and json.
    #[arg(long = "format", global = true, value_enum)]
    pub formats: Vec<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic bracketed sequence into the output directory.
    GenSynthetic {
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(2..))]
        cycles: u64,
        /// Keep the camera still.
        #[arg(long = "static")]
        static_scene: bool,
        /// Response curve: `linear`, `gamma:<g>` or `s-curve:<a>`.
        #[arg(long, value_parser = parse_crf)]
        crf: Option<CrfKind>,
    },
    /// Estimate the inverse response curve from one cycle of a sequence.
    CalibrateCrf {
        /// Sequence directory holding the exposure stack.
        #[arg(long)]
        stack: PathBuf,
        #[arg(long, default_value_t = 0)]
        cycle: usize,
        /// Reference `crf.csv` to compare against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Emulation accuracy against ground-truth captures.
    ///
    /// Without `--seq` a static synthetic scene is rendered from the
    /// configuration.
    ValidateEmulation {
        /// Sequence providing the bracket cycle and the response curve.
        #[arg(long, requires = "sweep")]
        seq: Option<PathBuf>,
        /// Sequence directory of ground-truth frames at arbitrary exposures.
        #[arg(long, requires = "seq")]
        sweep: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        cycle: usize,
        /// Noise floor in percent; measured when rendering synthetically,
        /// 0 otherwise.
        #[arg(long)]
        noise_floor: Option<f64>,
    },
    /// Emulate one cycle of a sequence at an arbitrary exposure.
    Emulate {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        exposure_us: f64,
        #[arg(long, default_value_t = 0)]
        cycle: usize,
    },
    /// Run controllers in closed loop and write per-frame CSVs.
    RunAe {
        #[arg(long)]
        seq: PathBuf,
        /// Controller name (`all`, `fixed`, `30`, `50`, `70`, `shim`, `zhang`,
        /// `kim`); repeatable.
        #[arg(long = "controller")]
        controllers: Vec<String>,
    },
    /// Feature matching benchmark over one or more sequences.
    BenchFeatures(BenchArgs),
    /// Visual odometry benchmark scored by relative pose error.
    BenchRpe(BenchArgs),
    /// Both benchmarks, with SVG plots.
    Report(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long = "seq", required = true, num_args = 1..)]
    pub seqs: Vec<PathBuf>,
    #[arg(long = "controller")]
    pub controllers: Vec<String>,
    /// Match-count threshold highlighted in the success report.
    #[arg(long)]
    pub tau: Option<usize>,
}

/// A problem with the invocation rather than with the data; exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn parse_crf(s: &str) -> Result<CrfKind, String> {
    let (name, param) = match s.split_once(':') {
        Some((n, p)) => (
            n,
            Some(p.parse::<f64>().map_err(|e| format!("bad parameter {p:?}: {e}"))?),
        ),
        None => (s, None),
    };
    match (name, param) {
        ("linear", None) => Ok(CrfKind::Linear),
        ("gamma", Some(g)) => Ok(CrfKind::Gamma(g)),
        ("s-curve", Some(a)) => Ok(CrfKind::SCurve(a)),
        _ => Err(format!("expected linear, gamma:<g> or s-curve:<a>, got {s:?}")),
    }
}

/// Parses the process arguments, runs and maps the outcome to an exit code.
pub fn main_exit() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(u8::try_from(code).unwrap_or(2));
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

struct Ctx<'a> {
    cfg: RunConfig,
    out: &'a Path,
    formats: Vec<Format>,
}

impl Ctx<'_> {
    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn save_config(&self) -> Result<()> {
        fsutil::write_atomic(&self.out.join("run_config.toml"), self.cfg.to_toml().as_bytes())?;
        Ok(())
    }

    fn write_svg(&self, name: &str, text: &str) -> Result<()> {
        fsutil::write_atomic(&self.out.join(name), text.as_bytes())?;
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let mut formats = cli.formats.clone();
    if formats.is_empty() {
        formats = vec![Format::Csv, Format::Json];
    }
    formats.sort_by_key(|f| *f as u8);
    formats.dedup();
    let mut ctx = Ctx {
        cfg,
        out: &cli.out,
        formats,
    };
    match &cli.command {
        Command::GenSynthetic {
            cycles,
            static_scene,
            crf,
        } => gen_synthetic(&mut ctx, *cycles as usize, *static_scene, *crf),
        Command::CalibrateCrf {
            stack,
            cycle,
            reference,
            lambda,
            samples,
        } => {
            if let Some(l) = lambda {
                ctx.cfg.calibration.lambda_smooth = *l;
            }
            if let Some(n) = samples {
                ctx.cfg.calibration.sample_count = *n;
            }
            calibrate_crf(&ctx, stack, *cycle, reference.as_deref())
        }
        Command::ValidateEmulation {
            seq,
            sweep,
            cycle,
            noise_floor,
        } => validate(&ctx, seq.as_deref(), sweep.as_deref(), *cycle, *noise_floor),
        Command::Emulate {
            seq,
            exposure_us,
            cycle,
        } => emulate_cmd(&ctx, seq, *exposure_us, *cycle),
        Command::RunAe { seq, controllers } => {
            if !controllers.is_empty() {
                ctx.cfg.bench.controllers = controllers.clone();
            }
            run_ae(&ctx, seq)
        }
        Command::BenchFeatures(args) => bench(&mut ctx, args, true, false),
        Command::BenchRpe(args) => bench(&mut ctx, args, false, true),
        Command::Report(args) => {
            if !ctx.wants(Format::Svg) {
                ctx.formats.push(Format::Svg);
            }
            bench(&mut ctx, args, true, true)
        }
    }
}

fn gen_synthetic(ctx: &mut Ctx, cycles: usize, static_scene: bool, crf: Option<CrfKind>) -> Result<()> {
    if let Some(kind) = crf {
        ctx.cfg.capture.crf = kind;
    }
    if static_scene {
        ctx.cfg.capture.step_px = 0.0;
        ctx.cfg.capture.drift_px_per_bracket = 0.0;
    }
    let cfg = &ctx.cfg;
    let mut scene_spec = cfg.scene.clone();
    scene_spec.seed = derive_seed(cfg.seed, 0);
    let scene = Scene::generate(&scene_spec)?;
    let capture = cfg.capture.to_spec(&scene_spec, cycles, cfg.seed)?;
    let rendered = render_sequence(&scene, &capture, cycles)?;
    let seq = Sequence {
        cycles: rendered.cycles,
        groundtruth: rendered.groundtruth,
        crf: capture.crf,
    };
    sequence::save_sequence(ctx.out, &seq)?;
    sequence::save_intrinsics(ctx.out, &cfg.capture.intrinsics())?;
    ctx.save_config()?;
    println!("{}", ctx.out.join(sequence::FRAMES_FILE).display());
    Ok(())
}

fn cycle_at(cycles: Vec<BracketCycle>, index: usize) -> Result<BracketCycle> {
    let count = cycles.len();
    cycles
        .into_iter()
        .nth(index)
        .ok_or_else(|| usage(format!("cycle {index} out of range; the sequence has {count} cycles")))
}

fn calibrate_crf(ctx: &Ctx, stack: &Path, cycle: usize, reference: Option<&Path>) -> Result<()> {
    let (records, images) = sequence::load_frames(stack)?;
    let cycle = cycle_at(sequence::group_cycles(&records, images)?, cycle)?;
    let stack = CalibrationStack::new(cycle.into_images())?;
    let cal = &ctx.cfg.calibration;
    let crf = estimate_inverse_crf(&stack, cal.lambda_smooth, cal.sample_count)?;
    let path = ctx.out.join(sequence::CRF_FILE);
    crf_file::write(&path, &crf)?;
    ctx.save_config()?;
    println!("{}", path.display());
    if let Some(reference) = reference {
        let truth = crf_file::read(reference)?;
        let dev = crf
            .inverse_lut()
            .iter()
            .zip(truth.inverse_lut())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("max deviation from reference: {:.4} %", 100.0 * dev);
    }
    Ok(())
}

/// Static synthetic validation data: one bracket cycle, a ground-truth
/// sweep and the measured noise floor.
pub fn synthetic_validation_inputs(
    cfg: &RunConfig,
) -> Result<(BracketCycle, Vec<aebench_core::RawImage>, CaptureSpec, f64)> {
    let mut scene_spec = cfg.scene.clone();
    scene_spec.seed = derive_seed(cfg.seed, 0);
    let scene = Scene::generate(&scene_spec)?;
    let mut capture = cfg.capture.to_spec(&scene_spec, 2, cfg.seed)?;
    capture.drift_px_per_bracket = 0.0;
    let view = View {
        center_x: 0.5 * (scene_spec.width as f64 - 1.0),
        center_y: 0.5 * (scene_spec.height as f64 - 1.0),
    };
    let v = &cfg.validation;
    let with_seed = |stream: u64| CaptureSpec {
        noise_seed: derive_seed(cfg.seed, stream),
        ..capture.clone()
    };
    let cycle_images = render_exposure_sweep(&scene, &with_seed(2), &view, &capture.ladder_us)?;
    let cycle = BracketCycle::with_ladder(cycle_images, 0, &capture.ladder_us)?;
    let mut floors = Vec::new();
    for (i, t) in log_spaced(v.min_exposure_us, v.max_exposure_us, v.floor_exposures)
        .into_iter()
        .enumerate()
    {
        let repeats = render_exposure_sweep(&scene, &with_seed(10 + i as u64), &view, &vec![t; v.repeats])?;
        floors.push(noise_floor(&repeats)?);
    }
    let floor = floors.iter().sum::<f64>() / floors.len().max(1) as f64;
    let exposures = log_spaced(v.min_exposure_us, v.max_exposure_us, v.exposures);
    let sweep = render_exposure_sweep(&scene, &with_seed(3), &view, &exposures)?;
    Ok((cycle, sweep, capture, floor))
}

fn validate(
    ctx: &Ctx,
    seq: Option<&Path>,
    sweep: Option<&Path>,
    cycle: usize,
    floor_override: Option<f64>,
) -> Result<()> {
    let report = match (seq, sweep) {
        (Some(seq), Some(sweep)) => {
            let loaded = sequence::load_sequence(seq)?;
            let cycle = cycle_at(loaded.cycles, cycle)?;
            let (_, gt) = sequence::load_frames(sweep)?;
            validate_emulation(&gt, &cycle, &loaded.crf, floor_override.unwrap_or(0.0))?
        }
        _ => {
            let (cycle, gt, capture, floor) = synthetic_validation_inputs(&ctx.cfg)?;
            validate_emulation(&gt, &cycle, &capture.crf, floor_override.unwrap_or(floor))?
        }
    };
    write_validation(ctx, report)
}

fn write_validation(ctx: &Ctx, report: ValidationReport) -> Result<()> {
    if ctx.wants(Format::Csv) {
        report::write_csv(&ctx.out.join("validation.csv"), &report::validation_rows(&report))?;
    }
    if ctx.wants(Format::Svg) {
        let mut series = vec![(
            "HigherNoSat".to_string(),
            report
                .points
                .iter()
                .map(|p| (p.gt_exposure_us, p.rmse_highernosat_pct))
                .collect(),
        )];
        for (i, t) in report.ladder_us.iter().enumerate() {
            series.push((
                format!("{} ms", t / 1000.0),
                report
                    .points
                    .iter()
                    .map(|p| (p.gt_exposure_us, p.rmse_per_bracket_pct[i]))
                    .collect(),
            ));
        }
        let chart = svg::line_chart("Emulation error", "exposure (µs)", "RMSE (%)", &series, true, None);
        ctx.write_svg("validation.svg", &chart)?;
    }
    let summary = report::ValidationSummary::new(report);
    if ctx.wants(Format::Json) {
        report::write_json(&ctx.out.join("validation.json"), &summary)?;
    }
    ctx.save_config()?;
    println!(
        "median {:.4} %, max {:.4} %, noise floor {:.4} %, top-2 selection {:.1} %",
        summary.median_pct,
        summary.max_pct,
        summary.noise_floor_pct,
        100.0 * summary.top2_rate
    );
    Ok(())
}

fn emulate_cmd(ctx: &Ctx, seq: &Path, exposure_us: f64, cycle: usize) -> Result<()> {
    if !(exposure_us > 0.0 && exposure_us.is_finite()) {
        return Err(usage(format!("--exposure-us must be positive, got {exposure_us}")));
    }
    let loaded = sequence::load_sequence(seq)?;
    let cycle = cycle_at(loaded.cycles, cycle)?;
    let em = emulate_from_cycle_with(&cycle, exposure_us, &loaded.crf, ctx.cfg.ae.sat_threshold)?;
    let path = ctx
        .out
        .join(format!("emulated_c{:06}_{}us.pgm", cycle.cycle_index, exposure_us));
    pgm::write(&path, &em.image)?;
    println!("{} (from {} us bracket)", path.display(), em.source_exposure_us);
    Ok(())
}

fn controllers(cfg: &RunConfig) -> Result<Vec<ControllerKind>> {
    parse_controllers(&cfg.bench.controllers).map_err(usage)
}

fn run_one(seq: &Sequence, kind: ControllerKind, cfg: &RunConfig) -> Result<ControllerRun> {
    let first = seq.cycles.first().ok_or_else(|| anyhow!("sequence has no cycles"))?;
    let mut controller = make_controller(kind, &cfg.ae, first, &seq.crf)?;
    let steps = run_controller(&seq.cycles, controller.as_mut(), &seq.crf, cfg.ae.sat_threshold)?;
    Ok(ControllerRun { kind, steps })
}

/// Runs `f` over `items` on scoped threads, keeping input order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|item| s.spawn(|| f(item))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

fn run_ae(ctx: &Ctx, seq: &Path) -> Result<()> {
    let kinds = controllers(&ctx.cfg)?;
    let loaded = sequence::load_sequence(seq)?;
    let runs = par_map(&kinds, |&k| run_one(&loaded, k, &ctx.cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let dir = ctx.out.join("run_ae");
    let mut summary = Vec::new();
    for run in &runs {
        let rows = report::run_ae_rows(run);
        let path = dir.join(format!("{}.csv", run.kind.name()));
        report::write_csv(&path, &rows)?;
        println!("{}", path.display());
        summary.push(serde_json::json!({
            "controller": run.kind.name(),
            "label": run.kind.label(),
            "frames": rows.len(),
            "mean_saturation": run.mean_saturation(),
        }));
    }
    if ctx.wants(Format::Json) {
        report::write_json(&dir.join("summary.json"), &summary)?;
    }
    ctx.save_config()?;
    Ok(())
}

/// Runs every controller over a sequence and evaluates features and VO.
pub fn bench_sequence(
    name: &str,
    seq: &Sequence,
    intrinsics: &Intrinsics,
    kinds: &[ControllerKind],
    cfg: &RunConfig,
) -> Result<Vec<ControllerEval>> {
    par_map(kinds, |&kind| {
        let run = run_one(seq, kind, cfg)?;
        let images = run.images();
        let timestamps = run.timestamps_ns(&seq.cycles);
        let (tracks, vo) = evaluate_run(
            &images,
            &timestamps,
            &seq.groundtruth,
            intrinsics,
            &cfg.features,
            &cfg.ransac,
            &cfg.bench.rpe_lengths_m,
            cfg.bench.max_gap_ns,
        )?;
        Ok(ControllerEval {
            sequence: name.to_string(),
            pairs: tracks.iter().map(|t| t.stats).collect(),
            run,
            vo,
        })
    })
    .into_iter()
    .collect()
}

fn sequence_name(path: &Path, index: usize) -> String {
    let dir = sequence::sequence_dir(path);
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("seq{index}"))
}

fn bench(ctx: &mut Ctx, args: &BenchArgs, features: bool, rpe: bool) -> Result<()> {
    if args.seqs.is_empty() {
        return Err(usage("at least one --seq is required"));
    }
    if !args.controllers.is_empty() {
        ctx.cfg.bench.controllers = args.controllers.clone();
    }
    if let Some(tau) = args.tau {
        ctx.cfg.bench.tau_marker = tau;
    }
    let kinds = controllers(&ctx.cfg)?;
    let mut evals = Vec::new();
    for (i, path) in args.seqs.iter().enumerate() {
        let loaded = sequence::load_sequence(path).with_context(|| format!("loading {}", path.display()))?;
        let intrinsics = sequence::load_intrinsics(path)?.unwrap_or_else(|| ctx.cfg.capture.intrinsics());
        evals.extend(bench_sequence(
            &sequence_name(path, i),
            &loaded,
            &intrinsics,
            &kinds,
            &ctx.cfg,
        )?);
    }
    let ctx = &*ctx;
    if features {
        write_features(ctx, &evals)?;
    }
    if rpe {
        write_rpe(ctx, &evals)?;
    }
    ctx.save_config()?;
    Ok(())
}

fn write_features(ctx: &Ctx, evals: &[ControllerEval]) -> Result<()> {
    let b = &ctx.cfg.bench;
    let summary = report::feature_report(evals, &b.taus, b.tau_marker)?;
    if ctx.wants(Format::Csv) {
        report::write_csv(&ctx.out.join("features.csv"), &report::feature_rows(evals))?;
    }
    if ctx.wants(Format::Json) {
        report::write_json(&ctx.out.join("features.json"), &summary)?;
    }
    if ctx.wants(Format::Svg) {
        let groups = |f: &dyn Fn(&ControllerEval) -> Vec<f64>| -> Vec<(String, Vec<f64>)> {
            summary
                .controllers
                .iter()
                .map(|c| {
                    let values = evals
                        .iter()
                        .filter(|e| e.run.kind.name() == c.controller)
                        .flat_map(f)
                        .collect();
                    (c.label.clone(), values)
                })
                .collect()
        };
        let matches = groups(&|e| e.pairs.iter().map(|p| p.matches as f64).collect());
        ctx.write_svg(
            "features_matches.svg",
            &svg::box_plot("Matches per frame pair", "matches", &matches),
        )?;
        let uniformity = groups(&|e| e.pairs.iter().map(|p| p.uniformity_pct_a).collect());
        ctx.write_svg(
            "features_uniformity.svg",
            &svg::box_plot("Keypoint uniformity", "occupied cells (%)", &uniformity),
        )?;
        let series: Vec<(String, Vec<(f64, f64)>)> = summary
            .controllers
            .iter()
            .map(|c| {
                let points = c
                    .success
                    .thresholds
                    .iter()
                    .zip(&c.success.success_rate)
                    .map(|(&t, &r)| (t as f64, 100.0 * r))
                    .collect();
                (c.label.clone(), points)
            })
            .collect();
        ctx.write_svg(
            "success_curve.svg",
            &svg::line_chart(
                "Trajectory success",
                "minimum matches τ",
                "successful sequences (%)",
                &series,
                false,
                Some(b.tau_marker as f64),
            ),
        )?;
    }
    for c in &summary.controllers {
        println!(
            "{:<8} median matches {:>7.1}  success@{} {:>5.1} %  saturation {:.4}",
            c.label,
            c.matches.map_or(0.0, |q| q.median),
            b.tau_marker,
            100.0 * c.success_at_marker,
            c.mean_saturation
        );
    }
    Ok(())
}

fn write_rpe(ctx: &Ctx, evals: &[ControllerEval]) -> Result<()> {
    let lengths = &ctx.cfg.bench.rpe_lengths_m;
    let summary = report::rpe_summary(evals, lengths);
    let rows = report::rpe_rows(evals);
    if ctx.wants(Format::Csv) {
        report::write_csv(&ctx.out.join("rpe.csv"), &rows)?;
    }
    if ctx.wants(Format::Json) {
        report::write_json(&ctx.out.join("rpe.json"), &summary)?;
    }
    if ctx.wants(Format::Svg) {
        let groups: Vec<(String, Vec<f64>)> = summary
            .controllers
            .iter()
            .map(|c| {
                let values = rows
                    .iter()
                    .filter(|r| r.controller == c.controller)
                    .filter_map(|r| r.translation_pct)
                    .collect();
                (c.label.clone(), values)
            })
            .collect();
        ctx.write_svg(
            "rpe_translation.svg",
            &svg::box_plot("Relative translation error", "error (%)", &groups),
        )?;
    }
    for c in &summary.controllers {
        let first = c.lengths.first().and_then(|l| l.translation_pct);
        println!(
            "{:<8} failures {}/{}  translation {}",
            c.label,
            c.failures,
            c.sequences,
            first.map_or("n/a".to_string(), |t| format!("{t:.2} %"))
        );
    }
    Ok(())
}
