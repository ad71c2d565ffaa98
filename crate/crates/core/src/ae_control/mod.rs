//! Auto-exposure controllers behind one step contract.
//!
//! Every controller consumes the frame captured at its current exposure and
//! returns the exposure for the next frame. All defaults live in
//! [`AeConfig`]; no controller uses unseeded randomness.
mod gp;
pub mod metrics;

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::emulation::{emulate, emulate_from_cycle_with, saturation_stats, BracketCycle, EmulatedImage};
use crate::error::{domain, Result};
use crate::image::{RawImage, MAX_DN};
use crate::photometry::ResponseCurve;

pub use gp::{GpHyper, GpPosterior};
pub use metrics::{
    gradient_magnitudes, histogram_entropy, kim_metric, mean_brightness, shim_gradient_metric, shim_weight,
    zhang_metric, zhang_weight,
};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AeConfig {
    pub exposure_min_us: f64,
    pub exposure_max_us: f64,
    /// First exposure of every adaptive controller.
    pub initial_exposure_us: f64,
    /// HigherNoSat saturation threshold used when emulating frames.
    pub sat_threshold: f64,

    /// Brightness target of the fixed controller's one-off calibration.
    pub fixed_target: f64,
    pub fixed_bisection_iters: u32,

    /// Exponent applied to the brightness ratio.
    pub brightness_damping: f64,
    /// Per-step exposure ratio is clamped to `[1/max, max]`.
    pub brightness_max_step: f64,

    pub shim_delta: f64,
    pub shim_lambda: f64,
    pub shim_gain: f64,
    pub shim_gammas: Vec<f64>,

    pub zhang_knee: f64,
    pub zhang_softness: f64,
    pub zhang_smoothing: f64,
    /// Candidates span `current · 2^[−span, +span]`.
    pub zhang_span_stops: f64,
    pub zhang_candidates: usize,

    pub kim_alpha_mix: f64,
    pub kim_window: usize,
    /// Kernel length scale in log₂-exposure units.
    pub kim_length_scale: f64,
    pub kim_signal_variance: f64,
    pub kim_noise_variance: f64,
    pub kim_grid_points: usize,
    pub kim_kappa: f64,
    /// Acquisition grid covers `current · 2^[−span, +span]`.
    pub kim_span_stops: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            exposure_min_us: 20.0,
            exposure_max_us: 50_000.0,
            initial_exposure_us: 8_000.0,
            sat_threshold: crate::emulation::DEFAULT_SAT_THRESHOLD,
            fixed_target: 0.5,
            fixed_bisection_iters: 20,
            brightness_damping: 0.8,
            brightness_max_step: 8.0,
            shim_delta: 0.06,
            shim_lambda: 1000.0,
            shim_gain: 0.5,
            shim_gammas: alloc::vec![1.0 / 1.9, 1.0 / 1.5, 1.0 / 1.2, 1.0, 1.2, 1.5, 1.9],
            zhang_knee: 0.5,
            zhang_softness: 10.0,
            zhang_smoothing: 0.6,
            zhang_span_stops: 1.5,
            zhang_candidates: 7,
            kim_alpha_mix: 0.5,
            kim_window: 10,
            kim_length_scale: 1.0,
            kim_signal_variance: 2.5e-3,
            kim_noise_variance: 1e-4,
            kim_grid_points: 64,
            kim_kappa: 1.0,
            kim_span_stops: 12.0,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.exposure_min_us > 0.0 && self.exposure_min_us < self.exposure_max_us) {
            return Err(domain("exposure range must satisfy 0 < min < max"));
        }
        if !(self.fixed_target > 0.0 && self.fixed_target < 1.0) {
            return Err(domain("brightness target must lie in (0, 1)"));
        }
        if self.shim_gammas.is_empty() || self.zhang_candidates == 0 || self.kim_grid_points < 2 {
            return Err(domain("candidate sets must be non-empty"));
        }
        if self.kim_window == 0 {
            return Err(domain("GP window must hold at least one observation"));
        }
        Ok(())
    }

    pub fn clamp(&self, exposure_us: f64) -> f64 {
        if exposure_us.is_nan() {
            return self.exposure_min_us;
        }
        exposure_us.clamp(self.exposure_min_us, self.exposure_max_us)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AeDecision {
    pub next_exposure_us: f64,
    /// The controller's own quality score for the frame it just consumed.
    pub metric_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ControllerKind {
    Fixed,
    #[cfg_attr(feature = "serde", serde(rename = "30"))]
    Brightness30,
    #[cfg_attr(feature = "serde", serde(rename = "50"))]
    Brightness50,
    #[cfg_attr(feature = "serde", serde(rename = "70"))]
    Brightness70,
    Shim,
    Zhang,
    Kim,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 7] = [
        ControllerKind::Fixed,
        ControllerKind::Brightness30,
        ControllerKind::Brightness50,
        ControllerKind::Brightness70,
        ControllerKind::Shim,
        ControllerKind::Zhang,
        ControllerKind::Kim,
    ];

    /// Short identifier used on the command line and in file names.
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Fixed => "fixed",
            ControllerKind::Brightness30 => "30",
            ControllerKind::Brightness50 => "50",
            ControllerKind::Brightness70 => "70",
            ControllerKind::Shim => "shim",
            ControllerKind::Zhang => "zhang",
            ControllerKind::Kim => "kim",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name || k.label() == name)
    }

    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Fixed => "M_fixed",
            ControllerKind::Brightness30 => "M_30%",
            ControllerKind::Brightness50 => "M_50%",
            ControllerKind::Brightness70 => "M_70%",
            ControllerKind::Shim => "M_Shim",
            ControllerKind::Zhang => "M_Zhang",
            ControllerKind::Kim => "M_Kim",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// What a controller sees at each step.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    /// Image captured (emulated) at the controller's current exposure.
    pub image: &'a RawImage,
    /// The bracketing cycle the image was emulated from.
    pub cycle: &'a BracketCycle,
    pub crf: &'a ResponseCurve,
}

pub trait ExposureController {
    fn kind(&self) -> ControllerKind;
    /// Exposure to use for the next frame.
    fn exposure_us(&self) -> f64;
    fn step(&mut self, frame: &Frame<'_>) -> AeDecision;
}

/// Log-domain bisection for the exposure whose emulated image from `cycle`
/// has mean brightness `target`, clamped to the configured range.
pub fn calibrate_fixed_exposure(
    cycle: &BracketCycle,
    crf: &ResponseCurve,
    config: &AeConfig,
    target: f64,
) -> Result<f64> {
    let brightness = |t: f64| -> Result<f64> {
        Ok(mean_brightness(
            &emulate_from_cycle_with(cycle, t, crf, config.sat_threshold)?.image,
        ))
    };
    if brightness(config.exposure_max_us)? < target {
        return Ok(config.exposure_max_us);
    }
    if brightness(config.exposure_min_us)? > target {
        return Ok(config.exposure_min_us);
    }
    let mut lo = config.exposure_min_us.ln();
    let mut hi = config.exposure_max_us.ln();
    for _ in 0..config.fixed_bisection_iters {
        let mid = 0.5 * (lo + hi);
        if brightness(mid.exp())? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(config.clamp((0.5 * (lo + hi)).exp()))
}

/// Exposure chosen once at the start of a sequence.
#[derive(Debug, Clone)]
pub struct FixedController {
    exposure_us: f64,
}

impl FixedController {
    pub fn new(exposure_us: f64) -> Self {
        Self { exposure_us }
    }
}

/// Builds the fixed controller by calibrating on the first cycle.
pub fn fixed_ae_init(first_cycle: &BracketCycle, crf: &ResponseCurve, config: &AeConfig) -> Result<FixedController> {
    config.validate()?;
    let t = calibrate_fixed_exposure(first_cycle, crf, config, config.fixed_target)?;
    Ok(FixedController::new(t))
}

impl ExposureController for FixedController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Fixed
    }

    fn exposure_us(&self) -> f64 {
        self.exposure_us
    }

    fn step(&mut self, frame: &Frame<'_>) -> AeDecision {
        AeDecision {
            next_exposure_us: self.exposure_us,
            metric_value: mean_brightness(frame.image),
        }
    }
}

/// Proportional controller toward a mean-brightness target.
#[derive(Debug, Clone)]
pub struct BrightnessController {
    target: f64,
    exposure_us: f64,
    config: AeConfig,
}

impl BrightnessController {
    pub fn new(target: f64, config: AeConfig) -> Self {
        Self {
            target,
            exposure_us: config.clamp(config.initial_exposure_us),
            config,
        }
    }

    pub fn target(&self) -> f64 {
        self.target
    }
}

/// `current · clamp((target / max(mean, 1/4095))^α, 1/k, k)`, then clamped to
/// the exposure range.
pub fn target_brightness_update(current_us: f64, mean: f64, target: f64, config: &AeConfig) -> f64 {
    let eps = 1.0 / f64::from(MAX_DN);
    let k = config.brightness_max_step;
    let ratio = (target / mean.max(eps))
        .powf(config.brightness_damping)
        .clamp(1.0 / k, k);
    config.clamp(current_us * ratio)
}

impl ExposureController for BrightnessController {
    fn kind(&self) -> ControllerKind {
        match (self.target * 100.0).round() as i64 {
            30 => ControllerKind::Brightness30,
            70 => ControllerKind::Brightness70,
            _ => ControllerKind::Brightness50,
        }
    }

    fn exposure_us(&self) -> f64 {
        self.exposure_us
    }

    fn step(&mut self, frame: &Frame<'_>) -> AeDecision {
        let mean = mean_brightness(frame.image);
        self.exposure_us = target_brightness_update(self.exposure_us, mean, self.target, &self.config);
        AeDecision {
            next_exposure_us: self.exposure_us,
            metric_value: mean,
        }
    }
}

/// Index of the best score; ties go to the smallest `distance`.
fn argmax_by(scores: &[f64], distance: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        let better = scores[i] > scores[best] || (scores[i] == scores[best] && distance(i) < distance(best));
        if better {
            best = i;
        }
    }
    best
}

/// Gradient-metric controller driven by gamma-remapped copies of the frame.
#[derive(Debug, Clone)]
pub struct ShimController {
    exposure_us: f64,
    config: AeConfig,
}

impl ShimController {
    pub fn new(config: AeConfig) -> Self {
        Self {
            exposure_us: config.clamp(config.initial_exposure_us),
            config,
        }
    }
}

/// Shim metric of the frame remapped by `v ↦ v^(1/γ)` for each `γ`.
/// `γ > 1` brightens, mimicking a longer exposure.
pub fn shim_gamma_scores(img: &RawImage, gammas: &[f64], delta: f64, lambda: f64) -> Vec<f64> {
    let base = img.normalized();
    gammas
        .iter()
        .map(|&g| {
            let remapped: Vec<f64> = base.iter().map(|&v| v.powf(1.0 / g)).collect();
            metrics::shim_metric_normalized(&remapped, img.width(), img.height(), delta, lambda)
        })
        .collect()
}

/// `current · (1 + k_p (γ̂ − 1))`, clamped.
pub fn shim_update(current_us: f64, best_gamma: f64, config: &AeConfig) -> f64 {
    config.clamp(current_us * (1.0 + config.shim_gain * (best_gamma - 1.0)))
}

impl ExposureController for ShimController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Shim
    }

    fn exposure_us(&self) -> f64 {
        self.exposure_us
    }

    fn step(&mut self, frame: &Frame<'_>) -> AeDecision {
        let gammas = &self.config.shim_gammas;
        let scores = shim_gamma_scores(frame.image, gammas, self.config.shim_delta, self.config.shim_lambda);
        let best = argmax_by(&scores, |i| (gammas[i].ln()).abs());
        self.exposure_us = shim_update(self.exposure_us, gammas[best], &self.config);
        AeDecision {
            next_exposure_us: self.exposure_us,
            metric_value: shim_gradient_metric(frame.image, self.config.shim_delta, self.config.shim_lambda),
        }
    }
}

/// Percentile-weighted gradient controller using CRF-based self-emulation.
#[derive(Debug, Clone)]
pub struct ZhangController {
    exposure_us: f64,
    config: AeConfig,
}

impl ZhangController {
    pub fn new(config: AeConfig) -> Self {
        Self {
            exposure_us: config.clamp(config.initial_exposure_us),
            config,
        }
    }
}

/// Candidate stop offsets evenly spaced over `[−span, +span]`.
pub fn stop_offsets(span: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return alloc::vec![0.0];
    }
    (0..count)
        .map(|i| -span + 2.0 * span * i as f64 / (count - 1) as f64)
        .collect()
}

/// Geometric interpolation `exp((1−μ) ln current + μ ln best)`, clamped.
pub fn zhang_update(current_us: f64, best_us: f64, config: &AeConfig) -> f64 {
    let mu = config.zhang_smoothing;
    config.clamp(((1.0 - mu) * current_us.ln() + mu * best_us.ln()).exp())
}

impl ExposureController for ZhangController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Zhang
    }

    fn exposure_us(&self) -> f64 {
        self.exposure_us
    }

    fn step(&mut self, frame: &Frame<'_>) -> AeDecision {
        let cfg = &self.config;
        let current = frame.image.exposure_us;
        let offsets = stop_offsets(cfg.zhang_span_stops, cfg.zhang_candidates);
        let scores: Vec<f64> = offsets
            .iter()
            .map(|&s| {
                let t = current * 2f64.powf(s);
                // Same-image re-exposure; cannot fail for t > 0.
                emulate(frame.image, t, frame.crf)
                    .map(|img| zhang_metric(&img, cfg.zhang_knee, cfg.zhang_softness))
                    .unwrap_or(0.0)
            })
            .collect();
        let best = argmax_by(&scores, |i| offsets[i].abs());
        let best_us = current * 2f64.powf(offsets[best]);
        self.exposure_us = zhang_update(current, best_us, cfg);
        AeDecision {
            next_exposure_us: self.exposure_us,
            metric_value: zhang_metric(frame.image, cfg.zhang_knee, cfg.zhang_softness),
        }
    }
}

/// Gaussian-process UCB search over log₂ exposure with a sliding window.
#[derive(Debug, Clone)]
pub struct KimController {
    exposure_us: f64,
    window: Vec<(f64, f64)>,
    config: AeConfig,
}

impl KimController {
    pub fn new(config: AeConfig) -> Self {
        Self {
            exposure_us: config.clamp(config.initial_exposure_us),
            window: Vec::new(),
            config,
        }
    }

    /// `(log₂ exposure_us, metric)` observations currently in the window.
    pub fn window(&self) -> &[(f64, f64)] {
        &self.window
    }

    /// Adds an observation and returns the UCB-maximizing exposure.
    pub fn observe(&mut self, exposure_us: f64, metric: f64) -> f64 {
        let cfg = &self.config;
        let x = exposure_us.log2();
        self.window.push((x, metric));
        if self.window.len() > cfg.kim_window {
            let excess = self.window.len() - cfg.kim_window;
            self.window.drain(..excess);
        }
        let hyper = GpHyper {
            length_scale: cfg.kim_length_scale,
            signal_variance: cfg.kim_signal_variance,
            noise_variance: cfg.kim_noise_variance,
        };
        let xs: Vec<f64> = self.window.iter().map(|o| o.0).collect();
        let ys: Vec<f64> = self.window.iter().map(|o| o.1).collect();
        let Some(gp) = GpPosterior::fit(hyper, &xs, &ys) else {
            return cfg.clamp(exposure_us);
        };
        let lo = (x - cfg.kim_span_stops).max(cfg.exposure_min_us.log2());
        let hi = (x + cfg.kim_span_stops).min(cfg.exposure_max_us.log2());
        let n = cfg.kim_grid_points;
        let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let ucb: Vec<f64> = grid
            .iter()
            .map(|&g| {
                let (m, s) = gp.predict(g);
                m + cfg.kim_kappa * s
            })
            .collect();
        // Ties: closest to the current exposure, then the shorter one.
        let best = argmax_by(&ucb, |i| (grid[i] - x).abs() + 1e-12 * (grid[i] - x).signum());
        cfg.clamp(2f64.powf(grid[best]))
    }
}

impl ExposureController for KimController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::Kim
    }

    fn exposure_us(&self) -> f64 {
        self.exposure_us
    }

    fn step(&mut self, frame: &Frame<'_>) -> AeDecision {
        let metric = kim_metric(frame.image, self.config.kim_alpha_mix);
        self.exposure_us = self.observe(frame.image.exposure_us, metric);
        AeDecision {
            next_exposure_us: self.exposure_us,
            metric_value: metric,
        }
    }
}

/// Instantiates a controller. The fixed controller calibrates on
/// `first_cycle`; the others start at `config.initial_exposure_us`.
pub fn make_controller(
    kind: ControllerKind,
    config: &AeConfig,
    first_cycle: &BracketCycle,
    crf: &ResponseCurve,
) -> Result<Box<dyn ExposureController>> {
    config.validate()?;
    let cfg = config.clone();
    Ok(match kind {
        ControllerKind::Fixed => Box::new(fixed_ae_init(first_cycle, crf, config)?),
        ControllerKind::Brightness30 => Box::new(BrightnessController::new(0.3, cfg)),
        ControllerKind::Brightness50 => Box::new(BrightnessController::new(0.5, cfg)),
        ControllerKind::Brightness70 => Box::new(BrightnessController::new(0.7, cfg)),
        ControllerKind::Shim => Box::new(ShimController::new(cfg)),
        ControllerKind::Zhang => Box::new(ZhangController::new(cfg)),
        ControllerKind::Kim => Box::new(KimController::new(cfg)),
    })
}

/// One closed-loop step: the frame the controller saw and what it decided.
#[derive(Debug, Clone)]
pub struct ControlStep {
    pub cycle_index: u64,
    pub emulated: EmulatedImage,
    pub decision: AeDecision,
    pub mean_brightness: f64,
    pub saturation_fraction: f64,
}

/// Runs a controller over a sequence: for each cycle, emulate at the
/// current exposure, record, and step.
pub fn run_controller(
    sequence: &[BracketCycle],
    controller: &mut dyn ExposureController,
    crf: &ResponseCurve,
    sat_threshold: f64,
) -> Result<Vec<ControlStep>> {
    if sequence.is_empty() {
        return Err(domain("cannot run a controller on an empty sequence"));
    }
    let mut steps = Vec::with_capacity(sequence.len());
    for cycle in sequence {
        let emulated = emulate_from_cycle_with(cycle, controller.exposure_us(), crf, sat_threshold)?;
        let decision = controller.step(&Frame {
            image: &emulated.image,
            cycle,
            crf,
        });
        steps.push(ControlStep {
            cycle_index: cycle.cycle_index,
            mean_brightness: mean_brightness(&emulated.image),
            saturation_fraction: saturation_stats(&emulated.image).fraction,
            emulated,
            decision,
        });
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulation::DEFAULT_LADDER_US;
    use alloc::vec;

    /// Uniform scene where 8 ms gives DN 2047.5 before quantization.
    fn uniform_cycle(per_us: f64) -> BracketCycle {
        let images = DEFAULT_LADDER_US
            .iter()
            .map(|&t| RawImage::filled(8, 8, (per_us * t).min(4095.0) as u16, t).unwrap())
            .collect();
        BracketCycle::new(images, 0).unwrap()
    }

    #[test]
    fn fixed_calibration_inverts_linear_scene() {
        let cycle = uniform_cycle(2047.5 / 8000.0);
        let crf = ResponseCurve::linear();
        let cfg = AeConfig::default();
        let t = calibrate_fixed_exposure(&cycle, &crf, &cfg, 0.5).unwrap();
        assert!((t / 8000.0 - 1.0).abs() < 0.02, "{t}");
    }

    #[test]
    fn fixed_calibration_on_dark_cycle_hits_max() {
        let cycle = uniform_cycle(0.0);
        let cfg = AeConfig::default();
        let c = fixed_ae_init(&cycle, &ResponseCurve::linear(), &cfg).unwrap();
        assert_eq!(c.exposure_us(), cfg.exposure_max_us);
    }

    #[test]
    fn fixed_controller_is_constant() {
        let cycle = uniform_cycle(0.1);
        let crf = ResponseCurve::linear();
        let mut c = FixedController::new(1234.0);
        for _ in 0..100 {
            let img = &cycle.images()[2];
            let d = c.step(&Frame {
                image: img,
                cycle: &cycle,
                crf: &crf,
            });
            assert_eq!(d.next_exposure_us, 1234.0);
        }
    }

    #[test]
    fn brightness_update_examples() {
        let mut cfg = AeConfig::default();
        assert_eq!(target_brightness_update(4000.0, 0.5, 0.5, &cfg), 4000.0);
        cfg.brightness_damping = 1.0;
        assert!((target_brightness_update(4000.0, 0.25, 0.5, &cfg) - 8000.0).abs() < 1e-9);
        assert!((target_brightness_update(1000.0, 0.0, 0.5, &cfg) - 8000.0).abs() < 1e-9);
        assert_eq!(target_brightness_update(40_000.0, 0.0, 0.5, &cfg), cfg.exposure_max_us);
    }

    #[test]
    fn shim_update_examples() {
        let cfg = AeConfig::default();
        assert_eq!(shim_update(5000.0, 1.0, &cfg), 5000.0);
        assert!((shim_update(1000.0, 1.9, &cfg) - 1450.0).abs() < 1e-9);
    }

    #[test]
    fn zhang_examples() {
        let cfg = AeConfig {
            zhang_smoothing: 1.0,
            ..AeConfig::default()
        };
        let best = 1000.0 * 2f64.powf(1.5);
        assert!((zhang_update(1000.0, best, &cfg) - best).abs() < 1e-9);
        let offsets = stop_offsets(1.5, 7);
        assert_eq!(offsets.len(), 7);
        assert!((offsets[0] + 1.5).abs() < 1e-12 && offsets[3].abs() < 1e-12);
        assert_eq!(stop_offsets(1.0, 1), vec![0.0]);

        let cycle = uniform_cycle(0.1);
        let crf = ResponseCurve::linear();
        let mut c = ZhangController::new(AeConfig::default());
        let img = RawImage::filled(16, 16, 1500, 8000.0).unwrap();
        let d = c.step(&Frame {
            image: &img,
            cycle: &cycle,
            crf: &crf,
        });
        assert_eq!(d.next_exposure_us, 8000.0);
    }

    #[test]
    fn argmax_ties_prefer_small_distance() {
        assert_eq!(argmax_by(&[1.0, 1.0, 1.0], |i| (i as f64 - 1.0).abs()), 1);
        assert_eq!(argmax_by(&[0.0, 2.0, 1.0], |_| 0.0), 1);
    }

    #[test]
    fn kim_explores_away_from_single_observation() {
        let cfg = AeConfig {
            kim_window: 1,
            ..AeConfig::default()
        };
        let mut c = KimController::new(cfg);
        let next = c.observe(8000.0, 0.5);
        assert!((next.log2() - 8000f64.log2()).abs() > 1.0, "{next}");
        assert_eq!(c.window().len(), 1);
        c.observe(next, 0.4);
        assert_eq!(c.window().len(), 1);
    }

    #[test]
    fn config_checks() {
        let cfg = AeConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.clamp(f64::NAN), cfg.exposure_min_us);
        assert_eq!(cfg.clamp(1e9), cfg.exposure_max_us);
        let bad = AeConfig {
            exposure_min_us: 10.0,
            exposure_max_us: 5.0,
            ..AeConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AeConfig {
            kim_window: 0,
            ..AeConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn controller_names() {
        for k in ControllerKind::ALL {
            assert_eq!(ControllerKind::from_name(k.name()), Some(k));
            assert_eq!(ControllerKind::from_name(k.label()), Some(k));
        }
        assert_eq!(ControllerKind::from_name("M_30%"), Some(ControllerKind::Brightness30));
        assert_eq!(ControllerKind::from_name("x"), None);
    }

    #[test]
    fn run_controller_records_every_cycle() {
        let crf = ResponseCurve::linear();
        let seq: Vec<BracketCycle> = (0..5).map(|_| uniform_cycle(0.05)).collect();
        let mut c = BrightnessController::new(0.5, AeConfig::default());
        let steps = run_controller(&seq, &mut c, &crf, 0.01).unwrap();
        assert_eq!(steps.len(), 5);
        assert_eq!(steps[0].emulated.image.exposure_us, 8000.0);
        assert_eq!(steps[1].emulated.image.exposure_us, steps[0].decision.next_exposure_us);
        assert!(run_controller(&[], &mut c, &crf, 0.01).is_err());
    }
}
