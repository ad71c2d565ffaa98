//! Run configuration: every tunable of every command, serializable to TOML.
use std::path::Path;

use aebench_core::ae_control::{AeConfig, ControllerKind};
use aebench_core::emulation::DEFAULT_LADDER_US;
use aebench_core::features::{FeatureConfig, MIN_MOTION_MATCHES};
use aebench_core::photometry::{make_parametric_crf, CrfKind};
use aebench_core::synth::{derive_seed, CaptureSpec, SceneSpec};
use aebench_core::trajectory::{Intrinsics, RansacConfig, DEFAULT_MAX_GAP_NS};
use serde::{Deserialize, Serialize};

use crate::error::{FormatError, FormatResult};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed: scene canvas, sensor noise streams.
    pub seed: u64,
    pub scene: SceneSpec,
    pub capture: CaptureConfig,
    pub ae: AeConfig,
    pub features: FeatureConfig,
    pub ransac: RansacConfig,
    pub validation: ValidationConfig,
    pub calibration: CalibrationConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            scene: SceneSpec::default(),
            capture: CaptureConfig::default(),
            ae: AeConfig::default(),
            features: FeatureConfig::default(),
            ransac: RansacConfig::default(),
            validation: ValidationConfig::default(),
            calibration: CalibrationConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureConfig {
    pub ladder_us: Vec<f64>,
    pub crf: CrfKind,
    pub read_noise_dn: f64,
    pub shot_noise: f64,
    pub vignette_strength: f64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub focal_px: f64,
    pub drift_px_per_bracket: f64,
    pub frame_rate_hz: f64,
    pub meters_per_px: f64,
    /// Camera travel per cycle along the loop path, canvas pixels.
    pub step_px: f64,
    /// Starting angle of the loop path, radians.
    pub phase: f64,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        let d = CaptureSpec::default();
        Self {
            ladder_us: DEFAULT_LADDER_US.to_vec(),
            crf: CrfKind::Linear,
            read_noise_dn: d.read_noise_dn,
            shot_noise: d.shot_noise,
            vignette_strength: d.vignette_strength,
            frame_width: d.frame_width,
            frame_height: d.frame_height,
            focal_px: d.focal_px,
            drift_px_per_bracket: d.drift_px_per_bracket,
            frame_rate_hz: d.frame_rate_hz,
            meters_per_px: d.meters_per_px,
            step_px: 12.0,
            phase: 0.0,
        }
    }
}

impl CaptureConfig {
    /// Capture model for `cycles` cycles on the loop path over `scene`.
    pub fn to_spec(&self, scene: &SceneSpec, cycles: usize, seed: u64) -> FormatResult<CaptureSpec> {
        let crf = make_parametric_crf(self.crf)?;
        Ok(CaptureSpec {
            ladder_us: self.ladder_us.clone(),
            crf,
            read_noise_dn: self.read_noise_dn,
            shot_noise: self.shot_noise,
            vignette_strength: self.vignette_strength,
            frame_width: self.frame_width,
            frame_height: self.frame_height,
            focal_px: self.focal_px,
            path: CaptureSpec::loop_path(
                scene.width,
                scene.height,
                self.frame_width,
                self.frame_height,
                cycles,
                self.step_px,
                self.phase,
            ),
            drift_px_per_bracket: self.drift_px_per_bracket,
            frame_rate_hz: self.frame_rate_hz,
            meters_per_px: self.meters_per_px,
            noise_seed: derive_seed(seed, 1),
        })
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::new(
            self.focal_px,
            self.focal_px,
            0.5 * (self.frame_width as f64 - 1.0),
            0.5 * (self.frame_height as f64 - 1.0),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub exposures: usize,
    pub min_exposure_us: f64,
    pub max_exposure_us: f64,
    /// Repeats per noise-floor exposure.
    pub repeats: usize,
    /// Exposures, log-spaced over the sweep range, at which the floor is measured.
    pub floor_exposures: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            exposures: 200,
            min_exposure_us: 20.0,
            max_exposure_us: 50_000.0,
            repeats: 25,
            floor_exposures: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub lambda_smooth: f64,
    pub sample_count: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            lambda_smooth: 50.0,
            sample_count: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Controller names; `all` expands to the full roster.
    pub controllers: Vec<String>,
    /// Thresholds of the success curve.
    pub taus: Vec<usize>,
    /// Threshold highlighted in reports.
    pub tau_marker: usize,
    pub rpe_lengths_m: Vec<f64>,
    pub max_gap_ns: i64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            controllers: vec!["all".into()],
            taus: (0..=300).step_by(5).collect(),
            tau_marker: MIN_MOTION_MATCHES,
            rpe_lengths_m: vec![0.5, 1.0, 2.0],
            max_gap_ns: DEFAULT_MAX_GAP_NS,
        }
    }
}

/// Expands controller names (`all`, `fixed`, `30`, `M_Shim`, ...) into a
/// sorted, de-duplicated roster.
pub fn parse_controllers(names: &[String]) -> Result<Vec<ControllerKind>, String> {
    let mut out = Vec::new();
    for name in names {
        if name == "all" {
            out.extend(ControllerKind::ALL);
        } else {
            out.push(ControllerKind::from_name(name).ok_or_else(|| {
                format!("unknown controller {name:?}; expected all, fixed, 30, 50, 70, shim, zhang or kim")
            })?);
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err("no controllers selected".into());
    }
    Ok(out)
}

impl RunConfig {
    pub fn load(path: &Path) -> FormatResult<Self> {
        let text = fsutil::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| FormatError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always representable in TOML")
    }
}
