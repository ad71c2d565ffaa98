//! Exposure emulation from bracketed captures.
//!
//! A target image is synthesized from one source bracket by scaling its
//! linearized values by the exposure ratio and re-applying the response:
//! `I_target = f(Δt_target / Δt_source · f⁻¹(I_source))`. Vignetting cancels
//! per pixel, so it never enters here.
use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{domain, Result};
use crate::image::{check_exposure, RawImage, DN_LEVELS, MAX_DN};
use crate::photometry::ResponseCurve;
use crate::stats;

/// The bracket ladder used by the capture rig, in microseconds.
pub const DEFAULT_LADDER_US: [f64; 6] = [1000.0, 2000.0, 4000.0, 8000.0, 16000.0, 32000.0];

/// Saturation level above which HigherNoSat falls back to the lower bracket.
pub const DEFAULT_SAT_THRESHOLD: f64 = 0.01;

/// One bracketing cycle: images at strictly increasing exposures.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketCycle {
    images: Vec<RawImage>,
    pub cycle_index: u64,
}

impl BracketCycle {
    pub fn new(images: Vec<RawImage>, cycle_index: u64) -> Result<Self> {
        if images.is_empty() {
            return Err(domain("a bracket cycle needs at least one image"));
        }
        for pair in images.windows(2) {
            pair[0].same_size(&pair[1])?;
            if !(pair[1].exposure_us > pair[0].exposure_us) {
                return Err(domain("bracket exposures must be strictly increasing"));
            }
        }
        Ok(Self { images, cycle_index })
    }

    /// Like [`new`](Self::new) but also checks the exposures against a ladder.
    pub fn with_ladder(images: Vec<RawImage>, cycle_index: u64, ladder_us: &[f64]) -> Result<Self> {
        let cycle = Self::new(images, cycle_index)?;
        let matches = cycle.images.len() == ladder_us.len()
            && cycle
                .images
                .iter()
                .zip(ladder_us)
                .all(|(img, &t)| (img.exposure_us - t).abs() <= 1e-9 * t);
        if !matches {
            return Err(domain("bracket exposures do not match the configured ladder"));
        }
        Ok(cycle)
    }

    pub fn images(&self) -> &[RawImage] {
        &self.images
    }

    pub fn into_images(self) -> Vec<RawImage> {
        self.images
    }

    pub fn ladder(&self) -> Vec<f64> {
        self.images.iter().map(|img| img.exposure_us).collect()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationStats {
    /// Pixels at DN 0.
    pub under_count: usize,
    /// Pixels at DN 4095.
    pub over_count: usize,
    pub fraction: f64,
}

pub fn saturation_stats(img: &RawImage) -> SaturationStats {
    let mut under = 0;
    let mut over = 0;
    for &v in img.data() {
        if v == 0 {
            under += 1;
        } else if v == MAX_DN {
            over += 1;
        }
    }
    SaturationStats {
        under_count: under,
        over_count: over,
        fraction: (under + over) as f64 / img.pixel_count() as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmulatedImage {
    pub image: RawImage,
    pub source_index: usize,
    pub source_exposure_us: f64,
}

/// Per-DN output table for one exposure ratio.
fn ratio_table(ratio: f64, crf: &ResponseCurve) -> [u16; DN_LEVELS] {
    let lut = crf.inverse_lut();
    let mut table = [0u16; DN_LEVELS];
    for (dn, out) in table.iter_mut().enumerate() {
        *out = crf.quantize(ratio * lut[dn]);
    }
    table
}

/// Re-exposes `source` to `target_exposure_us`.
pub fn emulate(source: &RawImage, target_exposure_us: f64, crf: &ResponseCurve) -> Result<RawImage> {
    check_exposure(target_exposure_us)?;
    let ratio = target_exposure_us / source.exposure_us;
    Ok(source.map_pixels(&ratio_table(ratio, crf), target_exposure_us))
}

/// HigherNoSat bracket selection.
///
/// Targets outside the ladder take the closest bracket and exact ladder
/// matches take that bracket. Otherwise the bounding pair
/// `Δt_low < target < Δt_high` is found and the higher bracket is chosen if
/// its saturated fraction is strictly below `sat_threshold`.
pub fn select_bracket_higher_no_sat(
    cycle: &BracketCycle,
    target_exposure_us: f64,
    sat_threshold: f64,
) -> Result<usize> {
    let images = cycle.images();
    select_with(&cycle.ladder(), target_exposure_us, sat_threshold, |i| {
        saturation_stats(&images[i]).fraction
    })
}

/// Selection over a ladder with a lazily evaluated saturation fraction per
/// bracket index.
pub fn select_with(
    ladder_us: &[f64],
    target: f64,
    sat_threshold: f64,
    mut saturation: impl FnMut(usize) -> f64,
) -> Result<usize> {
    check_exposure(target)?;
    if ladder_us.is_empty() {
        return Err(domain("cannot select from an empty cycle"));
    }
    let last = ladder_us.len() - 1;
    if target <= ladder_us[0] {
        return Ok(0);
    }
    if target >= ladder_us[last] {
        return Ok(last);
    }
    if let Some(i) = ladder_us.iter().position(|&t| t == target) {
        return Ok(i);
    }
    let high = ladder_us.partition_point(|&t| t < target);
    if saturation(high) < sat_threshold {
        Ok(high)
    } else {
        Ok(high - 1)
    }
}

/// Selects a source with HigherNoSat and emulates the target from it.
pub fn emulate_from_cycle(cycle: &BracketCycle, target_exposure_us: f64, crf: &ResponseCurve) -> Result<EmulatedImage> {
    emulate_from_cycle_with(cycle, target_exposure_us, crf, DEFAULT_SAT_THRESHOLD)
}

pub fn emulate_from_cycle_with(
    cycle: &BracketCycle,
    target_exposure_us: f64,
    crf: &ResponseCurve,
    sat_threshold: f64,
) -> Result<EmulatedImage> {
    let index = select_bracket_higher_no_sat(cycle, target_exposure_us, sat_threshold)?;
    let source = &cycle.images()[index];
    Ok(EmulatedImage {
        image: emulate(source, target_exposure_us, crf)?,
        source_index: index,
        source_exposure_us: source.exposure_us,
    })
}

/// Root-mean-square difference as a percentage of the 12-bit range.
pub fn rmse_percent(a: &RawImage, b: &RawImage) -> Result<f64> {
    a.same_size(b)?;
    let sum_sq: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok((sum_sq / a.pixel_count() as f64).sqrt() / f64::from(MAX_DN) * 100.0)
}

/// Mean RMSE between consecutive repeats taken at one exposure.
pub fn noise_floor(repeats: &[RawImage]) -> Result<f64> {
    if repeats.len() < 2 {
        return Err(domain("noise floor needs at least two repeats"));
    }
    let exposure = repeats[0].exposure_us;
    if repeats.iter().any(|img| img.exposure_us != exposure) {
        return Err(domain("noise-floor repeats must share one exposure"));
    }
    let mut total = 0.0;
    for pair in repeats.windows(2) {
        total += rmse_percent(&pair[0], &pair[1])?;
    }
    Ok(total / (repeats.len() - 1) as f64)
}

/// One row of the emulation validation report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationPoint {
    pub gt_exposure_us: f64,
    /// HigherNoSat error after noise-floor subtraction, floored at 0.
    pub rmse_highernosat_pct: f64,
    /// Raw error of always emulating from bracket `i` (no subtraction).
    pub rmse_per_bracket_pct: Vec<f64>,
    pub selected_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ValidationReport {
    pub ladder_us: Vec<f64>,
    pub noise_floor_pct: f64,
    pub points: Vec<ValidationPoint>,
    pub median_pct: f64,
    pub max_pct: f64,
}

impl ValidationReport {
    /// Fraction of points where the HigherNoSat choice is among the `k`
    /// best single-bracket choices.
    pub fn selection_rank_rate(&self, k: usize) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let hits = self
            .points
            .iter()
            .filter(|p| {
                let chosen = p.rmse_per_bracket_pct[p.selected_index];
                let better = p.rmse_per_bracket_pct.iter().filter(|&&e| e < chosen).count();
                better < k
            })
            .count();
        hits as f64 / self.points.len() as f64
    }
}

/// Emulates every ground-truth exposure of a static-scene sweep and scores it.
///
/// `noise_floor_pct` is subtracted from the HigherNoSat curve (clamped at
/// zero); the single-bracket curves are reported raw.
pub fn validate_emulation(
    sweep: &[RawImage],
    cycle: &BracketCycle,
    crf: &ResponseCurve,
    noise_floor_pct: f64,
) -> Result<ValidationReport> {
    if sweep.is_empty() {
        return Err(domain("validation sweep is empty"));
    }
    if !(noise_floor_pct >= 0.0) {
        return Err(domain(format!("noise floor must be >= 0, got {noise_floor_pct}")));
    }
    let sat: Vec<f64> = cycle
        .images()
        .iter()
        .map(|img| saturation_stats(img).fraction)
        .collect();
    let ladder = cycle.ladder();
    let mut points = Vec::with_capacity(sweep.len());
    for gt in sweep {
        gt.same_size(&cycle.images()[0])?;
        let t = gt.exposure_us;
        let mut per_bracket = Vec::with_capacity(cycle.len());
        for source in cycle.images() {
            let emulated = emulate(source, t, crf)?;
            per_bracket.push(rmse_percent(&emulated, gt)?);
        }
        let selected = select_with(&ladder, t, DEFAULT_SAT_THRESHOLD, |i| sat[i])?;
        points.push(ValidationPoint {
            gt_exposure_us: t,
            rmse_highernosat_pct: (per_bracket[selected] - noise_floor_pct).max(0.0),
            rmse_per_bracket_pct: per_bracket,
            selected_index: selected,
        });
    }
    let curve: Vec<f64> = points.iter().map(|p| p.rmse_highernosat_pct).collect();
    Ok(ValidationReport {
        ladder_us: cycle.ladder(),
        noise_floor_pct,
        median_pct: stats::median(&curve).unwrap_or(0.0),
        max_pct: curve.iter().copied().fold(0.0, f64::max),
        points,
    })
}
