//! Camera response curves.
//!
//! A [`ResponseCurve`] stores the inverse response `f⁻¹` as a 4096-entry
//! lookup table from digital number to relative exposure, normalized so the
//! saturation level maps to 1. The forward response `f` is the monotone
//! inverse of that table.
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{domain, Error, Result};
use crate::image::{RawImage, DN_LEVELS, MAX_DN};

/// Inverse camera response as a lookup table over all 4096 digital numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve {
    inverse_lut: Vec<f64>,
}

impl ResponseCurve {
    /// Validates monotonicity, the `lut[4095] == 1` anchor and `lut[0] >= 0`.
    pub fn from_lut(inverse_lut: Vec<f64>) -> Result<Self> {
        if inverse_lut.len() != DN_LEVELS {
            return Err(Error::InvalidCurve(format!(
                "expected {DN_LEVELS} entries, got {}",
                inverse_lut.len()
            )));
        }
        if let Some(dn) = inverse_lut.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve(format!("entry {dn} is not finite")));
        }
        if inverse_lut[0] < 0.0 {
            return Err(Error::InvalidCurve("entry 0 is negative".into()));
        }
        if let Some(dn) = inverse_lut.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidCurve(format!(
                "curve decreases between DN {} and {}",
                dn,
                dn + 1
            )));
        }
        if inverse_lut[DN_LEVELS - 1] != 1.0 {
            return Err(Error::InvalidCurve(format!(
                "entry 4095 must be exactly 1.0, got {}",
                inverse_lut[DN_LEVELS - 1]
            )));
        }
        Ok(Self { inverse_lut })
    }

    pub fn linear() -> Self {
        make_parametric_crf(CrfKind::Linear).expect("linear curve is always valid")
    }

    pub fn inverse_lut(&self) -> &[f64] {
        &self.inverse_lut
    }

    /// `f⁻¹(dn)`.
    pub fn dn_to_exposure(&self, dn: u16) -> Result<f64> {
        if dn > MAX_DN {
            return Err(domain(format!("digital number {dn} exceeds {MAX_DN}")));
        }
        Ok(self.inverse_lut[dn as usize])
    }

    /// `f(x)`: the largest DN whose table entry does not exceed `x`.
    /// Exposures at or above 1 saturate to 4095.
    pub fn exposure_to_dn(&self, x: f64) -> Result<u16> {
        if !(x >= 0.0) {
            return Err(domain(format!("relative exposure must be >= 0, got {x}")));
        }
        Ok(self.quantize(x))
    }

    /// Infallible form of [`exposure_to_dn`](Self::exposure_to_dn) for
    /// callers that already hold a non-negative value.
    #[inline]
    pub(crate) fn quantize(&self, x: f64) -> u16 {
        if x >= 1.0 {
            return MAX_DN;
        }
        let count = self.inverse_lut.partition_point(|&v| v <= x);
        count.saturating_sub(1) as u16
    }
}

/// Closed-form ground-truth curves for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "param", rename_all = "kebab-case"))]
pub enum CrfKind {
    Linear,
    /// Inverse response `(dn/4095)^g`.
    Gamma(f64),
    /// Logistic forward response with steepness `a`, normalized to hit both
    /// end points.
    SCurve(f64),
}

pub fn make_parametric_crf(kind: CrfKind) -> Result<ResponseCurve> {
    let top = f64::from(MAX_DN);
    let lut: Vec<f64> = match kind {
        CrfKind::Linear => (0..DN_LEVELS).map(|d| d as f64 / top).collect(),
        CrfKind::Gamma(g) => {
            if !(g > 0.0) || !g.is_finite() {
                return Err(domain(format!("gamma must be positive, got {g}")));
            }
            (0..DN_LEVELS).map(|d| (d as f64 / top).powf(g)).collect()
        }
        CrfKind::SCurve(a) => {
            if !(a > 0.0) || !a.is_finite() {
                return Err(domain(format!("s-curve steepness must be positive, got {a}")));
            }
            let sigmoid = |t: f64| 1.0 / (1.0 + (-t).exp());
            let lo = sigmoid(-a / 2.0);
            let hi = sigmoid(a / 2.0);
            let mut lut: Vec<f64> = (0..DN_LEVELS)
                .map(|d| {
                    let s = lo + (d as f64 / top) * (hi - lo);
                    (0.5 + (s / (1.0 - s)).ln() / a).clamp(0.0, 1.0)
                })
                .collect();
            lut[0] = 0.0;
            for i in 1..DN_LEVELS {
                lut[i] = lut[i].max(lut[i - 1]);
            }
            lut
        }
    };
    let mut lut = lut;
    lut[DN_LEVELS - 1] = 1.0;
    ResponseCurve::from_lut(lut)
}

/// Images of one static scene at strictly increasing exposures.
#[derive(Debug, Clone)]
pub struct CalibrationStack {
    images: Vec<RawImage>,
}

impl CalibrationStack {
    pub fn new(images: Vec<RawImage>) -> Result<Self> {
        if images.len() < 3 {
            return Err(Error::CalibrationInsufficient(images.len()));
        }
        for pair in images.windows(2) {
            pair[0].same_size(&pair[1])?;
            if !(pair[1].exposure_us > pair[0].exposure_us) {
                return Err(domain("calibration exposures must be strictly increasing"));
            }
        }
        Ok(Self { images })
    }

    pub fn images(&self) -> &[RawImage] {
        &self.images
    }
}

/// Knot spacing of the log-response model in DN. The log response is
/// steepest near DN 0, so the low end is sampled more densely.
const KNOT_SPACING: usize = 16;

fn knot_positions() -> Vec<usize> {
    let mut knots: Vec<usize> = (0..32).collect();
    knots.extend((32..128).step_by(4));
    knots.extend((128..DN_LEVELS).step_by(KNOT_SPACING));
    knots.push(DN_LEVELS - 1);
    knots
}

/// Index of the left knot and interpolation weight at a continuous DN position.
fn knot_segment(pos: f64, knots: &[usize]) -> (usize, f64) {
    let k = knots.partition_point(|&q| q as f64 <= pos).clamp(1, knots.len() - 1) - 1;
    let (a, b) = (knots[k] as f64, knots[k + 1] as f64);
    (k, ((pos - a) / (b - a)).clamp(0.0, 1.0))
}

/// Hat weight: 1 at mid-range, 0 at both clipping levels.
fn hat_weight(dn: usize) -> f64 {
    let top = f64::from(MAX_DN);
    1.0 - (2.0 * dn as f64 / top - 1.0).abs()
}

/// Accumulates normal equations `AᵀA x = Aᵀb` one sparse row at a time.
struct NormalEquations {
    ata: DMatrix<f64>,
    atb: DVector<f64>,
}

impl NormalEquations {
    fn new(n: usize) -> Self {
        Self {
            ata: DMatrix::zeros(n, n),
            atb: DVector::zeros(n),
        }
    }

    fn add_row(&mut self, entries: &[(usize, f64)], rhs: f64) {
        for &(i, vi) in entries {
            self.atb[i] += vi * rhs;
            for &(j, vj) in entries {
                self.ata[(i, j)] += vi * vj;
            }
        }
    }
}

/// Recovers the inverse response from an exposure stack.
///
/// Solves for the log inverse response `g(z) = ln f⁻¹(z)` and per-sample log
/// irradiance in the least-squares sense, with hat-weighted data terms and a
/// second-difference smoothness prior of strength `lambda_smooth`. `g` is
/// represented on knots (dense near DN 0, every 16 DN above 128) and
/// interpolated linearly between them.
/// DN bins not seen unsaturated in the samples are filled by linear
/// interpolation (extrapolation at the ends), the result is projected onto
/// monotone curves and normalized so that DN 4095 maps to 1.
pub fn estimate_inverse_crf(
    stack: &CalibrationStack,
    lambda_smooth: f64,
    sample_count: usize,
) -> Result<ResponseCurve> {
    if !(lambda_smooth > 0.0) {
        return Err(domain("lambda_smooth must be positive"));
    }
    if sample_count < 32 {
        return Err(domain(format!("sample_count must be >= 32, got {sample_count}")));
    }
    let images = stack.images();
    let width = images[0].width();
    let height = images[0].height();

    let nx = ((sample_count as f64 * width as f64 / height as f64).sqrt().ceil() as usize).clamp(1, width);
    let ny = sample_count.div_ceil(nx).clamp(1, height);
    let mut samples: Vec<Vec<u16>> = Vec::new();
    for j in 0..ny {
        let y = ((j as f64 + 0.5) * height as f64 / ny as f64) as usize;
        for i in 0..nx {
            let x = ((i as f64 + 0.5) * width as f64 / nx as f64) as usize;
            let values: Vec<u16> = images.iter().map(|img| img.get(x, y)).collect();
            if values.iter().any(|&v| v > 0 && v < MAX_DN) {
                samples.push(values);
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::DegenerateStack);
    }

    let knots = knot_positions();
    let n_knots = knots.len();
    let mut system = NormalEquations::new(n_knots);
    let log_times: Vec<f64> = images.iter().map(|img| img.exposure_us.ln()).collect();
    let mut observed = vec![false; DN_LEVELS];

    // Each sample's log irradiance appears only in its own rows, so it is
    // eliminated on the fly (Schur complement) and only the knots remain.
    let mut cross: Vec<(usize, f64)> = Vec::new();
    for values in &samples {
        cross.clear();
        let mut xx = 0.0;
        let mut xb = 0.0;
        for (&dn, &log_t) in values.iter().zip(&log_times) {
            let z = dn as usize;
            let w = hat_weight(z);
            if w <= 0.0 {
                continue;
            }
            observed[z] = true;
            // DN z covers exposures in [f⁻¹(z), f⁻¹(z + 1)); fit at the bin centre.
            let (k, frac) = knot_segment(z as f64 + 0.5, &knots);
            let row = [(k, w * (1.0 - frac)), (k + 1, w * frac)];
            let rhs = w * log_t;
            system.add_row(&row, rhs);
            for (i, v) in row {
                match cross.iter_mut().find(|(j, _)| *j == i) {
                    Some(entry) => entry.1 -= w * v,
                    None => cross.push((i, -w * v)),
                }
            }
            xx += w * w;
            xb -= w * rhs;
        }
        if xx > 0.0 {
            for &(i, ci) in &cross {
                system.atb[i] -= ci * xb / xx;
                for &(j, cj) in &cross {
                    system.ata[(i, j)] -= ci * cj / xx;
                }
            }
        }
    }

    // Smoothness penalizes the per-DN second derivative of g.
    let floor = 1e-3;
    for k in 1..n_knots - 1 {
        let h_left = (knots[k] - knots[k - 1]) as f64;
        let h_right = (knots[k + 1] - knots[k]) as f64;
        let w = lambda_smooth * hat_weight(knots[k]).max(floor);
        let a = 2.0 / (h_left * (h_left + h_right));
        let c = 2.0 / (h_right * (h_left + h_right));
        system.add_row(&[(k - 1, w * a), (k, -w * (a + c)), (k + 1, w * c)], 0.0);
    }
    // Gauge: g = 0 at mid-range. Absolute scale is fixed later by normalization.
    system.add_row(&[(n_knots / 2, 1.0)], 0.0);

    let solution = system
        .ata
        .cholesky()
        .map(|c| c.solve(&system.atb))
        .ok_or(Error::DegenerateStack)?;

    let first = observed.iter().position(|&o| o).ok_or(Error::DegenerateStack)?;
    let last = observed.iter().rposition(|&o| o).ok_or(Error::DegenerateStack)?;
    let log_at = |z: usize| {
        let (k, frac) = knot_segment(z as f64, &knots);
        solution[k] * (1.0 - frac) + solution[k + 1] * frac
    };
    let mut lut = vec![0.0; DN_LEVELS];
    let observed_bins: Vec<usize> = (first..=last).filter(|&z| observed[z]).collect();
    for &z in &observed_bins {
        lut[z] = log_at(z).exp();
    }
    for pair in observed_bins.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for z in a + 1..b {
            let t = (z - a) as f64 / (b - a) as f64;
            lut[z] = lut[a] * (1.0 - t) + lut[b] * t;
        }
    }
    let chord = |lut: &[f64], from: usize, to: usize| (lut[to] - lut[from]) / (to - from).max(1) as f64;
    let span = 64.min(last - first);
    let low_slope = chord(&lut, first, first + span).max(0.0);
    let high_slope = chord(&lut, last - span, last).max(0.0);
    for z in 0..first {
        lut[z] = (lut[first] - low_slope * (first - z) as f64).max(0.0);
    }
    for z in last + 1..DN_LEVELS {
        lut[z] = lut[last] + high_slope * (z - last) as f64;
    }

    isotonic_non_decreasing(&mut lut);
    let top = lut[DN_LEVELS - 1];
    if !(top > 0.0) || !top.is_finite() {
        return Err(Error::DegenerateStack);
    }
    for v in lut.iter_mut() {
        *v = (*v / top).clamp(0.0, 1.0);
    }
    lut[DN_LEVELS - 1] = 1.0;
    ResponseCurve::from_lut(lut)
}

/// Pool-adjacent-violators projection onto non-decreasing sequences
/// (unweighted least squares).
pub(crate) fn isotonic_non_decreasing(values: &mut [f64]) {
    // (sum, count) blocks
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.last_mut().unwrap();
                *last = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut i = 0;
    for (sum, count) in blocks {
        let mean = sum / count as f64;
        for v in &mut values[i..i + count] {
            *v = mean;
        }
        i += count;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_curve_lookups() {
        let crf = ResponseCurve::linear();
        assert_eq!(crf.dn_to_exposure(4095).unwrap(), 1.0);
        assert_eq!(crf.dn_to_exposure(0).unwrap(), 0.0);
        assert!((crf.dn_to_exposure(2048).unwrap() - 2048.0 / 4095.0).abs() < 1e-15);
        assert!((crf.dn_to_exposure(2048).unwrap() - 0.50012).abs() < 1e-5);
        assert!(crf.dn_to_exposure(4096).is_err());
    }

    #[test]
    fn exposure_to_dn_clamps_and_quantizes() {
        let crf = ResponseCurve::linear();
        assert_eq!(crf.exposure_to_dn(1.0).unwrap(), 4095);
        assert_eq!(crf.exposure_to_dn(2.5).unwrap(), 4095);
        let q = crf.exposure_to_dn(0.25).unwrap();
        assert!(q == 1023 || q == 1024, "{q}");
        assert!(crf.exposure_to_dn(-0.1).is_err());
        assert!(crf.exposure_to_dn(f64::NAN).is_err());
    }

    #[test]
    fn parametric_curves() {
        let linear = ResponseCurve::linear();
        let gamma1 = make_parametric_crf(CrfKind::Gamma(1.0)).unwrap();
        for (a, b) in linear.inverse_lut().iter().zip(gamma1.inverse_lut()) {
            assert!((a - b).abs() < 1e-12);
        }
        let gamma = make_parametric_crf(CrfKind::Gamma(2.2)).unwrap();
        let expected = (2048.0f64 / 4095.0).powf(2.2);
        assert!((gamma.inverse_lut()[2048] - expected).abs() < 1e-15);
        assert!((gamma.inverse_lut()[2048] - 0.2176).abs() < 5e-4);
        let s = make_parametric_crf(CrfKind::SCurve(6.0)).unwrap();
        assert_eq!(s.inverse_lut()[0], 0.0);
        assert_eq!(s.inverse_lut()[4095], 1.0);
        assert!(make_parametric_crf(CrfKind::Gamma(0.0)).is_err());
        assert!(make_parametric_crf(CrfKind::Gamma(-1.0)).is_err());
        assert!(make_parametric_crf(CrfKind::SCurve(0.0)).is_err());
    }

    #[test]
    fn from_lut_rejects_invalid_tables() {
        let mut lut = ResponseCurve::linear().inverse_lut().to_vec();
        lut[100] = 0.5;
        assert!(matches!(ResponseCurve::from_lut(lut), Err(Error::InvalidCurve(_))));
        let mut lut = ResponseCurve::linear().inverse_lut().to_vec();
        lut[4095] = 0.99;
        lut[4094] = 0.98;
        assert!(ResponseCurve::from_lut(lut).is_err());
        assert!(ResponseCurve::from_lut(vec![0.0; 10]).is_err());
        let mut lut = ResponseCurve::linear().inverse_lut().to_vec();
        lut[0] = -0.01;
        assert!(ResponseCurve::from_lut(lut).is_err());
    }

    #[test]
    fn stack_needs_three_images() {
        let a = RawImage::filled(8, 8, 100, 1000.0).unwrap();
        let b = RawImage::filled(8, 8, 200, 2000.0).unwrap();
        assert_eq!(
            CalibrationStack::new(vec![a.clone(), b.clone()]).unwrap_err(),
            Error::CalibrationInsufficient(2)
        );
        let c = RawImage::filled(8, 8, 300, 1500.0).unwrap();
        assert!(CalibrationStack::new(vec![a, b, c]).is_err());
    }

    #[test]
    fn fully_saturated_stack_is_degenerate() {
        let imgs = [1000.0, 2000.0, 4000.0]
            .iter()
            .map(|&t| RawImage::filled(32, 32, 4095, t).unwrap())
            .collect();
        let stack = CalibrationStack::new(imgs).unwrap();
        assert_eq!(
            estimate_inverse_crf(&stack, 50.0, 64).unwrap_err(),
            Error::DegenerateStack
        );
    }

    #[test]
    fn pava_matches_known_projection() {
        let mut v = [1.0, 3.0, 2.0, 4.0, 0.0];
        isotonic_non_decreasing(&mut v);
        assert_eq!(v, [1.0, 2.25, 2.25, 2.25, 2.25]);
        let mut w = [0.0, 1.0, 2.0];
        isotonic_non_decreasing(&mut w);
        assert_eq!(w, [0.0, 1.0, 2.0]);
    }
}
