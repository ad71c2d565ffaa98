//! Image quality metrics used by the exposure controllers.
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::image::{RawImage, MAX_DN};

/// Mean DN as a fraction of full range.
pub fn mean_brightness(img: &RawImage) -> f64 {
    let sum: u64 = img.data().iter().map(|&v| u64::from(v)).sum();
    sum as f64 / img.pixel_count() as f64 / f64::from(MAX_DN)
}

/// Central-difference gradient magnitudes over interior pixels of a
/// normalized image. Images thinner than 3 pixels have no interior.
pub fn gradient_magnitudes(values: &[f64], width: usize, height: usize) -> Vec<f64> {
    if width < 3 || height < 3 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity((width - 2) * (height - 2));
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let gx = 0.5 * (values[y * width + x + 1] - values[y * width + x - 1]);
            let gy = 0.5 * (values[(y + 1) * width + x] - values[(y - 1) * width + x]);
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Per-pixel gradient weighting `log(λ(g−δ)+1) / log(λ+1)` for `g ≥ δ`.
#[inline]
pub fn shim_weight(g: f64, delta: f64, lambda: f64) -> f64 {
    if g < delta {
        0.0
    } else {
        (lambda * (g - delta) + 1.0).ln() / (lambda + 1.0).ln()
    }
}

fn mean_or_zero(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub(crate) fn shim_metric_normalized(values: &[f64], width: usize, height: usize, delta: f64, lambda: f64) -> f64 {
    let g = gradient_magnitudes(values, width, height);
    let sum: f64 = g.iter().map(|&m| shim_weight(m, delta, lambda)).sum();
    mean_or_zero(sum, g.len())
}

/// Mean shaped gradient magnitude over interior pixels.
pub fn shim_gradient_metric(img: &RawImage, delta: f64, lambda: f64) -> f64 {
    shim_metric_normalized(&img.normalized(), img.width(), img.height(), delta, lambda)
}

/// Logistic weight for the pixel at rank fraction `r`.
#[inline]
pub fn zhang_weight(r: f64, percentile_knee: f64, softness: f64) -> f64 {
    1.0 / (1.0 + (-softness * (r - percentile_knee)).exp())
}

/// Percentile-weighted mean gradient: magnitudes are sorted ascending and the
/// pixel at rank `i` of `n` (rank fraction `(i + 0.5) / n`) is weighted by a
/// logistic centered on `percentile_knee`.
pub fn zhang_metric(img: &RawImage, percentile_knee: f64, softness: f64) -> f64 {
    let mut g = gradient_magnitudes(&img.normalized(), img.width(), img.height());
    g.sort_by(|a, b| a.total_cmp(b));
    let n = g.len();
    let sum: f64 = g
        .iter()
        .enumerate()
        .map(|(i, &m)| zhang_weight((i as f64 + 0.5) / n as f64, percentile_knee, softness) * m)
        .sum();
    mean_or_zero(sum, n)
}

/// Shannon entropy of the 256-bin DN histogram, normalized to `[0, 1]`.
pub fn histogram_entropy(img: &RawImage) -> f64 {
    let mut hist = [0usize; 256];
    for &v in img.data() {
        hist[(v >> 4) as usize] += 1;
    }
    let n = img.pixel_count() as f64;
    let h: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    h / 256f64.ln()
}

/// Gradient/entropy mix: `α·shim(img, 0, 1000) + (1−α)·H`.
pub fn kim_metric(img: &RawImage, alpha_mix: f64) -> f64 {
    alpha_mix * shim_gradient_metric(img, 0.0, 1000.0) + (1.0 - alpha_mix) * histogram_entropy(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brightness_values() {
        assert_eq!(mean_brightness(&RawImage::filled(4, 4, 0, 1.0).unwrap()), 0.0);
        assert_eq!(mean_brightness(&RawImage::filled(4, 4, 4095, 1.0).unwrap()), 1.0);
        let b = mean_brightness(&RawImage::filled(4, 4, 2048, 1.0).unwrap());
        assert!((b - 2048.0 / 4095.0).abs() < 1e-15);
    }

    #[test]
    fn constant_images_score_zero() {
        let img = RawImage::filled(16, 16, 1234, 1.0).unwrap();
        assert_eq!(shim_gradient_metric(&img, 0.0, 1000.0), 0.0);
        assert_eq!(zhang_metric(&img, 0.5, 10.0), 0.0);
        assert_eq!(kim_metric(&img, 0.5), 0.0);
    }

    #[test]
    fn shim_weight_is_normalized_at_unit_gradient() {
        for lambda in [1.0, 10.0, 1000.0] {
            assert!((shim_weight(1.0, 0.0, lambda) - 1.0).abs() < 1e-15);
        }
        assert_eq!(shim_weight(0.05, 0.06, 1000.0), 0.0);
    }

    #[test]
    fn uniform_histogram_without_gradient() {
        // Two rows leave no interior pixels, so the gradient term is zero.
        let data: Vec<u16> = (0..512).map(|i| ((i % 256) * 16) as u16).collect();
        let img = RawImage::new(256, 2, data, 1.0).unwrap();
        assert!((histogram_entropy(&img) - 1.0).abs() < 1e-12);
        assert!((kim_metric(&img, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zhang_hard_knee_keeps_upper_half() {
        // Horizontal ramp: every interior gradient equals g0.
        let img = RawImage::from_fn(40, 40, 1.0, |x, _| (x * 50) as u16).unwrap();
        let g0 = 50.0 / 4095.0;
        let m = zhang_metric(&img, 0.5, 1e6);
        assert!((m - g0 / 2.0).abs() < 1e-9, "{m} vs {}", g0 / 2.0);
    }

    #[test]
    fn thin_images_have_no_gradient() {
        assert!(gradient_magnitudes(&[0.0; 10], 5, 2).is_empty());
    }
}
