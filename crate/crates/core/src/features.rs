//! Corner detection, patch matching and the feature-based trajectory
//! success metrics.
//!
//! The detector is a minimum-eigenvalue (Shi-Tomasi) response on the
//! structure tensor. Matching compares 11×11 zero-mean normalized patches
//! with mutual-best pairing and a ratio test.
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{domain, Result};
use crate::image::RawImage;

/// Smallest image side accepted by the detector.
pub const MIN_IMAGE_SIDE: usize = 32;
/// Cells per side of the uniformity grid.
pub const UNIFORMITY_GRID: usize = 20;
/// Minimum matches needed by the motion estimator.
pub const MIN_MOTION_MATCHES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FeatureConfig {
    pub max_keypoints: usize,
    pub nms_radius: f64,
    /// Responses below `quality · max response` are dropped.
    pub quality: f64,
    /// Patch half-size; the patch side is `2·half + 1`.
    pub patch_half: usize,
    pub min_correlation: f64,
    /// Second-best correlation must not exceed `ratio · best`.
    pub ratio: f64,
    pub border_px: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            max_keypoints: 500,
            nms_radius: 5.0,
            quality: 0.01,
            patch_half: 5,
            min_correlation: 0.8,
            ratio: 0.9,
            border_px: 5,
        }
    }
}

/// Minimum eigenvalue of the Gaussian-windowed structure tensor at every
/// pixel, on intensities normalized to `[0, 1]`.
pub fn corner_response(img: &RawImage) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let v = img.normalized();
    let at = |x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        v[yc * w + xc]
    };
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let sxx = blur3(&ixx, w, h);
    let syy = blur3(&iyy, w, h);
    let sxy = blur3(&ixy, w, h);
    (0..w * h)
        .map(|i| {
            let half_tr = 0.5 * (sxx[i] + syy[i]);
            let d = 0.5 * (sxx[i] - syy[i]);
            (half_tr - (d * d + sxy[i] * sxy[i]).sqrt()).max(0.0)
        })
        .collect()
}

/// Separable `[1, 2, 1] / 4` smoothing with edge replication.
fn blur3(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let l = row[x.saturating_sub(1)];
            let r = row[(x + 1).min(w - 1)];
            tmp[y * w + x] = 0.25 * (l + 2.0 * row[x] + r);
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let up = y.saturating_sub(1);
        let dn = (y + 1).min(h - 1);
        for x in 0..w {
            out[y * w + x] = 0.25 * (tmp[up * w + x] + 2.0 * tmp[y * w + x] + tmp[dn * w + x]);
        }
    }
    out
}

fn parabolic_offset(l: f64, c: f64, r: f64) -> f64 {
    let den = l - 2.0 * c + r;
    if den < 0.0 {
        (0.5 * (l - r) / den).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Detects up to `max_count` corners with the default configuration.
pub fn detect_keypoints(img: &RawImage, max_count: usize) -> Result<Vec<Keypoint>> {
    let config = FeatureConfig {
        max_keypoints: max_count,
        ..FeatureConfig::default()
    };
    detect_keypoints_with(img, &config)
}

/// Detects corners, ordered by score descending, then `y`, then `x`.
pub fn detect_keypoints_with(img: &RawImage, config: &FeatureConfig) -> Result<Vec<Keypoint>> {
    let (w, h) = (img.width(), img.height());
    if w < MIN_IMAGE_SIDE || h < MIN_IMAGE_SIDE {
        return Err(domain(format!(
            "detector needs at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE} pixels, got {w}x{h}"
        )));
    }
    let resp = corner_response(img);
    let peak = resp.iter().copied().fold(0.0, f64::max);
    if !(peak > 1e-12) || config.max_keypoints == 0 {
        return Ok(Vec::new());
    }
    let floor = config.quality * peak;

    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = resp[y * w + x];
            if c <= floor || c <= 1e-12 {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in 0..3 {
                for dx in 0..3 {
                    if resp[(y + dy - 1) * w + (x + dx - 1)] > c {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((x, y, c));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));

    let radius = config.nms_radius.max(0.0);
    let r2 = radius * radius;
    let reach = radius.floor() as isize;
    let mut taken = vec![false; w * h];
    let mut out = Vec::new();
    for (x, y, score) in candidates {
        if taken[y * w + x] {
            continue;
        }
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if (dx * dx + dy * dy) as f64 > r2 {
                    continue;
                }
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    taken[ny as usize * w + nx as usize] = true;
                }
            }
        }
        let ox = parabolic_offset(resp[y * w + x - 1], score, resp[y * w + x + 1]);
        let oy = parabolic_offset(resp[(y - 1) * w + x], score, resp[(y + 1) * w + x]);
        out.push(Keypoint {
            x: x as f64 + ox,
            y: y as f64 + oy,
            score,
        });
        if out.len() == config.max_keypoints {
            break;
        }
    }
    Ok(out)
}

/// Percentage of the 20×20 grid cells holding at least one keypoint.
pub fn grid_uniformity(keypoints: &[Keypoint], width: usize, height: usize) -> f64 {
    if width == 0 || height == 0 {
        return 0.0;
    }
    let g = UNIFORMITY_GRID;
    let mut occupied = [false; UNIFORMITY_GRID * UNIFORMITY_GRID];
    for kp in keypoints {
        if !(kp.x >= 0.0 && kp.y >= 0.0 && kp.x < width as f64 && kp.y < height as f64) {
            continue;
        }
        let cx = ((kp.x * g as f64 / width as f64) as usize).min(g - 1);
        let cy = ((kp.y * g as f64 / height as f64) as usize).min(g - 1);
        occupied[cy * g + cx] = true;
    }
    let n = occupied.iter().filter(|o| **o).count();
    100.0 * n as f64 / (g * g) as f64
}

/// One-to-one correspondences between two keypoint lists.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatchSet {
    /// `(index into A, index into B)`, sorted by the A index.
    pub pairs: Vec<(usize, usize)>,
    /// Patch correlation of each pair.
    pub correlations: Vec<f64>,
}

impl MatchSet {
    pub fn count(&self) -> usize {
        self.pairs.len()
    }
}

/// Zero-mean, unit-norm patch around the rounded keypoint position, or
/// `None` near the border or on a flat patch.
fn descriptor(img: &RawImage, kp: &Keypoint, config: &FeatureConfig) -> Option<Vec<f32>> {
    let margin = config.border_px.max(config.patch_half) as f64;
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (xr, yr) = (kp.x.round(), kp.y.round());
    if !(xr >= margin && yr >= margin && xr <= w - 1.0 - margin && yr <= h - 1.0 - margin) {
        return None;
    }
    let (xc, yc) = (xr as usize, yr as usize);
    let half = config.patch_half;
    let mut patch = Vec::with_capacity((2 * half + 1) * (2 * half + 1));
    for y in yc - half..=yc + half {
        for x in xc - half..=xc + half {
            patch.push(f64::from(img.get(x, y)));
        }
    }
    let mean = patch.iter().sum::<f64>() / patch.len() as f64;
    let norm = patch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
    if !(norm > 1e-9) {
        return None;
    }
    Some(patch.iter().map(|v| ((v - mean) / norm) as f32).collect())
}

/// Matches with the default configuration.
pub fn match_features(img_a: &RawImage, kps_a: &[Keypoint], img_b: &RawImage, kps_b: &[Keypoint]) -> MatchSet {
    match_features_with(img_a, kps_a, img_b, kps_b, &FeatureConfig::default())
}

pub fn match_features_with(
    img_a: &RawImage,
    kps_a: &[Keypoint],
    img_b: &RawImage,
    kps_b: &[Keypoint],
    config: &FeatureConfig,
) -> MatchSet {
    let da: Vec<Option<Vec<f32>>> = kps_a.iter().map(|k| descriptor(img_a, k, config)).collect();
    let db: Vec<Option<Vec<f32>>> = kps_b.iter().map(|k| descriptor(img_b, k, config)).collect();
    let (na, nb) = (da.len(), db.len());
    let mut corr = vec![f64::NEG_INFINITY; na * nb];
    for (i, a) in da.iter().enumerate() {
        let Some(a) = a else { continue };
        for (j, b) in db.iter().enumerate() {
            let Some(b) = b else { continue };
            let dot: f32 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            corr[i * nb + j] = f64::from(dot);
        }
    }
    // Best B for each A (with runner-up), and best A for each B.
    let mut best_a_for_b = vec![(usize::MAX, f64::NEG_INFINITY); nb];
    for i in 0..na {
        for j in 0..nb {
            let c = corr[i * nb + j];
            if c > best_a_for_b[j].1 {
                best_a_for_b[j] = (i, c);
            }
        }
    }
    let mut out = MatchSet::default();
    for i in 0..na {
        let (mut best_j, mut best, mut second) = (usize::MAX, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for j in 0..nb {
            let c = corr[i * nb + j];
            if c > best {
                second = best;
                best = c;
                best_j = j;
            } else if c > second {
                second = c;
            }
        }
        if best_j == usize::MAX || best < config.min_correlation {
            continue;
        }
        if best_a_for_b[best_j].0 != i {
            continue;
        }
        if second.is_finite() && second > config.ratio * best {
            continue;
        }
        out.pairs.push((i, best_j));
        out.correlations.push(best);
    }
    out
}

/// True iff every frame pair has at least `tau` matches. An empty list never
/// succeeds.
pub fn sequence_success(match_counts: &[usize], tau: usize) -> bool {
    match match_counts.iter().min() {
        Some(&m) => m >= tau,
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SuccessCurve {
    pub thresholds: Vec<usize>,
    /// Fraction in `[0, 1]` of trajectories succeeding at each threshold.
    pub success_rate: Vec<f64>,
}

impl SuccessCurve {
    pub fn rate_at(&self, tau: usize) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| t == tau)
            .map(|i| self.success_rate[i])
    }
}

/// Success rate per threshold over a set of trajectories, each given as its
/// per-pair match counts.
pub fn success_curve(trajectories: &[Vec<usize>], taus: &[usize]) -> Result<SuccessCurve> {
    if trajectories.is_empty() {
        return Err(domain("success curve needs at least one trajectory"));
    }
    let mins: Vec<Option<usize>> = trajectories.iter().map(|t| t.iter().copied().min()).collect();
    let n = trajectories.len() as f64;
    let success_rate = taus
        .iter()
        .map(|&tau| mins.iter().filter(|m| m.is_some_and(|m| m >= tau)).count() as f64 / n)
        .collect();
    Ok(SuccessCurve {
        thresholds: taus.to_vec(),
        success_rate,
    })
}
