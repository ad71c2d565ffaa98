//! Procedural HDR scenes and bracketed capture simulation.
//!
//! A [`Scene`] is a radiance canvas (seeded multi-octave value noise shaped
//! into a dark/bright bimodal distribution) plus an optional terrain height
//! field. A downward-looking pinhole camera at height `focal_px` above the
//! canvas plane sees a 1:1 crop when the relief is zero; non-zero relief
//! brings terrain closer to the camera and produces parallax.
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{UnitQuaternion, Vector3};
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::emulation::{BracketCycle, DEFAULT_LADDER_US};
use crate::error::{domain, Result};
use crate::image::{RadianceImage, RawImage, MAX_DN};
use crate::photometry::ResponseCurve;
use crate::trajectory::{PoseSE3, Trajectory};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Ratio between the brightest and darkest radiance on the canvas.
    pub dynamic_range: f64,
    /// Brightest radiance, in relative exposure per second (1.0 saturates).
    pub peak_radiance: f64,
    pub octaves: u32,
    /// Lattice cells across the canvas width at the coarsest octave.
    pub base_cells: f64,
    /// Amplitude ratio between consecutive octaves.
    pub persistence: f64,
    /// 0 keeps the raw noise distribution, 1 pushes it to two modes.
    pub bimodality: f64,
    /// Amplitude of fine texture added after tone shaping, as a fraction of
    /// the log dynamic range.
    pub detail: f64,
    /// Lattice cells across the canvas width for the fine texture.
    pub detail_cells: f64,
    /// Peak terrain height as a fraction of the camera height.
    pub relief: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            dynamic_range: 4096.0,
            peak_radiance: 400.0,
            octaves: 6,
            base_cells: 5.0,
            persistence: 0.5,
            bimodality: 0.7,
            detail: 0.2,
            detail_cells: 200.0,
            relief: 0.25,
            seed: 1,
        }
    }
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(domain("scene canvas must be at least 2x2"));
        }
        if !(self.dynamic_range > 1.0) {
            return Err(domain("dynamic range must exceed 1"));
        }
        if !(self.peak_radiance > 0.0) {
            return Err(domain("peak radiance must be positive"));
        }
        if self.octaves == 0 || !(self.base_cells > 0.0) {
            return Err(domain("noise needs at least one octave and a positive frequency"));
        }
        if !(self.persistence > 0.0 && self.persistence <= 1.0) {
            return Err(domain("persistence must lie in (0, 1]"));
        }
        if !(self.detail >= 0.0) || !(self.detail_cells > 0.0) {
            return Err(domain(
                "detail texture needs a non-negative amplitude and positive frequency",
            ));
        }
        if !(0.0..=1.0).contains(&self.bimodality) {
            return Err(domain("bimodality must lie in [0, 1]"));
        }
        if !(0.0..0.9).contains(&self.relief) {
            return Err(domain("relief must lie in [0, 0.9)"));
        }
        Ok(())
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic stream seed for `(base, index)`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix(splitmix(base) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

fn lattice(seed: u64, octave: u32, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((octave as u64) << 40 ^ (ix as u64) << 20 ^ (iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Multi-octave value noise in roughly `[0, 1]`.
/// Canvas pixels per terrain noise cell.
const RELIEF_CELL_PX: f64 = 96.0;

fn value_noise(seed: u64, octaves: u32, base_cells: f64, persistence: f64, width: usize, height: usize) -> Vec<f64> {
    let mut out = alloc::vec![0.0; width * height];
    let mut amplitude = 1.0;
    let mut norm = 0.0;
    for o in 0..octaves {
        let cells = base_cells * (1u64 << o) as f64;
        let scale = cells / width as f64;
        for y in 0..height {
            for x in 0..width {
                let fx = x as f64 * scale;
                let fy = y as f64 * scale;
                let (ix, iy) = (fx.floor() as i64, fy.floor() as i64);
                let (tx, ty) = (smoothstep(fx - ix as f64), smoothstep(fy - iy as f64));
                let v00 = lattice(seed, o, ix, iy);
                let v10 = lattice(seed, o, ix + 1, iy);
                let v01 = lattice(seed, o, ix, iy + 1);
                let v11 = lattice(seed, o, ix + 1, iy + 1);
                let top = v00 + (v10 - v00) * tx;
                let bottom = v01 + (v11 - v01) * tx;
                out[y * width + x] += amplitude * (top + (bottom - top) * ty);
            }
        }
        norm += amplitude;
        amplitude *= persistence;
    }
    for v in &mut out {
        *v /= norm;
    }
    out
}

fn rescale_unit(values: &mut [f64]) {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    for v in values {
        *v = (*v - lo) / span;
    }
}

/// Seeded radiance canvas spanning exactly `dynamic_range`.
pub fn generate_radiance_canvas(spec: &SceneSpec) -> Result<RadianceImage> {
    spec.validate()?;
    let mut n = value_noise(
        spec.seed,
        spec.octaves,
        spec.base_cells,
        spec.persistence,
        spec.width,
        spec.height,
    );
    rescale_unit(&mut n);
    let fine = if spec.detail > 0.0 {
        value_noise(
            derive_seed(spec.seed, 0xDE7A),
            2,
            spec.detail_cells,
            0.5,
            spec.width,
            spec.height,
        )
    } else {
        alloc::vec![0.5; n.len()]
    };
    let k = 12.0;
    let sig = |t: f64| 1.0 / (1.0 + (-k * (t - 0.5)).exp());
    let (s0, s1) = (sig(0.0), sig(1.0));
    let log_peak = spec.peak_radiance.ln();
    let log_range = spec.dynamic_range.ln();
    let mut shaped: Vec<f64> = n
        .iter()
        .zip(&fine)
        .map(|(&t, &d)| {
            let sharp = (sig(t) - s0) / (s1 - s0);
            (1.0 - spec.bimodality) * t + spec.bimodality * sharp + spec.detail * (d - 0.5)
        })
        .collect();
    rescale_unit(&mut shaped);
    let data = shaped
        .iter()
        .map(|&s| (log_peak - (1.0 - s) * log_range).exp())
        .collect();
    RadianceImage::new(spec.width, spec.height, data)
}

/// Radiance canvas plus terrain height (fraction of camera height).
#[derive(Debug, Clone)]
pub struct Scene {
    pub radiance: RadianceImage,
    heights: Option<Vec<f64>>,
    relief: f64,
}

impl Scene {
    pub fn generate(spec: &SceneSpec) -> Result<Self> {
        let radiance = generate_radiance_canvas(spec)?;
        let heights = if spec.relief > 0.0 {
            // Hills a few hundred pixels across, so that a single frame sees
            // terrain that is not close to one plane.
            let cells = (spec.width as f64 / RELIEF_CELL_PX).max(1.0);
            let mut h = value_noise(derive_seed(spec.seed, 0x7E44), 3, cells, 0.5, spec.width, spec.height);
            rescale_unit(&mut h);
            h.iter_mut().for_each(|v| *v *= spec.relief);
            Some(h)
        } else {
            None
        };
        let relief = if heights.is_some() { spec.relief } else { 0.0 };
        Ok(Self {
            radiance,
            heights,
            relief,
        })
    }

    /// A flat scene with the given radiance canvas.
    pub fn flat(radiance: RadianceImage) -> Self {
        Self {
            radiance,
            heights: None,
            relief: 0.0,
        }
    }

    fn height_at(&self, x: f64, y: f64) -> f64 {
        match &self.heights {
            None => 0.0,
            Some(h) => {
                let (w, ht) = (self.radiance.width(), self.radiance.height());
                let x = x.clamp(0.0, (w - 1) as f64);
                let y = y.clamp(0.0, (ht - 1) as f64);
                let (x0, y0) = (x.floor() as usize, y.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(ht - 1));
                let (fx, fy) = (x - x0 as f64, y - y0 as f64);
                let top = h[y0 * w + x0] + (h[y0 * w + x1] - h[y0 * w + x0]) * fx;
                let bottom = h[y1 * w + x0] + (h[y1 * w + x1] - h[y1 * w + x0]) * fx;
                top + (bottom - top) * fy
            }
        }
    }

    /// Canvas point seen along the ray through `(cx, cy) + (du, dv)·s`, where
    /// `s` is depth as a fraction of camera height. Marches from the highest
    /// possible terrain down to the first surface crossing, then bisects.
    fn ray_hit(&self, cx: f64, cy: f64, du: f64, dv: f64) -> (f64, f64) {
        if self.heights.is_none() {
            return (cx + du, cy + dv);
        }
        let gap = |s: f64| s - 1.0 + self.height_at(cx + du * s, cy + dv * s);
        let reach = du.hypot(dv);
        let steps = ((reach * self.relief / 8.0).ceil() as usize).max(1);
        let ds = self.relief / steps as f64;
        let mut lo = 1.0 - self.relief;
        let mut hi = 1.0;
        for k in 1..=steps {
            let s = 1.0 - self.relief + ds * k as f64;
            if gap(s) >= 0.0 {
                hi = s;
                break;
            }
            lo = s;
        }
        for _ in 0..5 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        (cx + du * s, cy + dv * s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureSpec {
    pub ladder_us: Vec<f64>,
    /// Ground-truth response used for rendering.
    pub crf: ResponseCurve,
    /// Read-noise standard deviation, expressed in DN of a linear response.
    pub read_noise_dn: f64,
    /// Shot-noise variance per DN of signal (0 disables it).
    pub shot_noise: f64,
    /// Strength of the cos⁴ vignetting falloff in `[0, 1)`.
    pub vignette_strength: f64,
    pub frame_width: usize,
    pub frame_height: usize,
    /// Focal length in pixels; also the camera height in canvas pixels.
    pub focal_px: f64,
    /// Camera center on the canvas for every cycle.
    pub path: Vec<(f64, f64)>,
    /// Camera motion between consecutive brackets of one cycle, pixels.
    pub drift_px_per_bracket: f64,
    pub frame_rate_hz: f64,
    pub meters_per_px: f64,
    pub noise_seed: u64,
}

impl Default for CaptureSpec {
    fn default() -> Self {
        Self {
            ladder_us: DEFAULT_LADDER_US.to_vec(),
            crf: ResponseCurve::linear(),
            read_noise_dn: 2.0,
            shot_noise: 0.0,
            vignette_strength: 0.3,
            frame_width: 160,
            frame_height: 120,
            focal_px: 160.0,
            path: Vec::new(),
            drift_px_per_bracket: 2.0,
            frame_rate_hz: 22.0,
            meters_per_px: 0.01,
            noise_seed: 7,
        }
    }
}

impl CaptureSpec {
    fn validate(&self) -> Result<()> {
        if self.ladder_us.is_empty()
            || self.ladder_us.iter().any(|t| !(*t > 0.0))
            || self.ladder_us.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(domain("ladder must be non-empty, positive and strictly increasing"));
        }
        if !(self.read_noise_dn >= 0.0) || !(self.shot_noise >= 0.0) {
            return Err(domain("noise parameters must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.vignette_strength) {
            return Err(domain("vignette strength must lie in [0, 1)"));
        }
        if self.frame_width < 2 || self.frame_height < 2 || !(self.focal_px > 0.0) {
            return Err(domain("frame size and focal length must be positive"));
        }
        if !(self.frame_rate_hz > 0.0) || !(self.meters_per_px > 0.0) {
            return Err(domain("frame rate and metric scale must be positive"));
        }
        Ok(())
    }

    /// Vignetting attenuation at frame pixel `(u, v)`.
    pub fn vignette(&self, u: usize, v: usize) -> f64 {
        if self.vignette_strength == 0.0 {
            return 1.0;
        }
        let du = u as f64 - 0.5 * (self.frame_width - 1) as f64;
        let dv = v as f64 - 0.5 * (self.frame_height - 1) as f64;
        let tan2 = (du * du + dv * dv) / (self.focal_px * self.focal_px);
        let cos2 = 1.0 / (1.0 + tan2);
        1.0 - self.vignette_strength * (1.0 - cos2 * cos2)
    }

    /// Timestamp of bracket `k` of cycle `c`.
    pub fn timestamp_ns(&self, cycle: usize, bracket: usize) -> i64 {
        let frame = (cycle * self.ladder_us.len() + bracket) as f64;
        (frame * 1e9 / self.frame_rate_hz).round() as i64
    }

    /// An elliptical loop around the canvas center, advancing `step_px` per
    /// cycle. Stays inside a canvas of the given size for any cycle count.
    pub fn loop_path(
        canvas_width: usize,
        canvas_height: usize,
        frame_width: usize,
        frame_height: usize,
        cycles: usize,
        step_px: f64,
        phase: f64,
    ) -> Vec<(f64, f64)> {
        let cx = 0.5 * (canvas_width - 1) as f64;
        let cy = 0.5 * (canvas_height - 1) as f64;
        let margin = 8.0;
        let rx = (cx - 0.5 * frame_width as f64 - margin).max(1.0) * 0.8;
        let ry = (cy - 0.5 * frame_height as f64 - margin).max(1.0) * 0.8;
        let mean_r = 0.5 * (rx + ry);
        let mut angle = phase;
        (0..cycles)
            .map(|_| {
                let p = (cx + rx * angle.cos(), cy + ry * angle.sin());
                angle += step_px / mean_r;
                p
            })
            .collect()
    }
}

/// Camera center on the canvas for a rendered frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub center_x: f64,
    pub center_y: f64,
}

fn check_view(scene: &Scene, view: &View, capture: &CaptureSpec) -> Result<()> {
    let hw = 0.5 * (capture.frame_width - 1) as f64;
    let hh = 0.5 * (capture.frame_height - 1) as f64;
    let max_x = (scene.radiance.width() - 1) as f64;
    let max_y = (scene.radiance.height() - 1) as f64;
    let inside = view.center_x - hw >= 0.0
        && view.center_x + hw <= max_x
        && view.center_y - hh >= 0.0
        && view.center_y + hh <= max_y;
    if !inside || !view.center_x.is_finite() || !view.center_y.is_finite() {
        return Err(domain(format!(
            "view centered at ({:.1}, {:.1}) leaves the {}x{} canvas",
            view.center_x,
            view.center_y,
            scene.radiance.width(),
            scene.radiance.height()
        )));
    }
    Ok(())
}

/// Forward image formation `I = f(Δt·V·E + n)` for one frame.
pub fn render_frame(
    scene: &Scene,
    view: &View,
    exposure_us: f64,
    capture: &CaptureSpec,
    noise_seed: u64,
) -> Result<RawImage> {
    capture.validate()?;
    crate::image::check_exposure(exposure_us)?;
    check_view(scene, view, capture)?;
    let (w, h) = (capture.frame_width, capture.frame_height);
    let dt = exposure_us * 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let top = f64::from(MAX_DN);
    let read_sigma = capture.read_noise_dn / top;
    let noisy = capture.read_noise_dn > 0.0 || capture.shot_noise > 0.0;
    let hw = 0.5 * (w - 1) as f64;
    let hh = 0.5 * (h - 1) as f64;
    let mut data = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let (du, dv) = (u as f64 - hw, v as f64 - hh);
            // Ground point seen by this pixel: X = C + d·(1 − h(X)).
            let (gx, gy) = scene.ray_hit(view.center_x, view.center_y, du, dv);
            let clean = dt * capture.vignette(u, v) * scene.radiance.sample(gx, gy);
            let mut x = clean;
            if noisy {
                let var = read_sigma * read_sigma + capture.shot_noise * clean.min(1.0) / top;
                let z: f64 = StandardNormal.sample(&mut rng);
                x += var.sqrt() * z;
            }
            data.push(capture.crf.quantize(x.max(0.0)));
        }
    }
    RawImage::new(w, h, data, exposure_us)
}

/// Frame record of a rendered sequence.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameRecord {
    pub frame_index: u64,
    pub cycle_index: u64,
    pub exposure_us: f64,
    pub timestamp_ns: i64,
    pub filename: alloc::string::String,
}

/// Directory layout descriptor: frame records plus the names of the response
/// and ground-truth files, relative to the sequence directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub frames: Vec<FrameRecord>,
    pub crf_file: alloc::string::String,
    pub groundtruth_file: alloc::string::String,
}

impl SequenceManifest {
    pub fn from_cycles(cycles: &[BracketCycle]) -> Self {
        let frames = cycles
            .iter()
            .flat_map(|c| {
                c.images().iter().map(move |img| FrameRecord {
                    frame_index: img.frame_index,
                    cycle_index: c.cycle_index,
                    exposure_us: img.exposure_us,
                    timestamp_ns: img.timestamp_ns,
                    filename: format!("images/{:06}.pgm", img.frame_index),
                })
            })
            .collect();
        Self {
            frames,
            crf_file: "crf.csv".into(),
            groundtruth_file: "groundtruth.txt".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderedSequence {
    pub cycles: Vec<BracketCycle>,
    pub groundtruth: Trajectory,
    pub manifest: SequenceManifest,
}

fn direction(path: &[(f64, f64)], c: usize) -> (f64, f64) {
    let (a, b) = if c + 1 < path.len() {
        (path[c], path[c + 1])
    } else if c > 0 {
        (path[c - 1], path[c])
    } else {
        return (1.0, 0.0);
    };
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let n = (dx * dx + dy * dy).sqrt();
    if n > 0.0 {
        (dx / n, dy / n)
    } else {
        (1.0, 0.0)
    }
}

/// Renders `cycles` bracketing cycles along `capture.path`.
///
/// Bracket `k` of a cycle is displaced by `k · drift` pixels along the
/// direction of travel. The ground-truth trajectory holds one pose per cycle
/// at the first bracket's timestamp, with the camera center mapped to meters
/// (x right, y down, z along the optical axis).
pub fn render_sequence(scene: &Scene, capture: &CaptureSpec, cycles: usize) -> Result<RenderedSequence> {
    capture.validate()?;
    if cycles < 2 {
        return Err(domain("a sequence needs at least two cycles"));
    }
    if capture.path.len() < cycles {
        return Err(domain(format!(
            "camera path has {} positions for {} cycles",
            capture.path.len(),
            cycles
        )));
    }
    let path = &capture.path[..cycles];
    let mut out = Vec::with_capacity(cycles);
    let mut poses = Vec::with_capacity(cycles);
    let origin = path[0];
    for (c, &(cx, cy)) in path.iter().enumerate() {
        let (dx, dy) = direction(path, c);
        let mut images = Vec::with_capacity(capture.ladder_us.len());
        for (k, &t) in capture.ladder_us.iter().enumerate() {
            let offset = k as f64 * capture.drift_px_per_bracket;
            let view = View {
                center_x: cx + dx * offset,
                center_y: cy + dy * offset,
            };
            let frame_index = (c * capture.ladder_us.len() + k) as u64;
            let seed = derive_seed(capture.noise_seed, frame_index);
            let img =
                render_frame(scene, &view, t, capture, seed)?.with_timing(capture.timestamp_ns(c, k), frame_index);
            images.push(img);
        }
        out.push(BracketCycle::with_ladder(images, c as u64, &capture.ladder_us)?);
        poses.push(PoseSE3::new(
            UnitQuaternion::identity(),
            Vector3::new(cx - origin.0, cy - origin.1, 0.0) * capture.meters_per_px,
            capture.timestamp_ns(c, 0),
        ));
    }
    let groundtruth = Trajectory::new(poses)?;
    let manifest = SequenceManifest::from_cycles(&out);
    Ok(RenderedSequence {
        cycles: out,
        groundtruth,
        manifest,
    })
}

/// Renders one frame per exposure from a fixed view with fresh noise per
/// frame (stream `i` of `capture.noise_seed`).
pub fn render_exposure_sweep(
    scene: &Scene,
    capture: &CaptureSpec,
    view: &View,
    exposures_us: &[f64],
) -> Result<Vec<RawImage>> {
    exposures_us
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let seed = derive_seed(capture.noise_seed ^ 0x5EE9, i as u64);
            Ok(render_frame(scene, view, t, capture, seed)?.with_timing(0, i as u64))
        })
        .collect()
}

/// `count` exposures log-spaced over `[lo_us, hi_us]`.
pub fn log_spaced(lo_us: f64, hi_us: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return alloc::vec![lo_us];
    }
    let (a, b) = (lo_us.ln(), hi_us.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulation::noise_floor;
    use alloc::vec;

    fn small_spec(seed: u64) -> SceneSpec {
        SceneSpec {
            width: 200,
            height: 150,
            seed,
            ..SceneSpec::default()
        }
    }

    fn clean_capture() -> CaptureSpec {
        CaptureSpec {
            read_noise_dn: 0.0,
            vignette_strength: 0.0,
            drift_px_per_bracket: 0.0,
            frame_width: 16,
            frame_height: 12,
            focal_px: 16.0,
            ..CaptureSpec::default()
        }
    }

    fn uniform_scene(value: f64) -> Scene {
        Scene::flat(RadianceImage::new(40, 30, vec![value; 1200]).unwrap())
    }

    const CENTER: View = View {
        center_x: 19.5,
        center_y: 14.5,
    };

    #[test]
    fn canvas_is_deterministic() {
        let a = generate_radiance_canvas(&small_spec(3)).unwrap();
        let b = generate_radiance_canvas(&small_spec(3)).unwrap();
        let c = generate_radiance_canvas(&small_spec(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn canvas_spans_dynamic_range() {
        let a = generate_radiance_canvas(&small_spec(5)).unwrap();
        let max = a.data().iter().copied().fold(0.0, f64::max);
        let min = a.data().iter().copied().fold(f64::INFINITY, f64::min);
        let ratio = max / min;
        assert!((2048.0..=8192.0).contains(&ratio), "{ratio}");
        assert!((max - 400.0).abs() < 1e-9);
    }

    fn modes(spec: &SceneSpec) -> usize {
        let canvas = generate_radiance_canvas(spec).unwrap();
        let lo = (spec.peak_radiance / spec.dynamic_range).ln();
        let span = spec.dynamic_range.ln();
        let mut hist = [0usize; 10];
        for v in canvas.data() {
            let b = (((v.ln() - lo) / span * 10.0) as usize).min(9);
            hist[b] += 1;
        }
        let total = canvas.data().len();
        (0..10)
            .filter(|&i| {
                let left = if i == 0 { 0 } else { hist[i - 1] };
                let right = if i == 9 { 0 } else { hist[i + 1] };
                hist[i] > left && hist[i] >= right && hist[i] * 50 > total
            })
            .count()
    }

    #[test]
    fn bimodality_shapes_histogram() {
        let flat = SceneSpec {
            bimodality: 0.0,
            detail: 0.0,
            ..small_spec(11)
        };
        assert_eq!(modes(&flat), 1);
        let split = SceneSpec {
            bimodality: 1.0,
            detail: 0.0,
            ..small_spec(11)
        };
        assert_eq!(modes(&split), 2);
    }

    #[test]
    fn render_closed_forms() {
        let cap = clean_capture();
        let t = 4000.0;
        let e = 0.5 / (t * 1e-6);
        let img = render_frame(&uniform_scene(e), &CENTER, t, &cap, 0).unwrap();
        assert!(img.data().iter().all(|&v| v.abs_diff(2047) <= 1));
        let img = render_frame(&uniform_scene(2.0 * e), &CENTER, t, &cap, 0).unwrap();
        assert!(img.data().iter().all(|&v| v == MAX_DN));

        let scene = uniform_scene(0.15 / (t * 1e-6));
        let a = render_frame(&scene, &CENTER, t, &cap, 0).unwrap();
        let b = render_frame(&scene, &CENTER, 2.0 * t, &cap, 0).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((2 * x).abs_diff(*y) <= 1);
        }
    }

    #[test]
    fn view_must_stay_on_canvas() {
        let cap = clean_capture();
        let off = View {
            center_x: 2.0,
            center_y: 14.5,
        };
        assert!(render_frame(&uniform_scene(1.0), &off, 1000.0, &cap, 0).is_err());
    }

    #[test]
    fn sequence_layout() {
        let spec = small_spec(2);
        let scene = Scene::generate(&spec).unwrap();
        let mut cap = CaptureSpec {
            frame_width: 32,
            frame_height: 24,
            focal_px: 32.0,
            ..CaptureSpec::default()
        };
        cap.path = CaptureSpec::loop_path(200, 150, 32, 24, 100, 3.0, 0.0);
        let seq = render_sequence(&scene, &cap, 100).unwrap();
        assert_eq!(seq.cycles.len(), 100);
        assert_eq!(seq.manifest.frames.len(), 600);
        let ts: Vec<i64> = seq.manifest.frames.iter().map(|f| f.timestamp_ns).collect();
        for (i, t) in ts.iter().enumerate() {
            assert_eq!(*t, (i as f64 * 1e9 / 22.0).round() as i64);
        }
        let arc: f64 = cap
            .path
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
            .sum();
        assert!((seq.groundtruth.path_length() - arc * cap.meters_per_px).abs() < 1e-9);
        assert!(render_sequence(&scene, &cap, 1).is_err());
    }

    #[test]
    fn sweep_properties() {
        let scene = Scene::generate(&small_spec(6)).unwrap();
        let cap = CaptureSpec {
            frame_width: 32,
            frame_height: 24,
            focal_px: 32.0,
            ..clean_capture()
        };
        let view = View {
            center_x: 99.5,
            center_y: 74.5,
        };
        let exposures = log_spaced(20.0, 50_000.0, 1000);
        let sweep = render_exposure_sweep(&scene, &cap, &view, &exposures).unwrap();
        assert_eq!(sweep.len(), 1000);
        let means: Vec<f64> = sweep
            .iter()
            .map(|i| i.data().iter().map(|&v| f64::from(v)).sum::<f64>())
            .collect();
        assert!(means.windows(2).all(|w| w[1] >= w[0]));

        let repeats = render_exposure_sweep(&scene, &cap, &view, &[2000.0; 25]).unwrap();
        assert!(repeats.windows(2).all(|w| w[0].data() == w[1].data()));
        let noisy = CaptureSpec {
            read_noise_dn: 3.0,
            ..cap
        };
        let repeats = render_exposure_sweep(&scene, &noisy, &view, &[2000.0; 25]).unwrap();
        assert!(noise_floor(&repeats).unwrap() > 0.0);
    }

    #[test]
    fn seeds_are_distinct_streams() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(9, 4), derive_seed(9, 4));
    }
}
