use alloc::vec;
use alloc::vec::Vec;

use crate::error::{domain, Error, Result};

/// Largest digital number of a 12-bit sensor.
pub const MAX_DN: u16 = 4095;
/// Number of distinct digital numbers.
pub const DN_LEVELS: usize = 4096;

/// A 12-bit raw frame stored in a 16-bit container.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RawImage {
    width: usize,
    height: usize,
    data: Vec<u16>,
    /// Exposure time in microseconds.
    pub exposure_us: f64,
    pub timestamp_ns: i64,
    pub frame_index: u64,
}

impl RawImage {
    pub fn new(width: usize, height: usize, data: Vec<u16>, exposure_us: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(domain("image must have non-zero dimensions"));
        }
        if data.len() != width * height {
            return Err(domain(alloc::format!(
                "pixel buffer holds {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(&bad) = data.iter().find(|&&v| v > MAX_DN) {
            return Err(domain(alloc::format!("digital number {bad} exceeds {MAX_DN}")));
        }
        check_exposure(exposure_us)?;
        Ok(Self {
            width,
            height,
            data,
            exposure_us,
            timestamp_ns: 0,
            frame_index: 0,
        })
    }

    pub fn filled(width: usize, height: usize, value: u16, exposure_us: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], exposure_us)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        exposure_us: f64,
        mut f: impl FnMut(usize, usize) -> u16,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data, exposure_us)
    }

    pub fn with_timing(mut self, timestamp_ns: i64, frame_index: u64) -> Self {
        self.timestamp_ns = timestamp_ns;
        self.frame_index = frame_index;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.data.len()
    }

    /// Row-major digital numbers.
    pub fn data(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    /// Pixel values scaled to `[0, 1]`.
    pub fn normalized(&self) -> Vec<f64> {
        let scale = 1.0 / f64::from(MAX_DN);
        self.data.iter().map(|&v| f64::from(v) * scale).collect()
    }

    pub(crate) fn same_size(&self, other: &RawImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Replaces the pixel buffer, keeping metadata. Values are trusted to be
    /// in range; used by the emulator whose lookup tables never exceed 4095.
    pub(crate) fn map_pixels(&self, lut: &[u16; DN_LEVELS], exposure_us: f64) -> RawImage {
        RawImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| lut[v as usize]).collect(),
            exposure_us,
            timestamp_ns: self.timestamp_ns,
            frame_index: self.frame_index,
        }
    }
}

pub(crate) fn check_exposure(exposure_us: f64) -> Result<()> {
    if !(exposure_us > 0.0) || !exposure_us.is_finite() {
        return Err(domain(alloc::format!(
            "exposure must be positive and finite, got {exposure_us}"
        )));
    }
    Ok(())
}

/// Relative scene radiance, optionally with a per-pixel vignetting field.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    vignette: Option<Vec<f64>>,
}

impl RadianceImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(domain("radiance buffer does not match its dimensions"));
        }
        if data.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(domain("radiance values must be finite and non-negative"));
        }
        Ok(Self {
            width,
            height,
            data,
            vignette: None,
        })
    }

    pub fn with_vignette(mut self, vignette: Vec<f64>) -> Result<Self> {
        if vignette.len() != self.data.len() {
            return Err(domain("vignette field does not match the image size"));
        }
        if vignette.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(domain("vignette values must lie in (0, 1]"));
        }
        self.vignette = Some(vignette);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn vignette(&self) -> Option<&[f64]> {
        self.vignette.as_deref()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample with edge clamping. `x`, `y` in pixel units.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        #[allow(unused_imports)]
        use num_traits::Float;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.max(0.0).min(max_x);
        let y = y.max(0.0).min(max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}
