//! Dense per-pixel frames: depth, confidence, color and foreground masks.
//!
//! All frames are row-major, `width × height`, and validated on construction.

use crate::error::{Error, Result};

/// 8-bit RGB triple.
pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];

fn check_dims(width: usize, height: usize, len: usize, what: &str) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "{what} dimensions must be positive, got {width}x{height}"
        )));
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::InvalidArgument(format!("{what} dimensions overflow")))?;
    if expected != len {
        return Err(Error::Shape(format!(
            "{what} of {width}x{height} needs {expected} samples, got {len}"
        )));
    }
    Ok(())
}

/// Metric depth in millimeters; `0.0` marks an invalid sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        check_dims(width, height, samples.len(), "depth frame")?;
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "depth sample {i} is {} (must be finite and >= 0)",
                samples[i]
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// Frame where every sample is `value`.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Frame construction without the per-sample scan, for producers that
    /// guarantee finite non-negative output.
    pub(crate) fn from_trusted(width: usize, height: usize, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), width * height);
        Self {
            width,
            height,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| **s != 0.0).count()
    }
}

/// Per-pixel sensor confidence: 0 = low, 1 = medium, 2 = high.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfidenceFrame {
    width: usize,
    height: usize,
    levels: Vec<u8>,
}

impl ConfidenceFrame {
    pub const MAX_LEVEL: u8 = 2;

    pub fn new(width: usize, height: usize, levels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, levels.len(), "confidence frame")?;
        if let Some(i) = levels.iter().position(|l| *l > Self::MAX_LEVEL) {
            return Err(Error::InvalidArgument(format!(
                "confidence level {} at sample {i} is outside 0..=2",
                levels[i]
            )));
        }
        Ok(Self {
            width,
            height,
            levels,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorFrame {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl ColorFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        check_dims(width, height, pixels.len(), "color frame")?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }
}

/// Foreground selector; nonzero values are foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskFrame {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl MaskFrame {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        check_dims(width, height, values.len(), "mask frame")?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x] != 0
    }
}
