//! Exact multi-scale channel pyramid.

use alloc::vec::Vec;

use crate::channels::{compute_channels, ChannelConfig, ChannelStack};
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PyramidConfig {
    pub scales_per_octave: usize,
    /// Largest scale; 1 means no upsampling.
    pub max_upscale: f64,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            scales_per_octave: 8,
            max_upscale: 1.0,
        }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales_per_octave == 0 {
            return Err(Error::InvalidConfig("scales per octave must be positive".into()));
        }
        if !(self.max_upscale >= 1.0 && self.max_upscale.is_finite()) {
            return Err(Error::InvalidConfig("max upscale must be a finite value >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PyramidLevel {
    /// Nominal scale from the schedule.
    pub scale: f64,
    /// Actual per-axis scales of the resampled image (`level / source`).
    pub scale_x: f64,
    pub scale_y: f64,
    pub stack: ChannelStack,
}

/// Geometric scales `max_upscale * 2^(-k / scales_per_octave)` for which the
/// scaled image still holds a `window`-pixel square, largest first.
pub fn scale_schedule(width: usize, height: usize, config: &PyramidConfig, window: usize) -> Vec<f64> {
    let min_side = width.min(height) as f64;
    let spo = config.scales_per_octave.max(1) as f64;
    let mut out = Vec::new();
    for k in 0.. {
        let s = config.max_upscale * libm::exp2(-(k as f64) / spo);
        if min_side * s < window as f64 {
            break;
        }
        out.push(s);
    }
    out
}

/// Pixel size of a level: the scaled size rounded half-up to a whole number
/// of pooling blocks, so every level pools without partial edge blocks.
pub fn level_dimension(dim: usize, scale: f64, shrink: usize) -> usize {
    let blocks = libm::floor(dim as f64 * scale / shrink as f64 + 0.5) as usize;
    blocks.max(1) * shrink
}

pub fn build_pyramid(
    image: &Image,
    channels: &ChannelConfig,
    config: &PyramidConfig,
    window: usize,
) -> Result<Vec<PyramidLevel>> {
    config.validate()?;
    channels.validate()?;
    let (w, h) = (image.width(), image.height());
    scale_schedule(w, h, config, window)
        .into_iter()
        .map(|scale| {
            let lw = level_dimension(w, scale, channels.shrink);
            let lh = level_dimension(h, scale, channels.shrink);
            let resized = image.resize(lw, lh);
            Ok(PyramidLevel {
                scale,
                scale_x: lw as f64 / w as f64,
                scale_y: lh as f64 / h as f64,
                stack: compute_channels(&resized, channels)?,
            })
        })
        .collect()
}

/// The resampled image a level was computed from.
pub fn level_image(image: &Image, scale: f64, shrink: usize) -> Image {
    image.resize(
        level_dimension(image.width(), scale, shrink),
        level_dimension(image.height(), scale, shrink),
    )
}
