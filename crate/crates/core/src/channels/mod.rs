//! Channel extraction: color, gradient magnitude and orientation histograms,
//! pre-smoothed, pooled by the shrink factor and post-smoothed.

pub mod color;
pub mod gradient;
pub mod pool;
pub mod smooth;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{Image, Plane};
use crate::rng::SeededRng;

pub use color::LuvNormalization;
pub use gradient::{gradients, orientation_histograms, Orientation};
pub use pool::{pool, Pooling};
pub use smooth::{binomial_kernel, binomial_smooth};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ColorSpace {
    Luv,
    Rgb,
    Gray,
    Hsv,
    /// No color channels (gradient-only feature sets).
    None,
}

impl ColorSpace {
    pub fn components(self) -> usize {
        match self {
            ColorSpace::Luv | ColorSpace::Rgb | ColorSpace::Hsv => 3,
            ColorSpace::Gray => 1,
            ColorSpace::None => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GradientColorSpace {
    Rgb,
    Luv,
    Gray,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ChannelConfig {
    pub color_space: ColorSpace,
    pub gradient_color_space: GradientColorSpace,
    pub num_orientation_bins: usize,
    /// Pre-smoothing radii; more than one gives the multi-local-scale variant.
    pub pre_smooth_radii: Vec<usize>,
    pub post_smooth_radius: usize,
    pub shrink: usize,
    pub pooling: Pooling,
    pub luv: LuvNormalization,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            color_space: ColorSpace::Luv,
            gradient_color_space: GradientColorSpace::Rgb,
            num_orientation_bins: 6,
            pre_smooth_radii: alloc::vec![1],
            post_smooth_radius: 1,
            shrink: 4,
            pooling: Pooling::Average,
            luv: LuvNormalization::default(),
        }
    }
}

impl ChannelConfig {
    /// Default configuration with the extra pre-smoothing radius 2.
    pub fn multi_local_scale() -> Self {
        ChannelConfig {
            pre_smooth_radii: alloc::vec![1, 2],
            ..ChannelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shrink == 0 {
            return Err(Error::InvalidConfig("shrink must be positive".into()));
        }
        if self.num_orientation_bins == 0 || self.num_orientation_bins > 255 {
            return Err(Error::InvalidConfig(format!(
                "number of orientation bins must be in 1..=255, got {}",
                self.num_orientation_bins
            )));
        }
        if self.pre_smooth_radii.is_empty() {
            return Err(Error::InvalidConfig("pre-smoothing radii must be non-empty".into()));
        }
        if self.pre_smooth_radii.contains(&0)
            || self.pre_smooth_radii.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidConfig(
                "pre-smoothing radii must be positive and strictly increasing".into(),
            ));
        }
        if let Pooling::Stochastic { seed: None } = self.pooling {
            return Err(Error::MissingPoolingSeed);
        }
        let l = &self.luv;
        if !(l.l_range > 0.0 && l.uv_range > 0.0 && l.u_min.is_finite() && l.v_min.is_finite()) {
            return Err(Error::InvalidConfig("LUV normalization constants out of range".into()));
        }
        Ok(())
    }

    pub fn channels_per_radius(&self) -> usize {
        self.color_space.components() + 1 + self.num_orientation_bins
    }

    pub fn channel_count(&self) -> usize {
        self.pre_smooth_radii.len() * self.channels_per_radius()
    }

    /// Feature-vector length of a square window `window` pixels wide.
    pub fn feature_len(&self, window: usize) -> usize {
        let g = window / self.shrink;
        self.channel_count() * g * g
    }

    /// Pooled cells of context a window needs on every side so that its
    /// features, computed from a crop, equal those computed on the whole
    /// image.
    pub fn context_cells(&self) -> usize {
        let r = self.pre_smooth_radii.iter().copied().max().unwrap_or(0);
        self.post_smooth_radius + (r + 1).div_ceil(self.shrink)
    }

    pub fn descriptors(&self) -> Vec<ChannelDescriptor> {
        let mut out = Vec::with_capacity(self.channel_count());
        for &r in &self.pre_smooth_radii {
            for c in 0..self.color_space.components() {
                out.push(ChannelDescriptor::new(ChannelKind::Color(c as u8), r));
            }
            out.push(ChannelDescriptor::new(ChannelKind::Magnitude, r));
            for b in 0..self.num_orientation_bins {
                out.push(ChannelDescriptor::new(ChannelKind::Orientation(b as u8), r));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ChannelKind {
    Color(u8),
    Magnitude,
    Orientation(u8),
}

/// What a channel plane holds and at which pre-smoothing radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelDescriptor {
    pub kind: ChannelKind,
    pub radius: u32,
}

impl ChannelDescriptor {
    pub fn new(kind: ChannelKind, radius: usize) -> Self {
        ChannelDescriptor {
            kind,
            radius: radius as u32,
        }
    }

    /// Short name used for debug dumps, e.g. `r1_orient3`.
    pub fn label(&self) -> alloc::string::String {
        match self.kind {
            ChannelKind::Color(c) => format!("r{}_color{}", self.radius, c),
            ChannelKind::Magnitude => format!("r{}_magnitude", self.radius),
            ChannelKind::Orientation(b) => format!("r{}_orient{}", self.radius, b),
        }
    }
}

/// Pooled channel planes of one image at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    width: usize,
    height: usize,
    data: Vec<f32>,
    descriptors: Vec<ChannelDescriptor>,
    config: ChannelConfig,
    source_width: usize,
    source_height: usize,
}

impl ChannelStack {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_channels(&self) -> usize {
        self.descriptors.len()
    }

    pub fn descriptors(&self) -> &[ChannelDescriptor] {
        &self.descriptors
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn source_size(&self) -> (usize, usize) {
        (self.source_width, self.source_height)
    }

    /// Channel-major buffer: plane `c` starts at `c * width * height`.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane(&self, c: usize) -> Plane {
        Plane::new(self.width, self.height, self.channel(c).to_vec())
    }

    #[inline]
    pub fn value(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Flattened features of the `g`×`g` window whose top-left cell is
    /// `(x, y)`, ordered channel, row, column.
    pub fn window_features(&self, x: usize, y: usize, g: usize) -> Vec<f32> {
        assert!(x + g <= self.width && y + g <= self.height);
        let mut out = Vec::with_capacity(self.num_channels() * g * g);
        for c in 0..self.num_channels() {
            for row in y..y + g {
                let start = (c * self.height + row) * self.width + x;
                out.extend_from_slice(&self.data[start..start + g]);
            }
        }
        out
    }

    /// Horizontal mirror of the stack, with orientation bin `k` moved to
    /// `(bins - k) mod bins`.
    pub fn flip_horizontal(&self) -> ChannelStack {
        let n = self.width * self.height;
        let perm = mirror_channel_permutation(&self.descriptors, self.config.num_orientation_bins)
            .expect("stack descriptors are complete");
        let mut data = alloc::vec![0.0f32; self.data.len()];
        for (c, &target) in perm.iter().enumerate() {
            for y in 0..self.height {
                for x in 0..self.width {
                    data[target * n + y * self.width + (self.width - 1 - x)] =
                        self.data[c * n + y * self.width + x];
                }
            }
        }
        ChannelStack {
            data,
            ..self.clone()
        }
    }
}

/// Channel index each channel maps to under a horizontal mirror.
pub fn mirror_channel_permutation(descriptors: &[ChannelDescriptor], bins: usize) -> Result<Vec<usize>> {
    if descriptors.is_empty() {
        return Err(Error::MissingDescriptors);
    }
    descriptors
        .iter()
        .map(|d| match d.kind {
            ChannelKind::Orientation(k) => {
                let target = ChannelDescriptor {
                    kind: ChannelKind::Orientation(((bins - k as usize) % bins) as u8),
                    radius: d.radius,
                };
                descriptors
                    .iter()
                    .position(|e| *e == target)
                    .ok_or(Error::MissingDescriptors)
            }
            _ => Ok(descriptors.iter().position(|e| e == d).unwrap()),
        })
        .collect()
}

/// Computes the pooled channel stack of `image`.
pub fn compute_channels(image: &Image, config: &ChannelConfig) -> Result<ChannelStack> {
    config.validate()?;
    let (w, h) = (image.width(), image.height());
    if w < config.shrink || h < config.shrink {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            shrink: config.shrink,
        });
    }
    let out_w = w.div_ceil(config.shrink);
    let out_h = h.div_ceil(config.shrink);
    let mut data = Vec::with_capacity(config.channel_count() * out_w * out_h);
    let mut plane_index = 0u64;
    let seed = match config.pooling {
        Pooling::Stochastic { seed } => seed,
        _ => None,
    };

    for &radius in &config.pre_smooth_radii {
        let rgb = image.planes().map(|p| binomial_smooth(&p, radius));
        let smoothed = Image::from_planes(rgb.clone())?;

        let mut full: Vec<Plane> = Vec::with_capacity(config.channels_per_radius());
        let mut luv_cache = None;
        match config.color_space {
            ColorSpace::Luv => {
                let luv = color::rgb_to_luv(&smoothed, &config.luv);
                full.extend(luv.iter().cloned());
                luv_cache = Some(luv);
            }
            ColorSpace::Rgb => full.extend(rgb.iter().cloned()),
            ColorSpace::Gray => full.push(color::rgb_to_gray(&smoothed)),
            ColorSpace::Hsv => full.extend(color::rgb_to_hsv(&smoothed)),
            ColorSpace::None => {}
        }

        let grad = match config.gradient_color_space {
            GradientColorSpace::Rgb => gradients(&rgb),
            GradientColorSpace::Luv => {
                let luv = luv_cache.unwrap_or_else(|| color::rgb_to_luv(&smoothed, &config.luv));
                gradients(&luv)
            }
            GradientColorSpace::Gray => gradients(&[color::rgb_to_gray(&smoothed)]),
        };
        let hist = orientation_histograms(&grad.magnitude, &grad.orientation, config.num_orientation_bins);
        full.push(grad.magnitude);
        full.extend(hist);

        for plane in &full {
            let mut rng = seed.map(|s| SeededRng::with_stream(s, plane_index));
            let pooled = pool(plane, config.shrink, config.pooling, rng.as_mut());
            let post = binomial_smooth(&pooled, config.post_smooth_radius);
            data.extend_from_slice(&post.data);
            plane_index += 1;
        }
    }

    Ok(ChannelStack {
        width: out_w,
        height: out_h,
        data,
        descriptors: config.descriptors(),
        config: config.clone(),
        source_width: w,
        source_height: h,
    })
}

/// Features of a training patch: the patch must be the window plus
/// [`ChannelConfig::context_cells`] of context on every side, already at the
/// pixel size `(g + 2 * context) * shrink`. Returns the interior `g`×`g`
/// features.
pub fn patch_features(patch: &Image, config: &ChannelConfig, window: usize) -> Result<Vec<f32>> {
    let g = window / config.shrink;
    let m = config.context_cells();
    let side = (g + 2 * m) * config.shrink;
    if patch.width() != side || patch.height() != side {
        return Err(Error::InvalidImage(format!(
            "training patch must be {side}x{side}, got {}x{}",
            patch.width(),
            patch.height()
        )));
    }
    let stack = compute_channels(patch, config)?;
    Ok(stack.window_features(m, m, g))
}

/// Pixel side of a training patch for `window`.
pub fn patch_side(config: &ChannelConfig, window: usize) -> usize {
    (window / config.shrink + 2 * config.context_cells()) * config.shrink
}
