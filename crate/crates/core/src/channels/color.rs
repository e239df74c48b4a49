//! Color-space conversions producing planes in `[0, 1]`.

use crate::image::{Image, Plane};

/// Affine constants that bring CIE L\*u\*v\* into `[0, 1]`:
/// `L / l_range`, `(u - u_min) / uv_range`, `(v - v_min) / uv_range`.
///
/// Over the sRGB gamut L\* spans `[0, 100]`, u\* about `[-83.1, 175.0]` and
/// v\* about `[-134.1, 107.4]`. The constants are stored in model files.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LuvNormalization {
    pub l_range: f64,
    pub u_min: f64,
    pub v_min: f64,
    pub uv_range: f64,
}

impl Default for LuvNormalization {
    fn default() -> Self {
        LuvNormalization {
            l_range: 100.0,
            u_min: -88.0,
            v_min: -135.0,
            uv_range: 270.0,
        }
    }
}

impl LuvNormalization {
    /// Normalized `(u, v)` values of every neutral (gray) pixel.
    pub fn neutral_uv(&self) -> (f64, f64) {
        (-self.u_min / self.uv_range, -self.v_min / self.uv_range)
    }
}

// D65 reference white, Y normalized to 1.
const XN: f64 = 0.950_47;
const YN: f64 = 1.0;
const ZN: f64 = 1.088_83;

#[inline]
fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        libm::pow((c + 0.055) / 1.055, 2.4)
    }
}

/// CIE L\*u\*v\* of one sRGB pixel, unnormalized.
pub fn srgb_to_luv_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let (r, g, b) = (srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;

    let yr = y / YN;
    let eps = 216.0 / 24389.0;
    let kappa = 24389.0 / 27.0;
    let l = if yr > eps {
        116.0 * libm::cbrt(yr) - 16.0
    } else {
        kappa * yr
    };

    let denom_n = XN + 15.0 * YN + 3.0 * ZN;
    let (un, vn) = (4.0 * XN / denom_n, 9.0 * YN / denom_n);
    let denom = x + 15.0 * y + 3.0 * z;
    if denom <= 0.0 {
        // black: chromaticity undefined, sits on the neutral axis
        return (l, 0.0, 0.0);
    }
    let (up, vp) = (4.0 * x / denom, 9.0 * y / denom);
    (l, 13.0 * l * (up - un), 13.0 * l * (vp - vn))
}

#[inline]
fn unit(v: f64) -> f32 {
    v.clamp(0.0, 1.0) as f32
}

pub fn rgb_to_luv(image: &Image, norm: &LuvNormalization) -> [Plane; 3] {
    let (w, h) = (image.width(), image.height());
    let mut out = [Plane::zeros(w, h), Plane::zeros(w, h), Plane::zeros(w, h)];
    let (r, g, b) = (image.plane_data(0), image.plane_data(1), image.plane_data(2));
    for i in 0..w * h {
        let (l, u, v) = srgb_to_luv_pixel(r[i] as f64, g[i] as f64, b[i] as f64);
        out[0].data[i] = unit(l / norm.l_range);
        out[1].data[i] = unit((u - norm.u_min) / norm.uv_range);
        out[2].data[i] = unit((v - norm.v_min) / norm.uv_range);
    }
    out
}

pub fn rgb_to_gray(image: &Image) -> Plane {
    let (w, h) = (image.width(), image.height());
    let (r, g, b) = (image.plane_data(0), image.plane_data(1), image.plane_data(2));
    let data = (0..w * h)
        .map(|i| (0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]).clamp(0.0, 1.0))
        .collect();
    Plane::new(w, h, data)
}

/// Hue (scaled to `[0, 1)`), saturation and value.
pub fn rgb_to_hsv(image: &Image) -> [Plane; 3] {
    let (w, h) = (image.width(), image.height());
    let mut out = [Plane::zeros(w, h), Plane::zeros(w, h), Plane::zeros(w, h)];
    let (r, g, b) = (image.plane_data(0), image.plane_data(1), image.plane_data(2));
    for i in 0..w * h {
        let (r, g, b) = (r[i], g[i], b[i]);
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let delta = max - min;
        let hue = if delta <= 0.0 {
            0.0
        } else if max == r {
            let h = (g - b) / delta;
            if h < 0.0 {
                h + 6.0
            } else {
                h
            }
        } else if max == g {
            (b - r) / delta + 2.0
        } else {
            (r - g) / delta + 4.0
        };
        out[0].data[i] = (hue / 6.0).clamp(0.0, 1.0);
        out[1].data[i] = if max > 0.0 { delta / max } else { 0.0 };
        out[2].data[i] = max;
    }
    out
}
