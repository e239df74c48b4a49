//! Planar float images and single-channel planes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A single row-major channel of `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "plane buffer length mismatch");
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Plane::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn flip_horizontal(&self) -> Plane {
        let mut out = self.clone();
        for y in 0..self.height {
            out.data[y * self.width..(y + 1) * self.width].reverse();
        }
        out
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Color image with three planes of values in `[0, 1]`, stored planar.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    /// Builds an image from planar data (`R` plane, then `G`, then `B`).
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != 3 * width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} values, got {}",
                3 * width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::InvalidImage(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y) -> [r, g, b]`; values are
    /// clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let n = width * height;
        let mut data = vec![0.0f32; 3 * n];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for c in 0..3 {
                    data[c * n + y * width + x] = clamp01(px[c]);
                }
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Image::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_planes(planes: [Plane; 3]) -> Result<Self> {
        let (w, h) = (planes[0].width, planes[0].height);
        if planes.iter().any(|p| p.width != w || p.height != h) {
            return Err(Error::InvalidImage("plane dimensions differ".into()));
        }
        let mut data = Vec::with_capacity(3 * w * h);
        for p in &planes {
            data.extend_from_slice(&p.data);
        }
        Image::new(w, h, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// Planar buffer, three planes of `width * height` values.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane_data(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane(&self, c: usize) -> Plane {
        Plane::new(self.width, self.height, self.plane_data(c).to_vec())
    }

    pub fn planes(&self) -> [Plane; 3] {
        [self.plane(0), self.plane(1), self.plane(2)]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let n = self.width * self.height;
        let i = y * self.width + x;
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let n = self.width * self.height;
        let i = y * self.width + x;
        for c in 0..3 {
            self.data[c * n + i] = clamp01(rgb[c]);
        }
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.width) {
            row.reverse();
        }
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Integer crop; the rectangle must lie inside the image.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Image {
        assert!(x + w <= self.width && y + h <= self.height && w > 0 && h > 0);
        let n = self.width * self.height;
        let mut data = Vec::with_capacity(3 * w * h);
        for c in 0..3 {
            for row in y..y + h {
                let start = c * n + row * self.width + x;
                data.extend_from_slice(&self.data[start..start + w]);
            }
        }
        Image {
            width: w,
            height: h,
            data,
        }
    }

    /// Bilinear resampling with half-pixel-centred coordinates and replicated
    /// borders.
    ///
    /// Interpolation weights are derived from exact integer positions, so
    /// resampling commutes bit-exactly with a horizontal flip.
    pub fn resize(&self, new_width: usize, new_height: usize) -> Image {
        assert!(new_width > 0 && new_height > 0);
        if new_width == self.width && new_height == self.height {
            return self.clone();
        }
        let xs = resample_taps(self.width, new_width);
        let ys = resample_taps(self.height, new_height);
        let n_src = self.width * self.height;
        let mut data = vec![0.0f32; 3 * new_width * new_height];
        let mut tmp = vec![0.0f32; new_width * self.height];
        for c in 0..3 {
            let src = &self.data[c * n_src..(c + 1) * n_src];
            for y in 0..self.height {
                let row = &src[y * self.width..(y + 1) * self.width];
                let out = &mut tmp[y * new_width..(y + 1) * new_width];
                for (o, t) in out.iter_mut().zip(&xs) {
                    *o = t.w0 * row[t.i0] + t.w1 * row[t.i1];
                }
            }
            let dst = &mut data[c * new_width * new_height..(c + 1) * new_width * new_height];
            for (y, t) in ys.iter().enumerate() {
                let r0 = &tmp[t.i0 * new_width..(t.i0 + 1) * new_width];
                let r1 = &tmp[t.i1 * new_width..(t.i1 + 1) * new_width];
                let out = &mut dst[y * new_width..(y + 1) * new_width];
                for x in 0..new_width {
                    out[x] = t.w0 * r0[x] + t.w1 * r1[x];
                }
            }
        }
        Image {
            width: new_width,
            height: new_height,
            data,
        }
    }

    /// Samples the real-valued rectangle `(x, y, w, h)` into an
    /// `out_w`×`out_h` image with bilinear interpolation; samples outside the
    /// image replicate the nearest border pixel.
    pub fn crop_resized(&self, x: f64, y: f64, w: f64, h: f64, out_w: usize, out_h: usize) -> Image {
        assert!(w > 0.0 && h > 0.0 && out_w > 0 && out_h > 0);
        let sx = w / out_w as f64;
        let sy = h / out_h as f64;
        let n = self.width * self.height;
        let mut data = vec![0.0f32; 3 * out_w * out_h];
        let axis = |pos: f64, len: usize| -> (usize, usize, f32) {
            let p = pos.clamp(0.0, (len - 1) as f64);
            let i0 = libm::floor(p) as usize;
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, (p - i0 as f64) as f32)
        };
        for oy in 0..out_h {
            let (y0, y1, fy) = axis(y + (oy as f64 + 0.5) * sy - 0.5, self.height);
            for ox in 0..out_w {
                let (x0, x1, fx) = axis(x + (ox as f64 + 0.5) * sx - 0.5, self.width);
                for c in 0..3 {
                    let p = &self.data[c * n..(c + 1) * n];
                    let top = p[y0 * self.width + x0] * (1.0 - fx) + p[y0 * self.width + x1] * fx;
                    let bot = p[y1 * self.width + x0] * (1.0 - fx) + p[y1 * self.width + x1] * fx;
                    data[c * out_w * out_h + oy * out_w + ox] = clamp01(top * (1.0 - fy) + bot * fy);
                }
            }
        }
        Image {
            width: out_w,
            height: out_h,
            data,
        }
    }
}

#[inline]
fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    w0: f32,
    w1: f32,
}

/// Two-tap bilinear filter for resampling `src` samples onto `dst` samples.
///
/// The source coordinate of destination sample `x` is
/// `((2x + 1) * src - dst) / (2 * dst)`, evaluated in integers.
fn resample_taps(src: usize, dst: usize) -> Vec<Tap> {
    let d = 2 * dst as i64;
    let last = src as i64 - 1;
    (0..dst as i64)
        .map(|x| {
            let n = (2 * x + 1) * src as i64 - dst as i64;
            let i0 = n.div_euclid(d);
            let f = n - i0 * d;
            let w1 = (f as f64 / d as f64) as f32;
            let w0 = ((d - f) as f64 / d as f64) as f32;
            Tap {
                i0: i0.clamp(0, last) as usize,
                i1: (i0 + 1).clamp(0, last) as usize,
                w0,
                w1,
            }
        })
        .collect()
}
