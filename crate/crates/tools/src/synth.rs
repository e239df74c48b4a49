//! Deterministic synthetic multi-view dataset: asymmetric face-like targets
//! whose yaw levels mirror exactly, composited over textured clutter.

use acf_core::eval::{Annotation, AnnotationSet};
use acf_core::rng::SeededRng;
use acf_core::{BBox, Image};
use serde::{Deserialize, Serialize};

use crate::error::{ToolError, ToolResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub rng_seed: u64,
    pub image_count: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// Inclusive range of targets per image. Placement falls back to the
    /// smallest side and a raster search, and falls short only when no
    /// non-overlapping spot is left.
    pub targets_per_image: (usize, usize),
    /// Inclusive range of target box sides in pixels.
    pub scale_range: (f64, f64),
    pub yaw_levels: u32,
    /// Clutter shapes per 10 000 pixels.
    pub clutter_density: f64,
    /// Amplitude of the per-pixel noise.
    pub noise_amplitude: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rng_seed: 0,
            image_count: 200,
            image_width: 256,
            image_height: 192,
            targets_per_image: (1, 2),
            scale_range: (84.0, 140.0),
            yaw_levels: 6,
            clutter_density: 0.6,
            noise_amplitude: 0.06,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> ToolResult<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(ToolError::Config(format!("invalid scale range {:?}", self.scale_range)));
        }
        if hi > self.image_width.min(self.image_height) as f64 {
            return Err(ToolError::Config(format!(
                "targets up to {hi} px do not fit a {}x{} image",
                self.image_width, self.image_height
            )));
        }
        if self.yaw_levels == 0 {
            return Err(ToolError::Config("yaw levels must be at least 1".into()));
        }
        if self.targets_per_image.0 > self.targets_per_image.1 {
            return Err(ToolError::Config("targets per image range is reversed".into()));
        }
        if !(self.clutter_density >= 0.0 && self.noise_amplitude >= 0.0) {
            return Err(ToolError::Config("clutter density and noise must be non-negative".into()));
        }
        Ok(())
    }

    /// The same generator with no targets, for negative images.
    pub fn negatives(&self) -> SynthConfig {
        SynthConfig {
            targets_per_image: (0, 0),
            ..self.clone()
        }
    }
}

/// The three disjoint synthetic sets used for training, bootstrapping and
/// testing. Seeds differ, so no image is shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSplits {
    pub train: SynthConfig,
    /// Rendered with no targets regardless of `targets_per_image`.
    pub negatives: SynthConfig,
    pub test: SynthConfig,
}

impl Default for SynthSplits {
    fn default() -> Self {
        SynthSplits {
            train: SynthConfig {
                rng_seed: 0,
                image_count: 1400,
                ..SynthConfig::default()
            },
            negatives: SynthConfig {
                rng_seed: 1,
                image_count: 500,
                targets_per_image: (0, 0),
                ..SynthConfig::default()
            },
            test: SynthConfig {
                rng_seed: 2,
                image_count: 200,
                ..SynthConfig::default()
            },
        }
    }
}

impl SynthSplits {
    pub fn validate(&self) -> ToolResult<()> {
        self.train.validate()?;
        self.negatives.validate()?;
        self.test.validate()?;
        let seeds = [self.train.rng_seed, self.negatives.rng_seed, self.test.rng_seed];
        if seeds[0] == seeds[1] || seeds[0] == seeds[2] || seeds[1] == seeds[2] {
            return Err(ToolError::Config("synthetic splits must use distinct seeds".into()));
        }
        Ok(())
    }
}

/// Appearance of one target, independent of yaw and placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetStyle {
    pub skin: [f32; 3],
    pub hair: [f32; 3],
    pub eye: [f32; 3],
    pub mouth: [f32; 3],
}

impl TargetStyle {
    pub fn random(rng: &mut SeededRng) -> Self {
        let u = |rng: &mut SeededRng, lo: f64, hi: f64| rng.range_f64(lo, hi) as f32;
        let tone = u(rng, 0.55, 1.0);
        TargetStyle {
            skin: [tone * u(rng, 0.85, 0.98), tone * u(rng, 0.58, 0.72), tone * u(rng, 0.42, 0.56)],
            hair: [u(rng, 0.05, 0.35), u(rng, 0.03, 0.22), u(rng, 0.02, 0.15)],
            eye: [u(rng, 0.02, 0.12), u(rng, 0.02, 0.1), u(rng, 0.02, 0.1)],
            mouth: [u(rng, 0.45, 0.7), u(rng, 0.1, 0.22), u(rng, 0.1, 0.22)],
        }
    }
}

/// Signed yaw in `[-1, 1]`; levels `v` and `levels + 1 - v` are exact
/// negations.
pub fn yaw_value(level: u32, levels: u32) -> f64 {
    if levels <= 1 {
        return 0.0;
    }
    (2.0 * level as f64 - levels as f64 - 1.0) / (levels as f64 - 1.0)
}

#[inline]
fn ellipse_alpha(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64, sharpness: f64) -> f32 {
    let (u, v) = ((x - cx) / rx, (y - cy) / ry);
    ((1.0 - (u * u + v * v)) * sharpness).clamp(0.0, 1.0) as f32
}

#[inline]
fn lerp(c: [f32; 3], target: [f32; 3], a: f32) -> [f32; 3] {
    [
        c[0] + (target[0] - c[0]) * a,
        c[1] + (target[1] - c[1]) * a,
        c[2] + (target[2] - c[2]) * a,
    ]
}

/// Renders a `side`×`side` target as colour plus coverage. The shape is
/// evaluated on centred integer-symmetric coordinates, so rendering yaw `t`
/// and flipping equals rendering yaw `-t`.
pub fn render_target(style: &TargetStyle, yaw: f64, side: usize) -> (Vec<[f32; 3]>, Vec<f32>) {
    let t = yaw;
    let s = side as f64;
    let mut color = Vec::with_capacity(side * side);
    let mut alpha = Vec::with_capacity(side * side);
    let head_cx = 0.10 * t;
    let head_rx = 0.78 - 0.10 * t.abs();
    let eye_a = (-0.32 + 0.22 * t, 0.14 * (1.0 - 0.6 * (-t).max(0.0)));
    let eye_b = (0.32 + 0.22 * t, 0.14 * (1.0 - 0.6 * t.max(0.0)));
    let nose = 0.38 * t;
    let mouth = (0.20 * t, 0.30 * (1.0 - 0.3 * t.abs()));
    for py in 0..side {
        let y = (2.0 * py as f64 + 1.0 - s) / s;
        for px in 0..side {
            let x = (2.0 * px as f64 + 1.0 - s) / s;
            let head = ellipse_alpha(x, y, head_cx, 0.02, head_rx, 0.92, 10.0);
            let shade = (1.0 - 0.3 * (-t * (x - head_cx)).max(0.0)) as f32;
            let mut c = [style.skin[0] * shade, style.skin[1] * shade, style.skin[2] * shade];
            let hair = if y < -0.42 { ((-0.42 - y) * 12.0).clamp(0.0, 1.0) as f32 } else { 0.0 };
            c = lerp(c, style.hair, hair);
            let nose_c = [c[0] * 0.78, c[1] * 0.74, c[2] * 0.72];
            c = lerp(c, nose_c, ellipse_alpha(x, y, nose, 0.15, 0.08, 0.17, 6.0));
            c = lerp(c, style.eye, ellipse_alpha(x, y, eye_a.0, -0.12, eye_a.1, 0.08, 6.0));
            c = lerp(c, style.eye, ellipse_alpha(x, y, eye_b.0, -0.12, eye_b.1, 0.08, 6.0));
            c = lerp(c, style.mouth, ellipse_alpha(x, y, mouth.0, 0.52, mouth.1, 0.07, 6.0));
            color.push(c);
            alpha.push(head);
        }
    }
    (color, alpha)
}

/// Pixel buffer used while compositing.
struct Canvas {
    w: usize,
    h: usize,
    px: Vec<[f32; 3]>,
}

impl Canvas {
    fn blend(&mut self, x: usize, y: usize, c: [f32; 3], a: f32) {
        let p = &mut self.px[y * self.w + x];
        *p = lerp(*p, c, a);
    }

    fn into_image(self) -> Image {
        Image::from_fn(self.w, self.h, |x, y| self.px[y * self.w + x])
    }
}

fn textured_background(w: usize, h: usize, rng: &mut SeededRng) -> Canvas {
    let base = [rng.next_f64() as f32, rng.next_f64() as f32, rng.next_f64() as f32];
    // coarse value noise, bilinearly upsampled
    let cell = 8 + rng.below(24);
    let (gw, gh) = (w / cell + 2, h / cell + 2);
    let grid: Vec<[f32; 3]> = (0..gw * gh)
        .map(|_| {
            let a = rng.range_f64(-0.25, 0.25) as f32;
            [a + rng.range_f64(-0.08, 0.08) as f32, a, a + rng.range_f64(-0.08, 0.08) as f32]
        })
        .collect();
    let freq = rng.range_f64(0.02, 0.2);
    let angle = rng.range_f64(0.0, std::f64::consts::PI);
    let amp = rng.range_f64(0.0, 0.12) as f32;
    let (ca, sa) = (angle.cos(), angle.sin());
    let mut px = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 / cell as f64, y as f64 / cell as f64);
            let (ix, iy) = (fx as usize, fy as usize);
            let (tx, ty) = ((fx - ix as f64) as f32, (fy - iy as f64) as f32);
            let g = |dx: usize, dy: usize| grid[(iy + dy) * gw + ix + dx];
            let stripes = amp * ((x as f64 * ca + y as f64 * sa) * freq).sin() as f32;
            let mut c = [0.0f32; 3];
            for k in 0..3 {
                let top = g(0, 0)[k] * (1.0 - tx) + g(1, 0)[k] * tx;
                let bottom = g(0, 1)[k] * (1.0 - tx) + g(1, 1)[k] * tx;
                c[k] = base[k] + top * (1.0 - ty) + bottom * ty + stripes;
            }
            px.push(c);
        }
    }
    Canvas { w, h, px }
}

fn draw_clutter(canvas: &mut Canvas, count: usize, rng: &mut SeededRng) {
    for _ in 0..count {
        let color = [rng.next_f64() as f32, rng.next_f64() as f32, rng.next_f64() as f32];
        let cx = rng.range_f64(0.0, canvas.w as f64);
        let cy = rng.range_f64(0.0, canvas.h as f64);
        let rx = rng.range_f64(3.0, 40.0);
        let ry = rng.range_f64(3.0, 40.0);
        let kind = rng.below(3);
        let (x0, x1) = ((cx - rx).max(0.0) as usize, ((cx + rx).ceil() as usize).min(canvas.w));
        let (y0, y1) = ((cy - ry).max(0.0) as usize, ((cy + ry).ceil() as usize).min(canvas.h));
        for y in y0..y1 {
            for x in x0..x1 {
                let (u, v) = ((x as f64 + 0.5 - cx) / rx, (y as f64 + 0.5 - cy) / ry);
                let a = match kind {
                    0 => ((1.0 - (u * u + v * v)) * 4.0).clamp(0.0, 1.0),
                    1 => 1.0,
                    // thin bar
                    _ => ((1.0 - v.abs() * 6.0) * 2.0).clamp(0.0, 1.0),
                };
                canvas.blend(x, y, color, a as f32 * 0.9);
            }
        }
    }
}

/// One target placed in an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedTarget {
    pub bbox: BBox,
    pub yaw_level: u32,
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub image: Image,
    pub targets: Vec<PlacedTarget>,
}

/// Renders image `index` of the set. Each image draws from its own RNG
/// stream, so images are independent of `image_count`.
pub fn generate_image(config: &SynthConfig, index: usize) -> SynthImage {
    let (w, h) = (config.image_width, config.image_height);
    let mut rng = SeededRng::with_stream(config.rng_seed, index as u64);
    let mut canvas = textured_background(w, h, &mut rng);
    let clutter = (config.clutter_density * (w * h) as f64 / 10_000.0).round() as usize;
    draw_clutter(&mut canvas, clutter, &mut rng);

    let (tmin, tmax) = config.targets_per_image;
    let wanted = tmin + rng.below(tmax - tmin + 1);
    let mut targets: Vec<PlacedTarget> = Vec::new();
    for _ in 0..wanted {
        let free = |b: &BBox, placed: &[PlacedTarget]| placed.iter().all(|t| t.bbox.intersection_area(b) <= 0.0);
        let mut spot = None;
        for _attempt in 0..50 {
            let side = rng.range_f64(config.scale_range.0, config.scale_range.1).round() as usize;
            let side = side.clamp(1, w.min(h));
            let x = rng.below(w - side + 1);
            let y = rng.below(h - side + 1);
            let bbox = BBox::new(x as f64, y as f64, side as f64, side as f64);
            if free(&bbox, &targets) {
                spot = Some((x, y, side));
                break;
            }
        }
        if spot.is_none() {
            // raster fallback at the smallest side, from a random start
            let side = (config.scale_range.0.ceil() as usize).clamp(1, w.min(h));
            let (nx, ny) = (w - side + 1, h - side + 1);
            let start = rng.below(nx * ny);
            spot = (0..nx * ny)
                .map(|k| (start + k) % (nx * ny))
                .map(|k| (k % nx, k / nx, side))
                .find(|&(x, y, s)| free(&BBox::new(x as f64, y as f64, s as f64, s as f64), &targets));
        }
        {
            let Some((x, y, side)) = spot else { break };
            let bbox = BBox::new(x as f64, y as f64, side as f64, side as f64);
            let yaw_level = 1 + rng.below(config.yaw_levels as usize) as u32;
            let style = TargetStyle::random(&mut rng);
            let (color, alpha) = render_target(&style, yaw_value(yaw_level, config.yaw_levels), side);
            for py in 0..side {
                for px in 0..side {
                    let k = py * side + px;
                    canvas.blend(x + px, y + py, color[k], alpha[k]);
                }
            }
            targets.push(PlacedTarget { bbox, yaw_level });
        }
    }

    let amp = config.noise_amplitude;
    for p in &mut canvas.px {
        for c in p.iter_mut() {
            *c += rng.range_f64(-amp, amp) as f32;
        }
    }
    SynthImage {
        image: canvas.into_image(),
        targets,
    }
}

/// Image id used in annotation and detection files.
pub fn image_id(index: usize) -> String {
    format!("img_{index:05}")
}

/// Annotations of the whole set, with yaw levels.
pub fn annotations(config: &SynthConfig) -> AnnotationSet {
    let mut set = AnnotationSet::new("synthetic-square");
    for i in 0..config.image_count {
        let img = generate_image(config, i);
        set.images.insert(
            image_id(i),
            img.targets
                .iter()
                .map(|t| Annotation {
                    bbox: t.bbox,
                    ignore: false,
                    yaw: Some(t.yaw_level),
                })
                .collect(),
        );
    }
    set
}

/// Crop of a target box plus `context` (a fraction of the side) on every
/// side, resampled to `out`×`out` pixels.
pub fn crop_with_context(image: &Image, bbox: &BBox, context: f64, out: usize) -> Image {
    let (ex, ey) = (bbox.w * context, bbox.h * context);
    image.crop_resized(bbox.x - ex, bbox.y - ey, bbox.w + 2.0 * ex, bbox.h + 2.0 * ey, out, out)
}
