//! Gradient magnitude and unsigned orientation over several color planes.

use core::f64::consts::PI;

use alloc::vec;
use alloc::vec::Vec;

use crate::image::Plane;

/// Unsigned gradient orientation, stored in a form that mirrors exactly.
///
/// `base` is the angle folded into `[0, π/2]` (from `|dx|`, `|dy|`);
/// `reflected` says the true orientation is `π - base`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Orientation {
    pub base: f32,
    pub reflected: bool,
}

impl Orientation {
    /// Orientation in `[0, π)`.
    pub fn angle(&self) -> f64 {
        let a = if self.reflected {
            PI - self.base as f64
        } else {
            self.base as f64
        };
        if a >= PI {
            a - PI
        } else {
            a
        }
    }

    pub fn from_angle(theta: f64) -> Self {
        let r = libm::fmod(theta, PI);
        let t = if r < 0.0 { r + PI } else { r };
        if t <= PI / 2.0 {
            Orientation {
                base: t as f32,
                reflected: false,
            }
        } else {
            Orientation {
                base: (PI - t) as f32,
                reflected: true,
            }
        }
    }
}

/// Magnitude and orientation planes.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub magnitude: Plane,
    pub orientation: Vec<Orientation>,
}

/// Central differences (`[-1, 0, 1] / 2`, replicated borders) per plane; the
/// magnitude is the largest over the planes and the orientation comes from
/// the plane achieving it (first plane on ties).
pub fn gradients(planes: &[Plane]) -> Gradients {
    assert!(!planes.is_empty());
    let (w, h) = (planes[0].width, planes[0].height);
    let mut mag = vec![-1.0f32; w * h];
    let mut orient = vec![Orientation::default(); w * h];
    for p in planes {
        for y in 0..h {
            let up = y.saturating_sub(1);
            let down = (y + 1).min(h - 1);
            for x in 0..w {
                let left = x.saturating_sub(1);
                let right = (x + 1).min(w - 1);
                let dx = (p.get(right, y) - p.get(left, y)) * 0.5;
                let dy = (p.get(x, down) - p.get(x, up)) * 0.5;
                let m = libm::sqrtf(dx * dx + dy * dy);
                let i = y * w + x;
                if m > mag[i] {
                    mag[i] = m;
                    orient[i] = Orientation {
                        base: libm::atan2f(dy.abs(), dx.abs()),
                        reflected: dx * dy < 0.0,
                    };
                }
            }
        }
    }
    Gradients {
        magnitude: Plane::new(w, h, mag),
        orientation: orient,
    }
}

/// Splits each pixel's magnitude linearly between the two nearest of
/// `bins` orientation centres `kπ/bins` (circular). The output planes sum to
/// the magnitude.
pub fn orientation_histograms(magnitude: &Plane, orientation: &[Orientation], bins: usize) -> Vec<Plane> {
    assert!(bins > 0);
    assert_eq!(orientation.len(), magnitude.data.len());
    let (w, h) = (magnitude.width, magnitude.height);
    let mut out: Vec<Plane> = (0..bins).map(|_| Plane::zeros(w, h)).collect();
    let per_radian = bins as f32 / core::f32::consts::PI;
    for (i, (&m, o)) in magnitude.data.iter().zip(orientation).enumerate() {
        if m == 0.0 {
            continue;
        }
        // π/2 is its own mirror image; pin it so both sides bin identically.
        let pos = if o.base >= core::f32::consts::FRAC_PI_2 {
            bins as f32 * 0.5
        } else {
            (o.base * per_radian).min(bins as f32 * 0.5)
        };
        let mut k = libm::floorf(pos) as usize;
        let mut frac = pos - k as f32;
        if k >= bins {
            k = bins - 1;
            frac = 1.0;
        }
        let upper = m * frac;
        let lower = m - upper;
        let (mut b0, mut b1) = (k % bins, (k + 1) % bins);
        if o.reflected {
            b0 = (bins - b0) % bins;
            b1 = (bins - b1) % bins;
        }
        out[b0].data[i] += lower;
        out[b1].data[i] += upper;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_plane_has_zero_gradient() {
        let g = gradients(&[Plane::filled(8, 6, 0.3)]);
        assert!(g.magnitude.data.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn horizontal_ramp() {
        let w = 11;
        let p = Plane::from_fn(w, 5, |x, _| x as f32 / (w - 1) as f32);
        let g = gradients(&[p.clone(), p.clone(), p]);
        for y in 0..5 {
            for x in 1..w - 1 {
                let m = g.magnitude.get(x, y);
                assert!((m - 0.1).abs() < 1e-6, "{m}");
                assert_eq!(g.orientation[y * w + x].angle(), 0.0);
            }
        }
    }

    #[test]
    fn max_over_planes_rule() {
        let r = Plane::from_fn(9, 9, |x, y| ((x * x + 3 * y) % 7) as f32 / 7.0);
        let flat = Plane::filled(9, 9, 0.5);
        let all = gradients(&[r.clone(), flat.clone(), flat]);
        let only = gradients(&[r]);
        assert_eq!(all.magnitude, only.magnitude);
        assert_eq!(all.orientation, only.orientation);
    }

    #[test]
    fn bin_centre_gets_full_weight() {
        let bins = 6;
        for k in 0..bins {
            let theta = k as f64 * PI / bins as f64;
            let o = Orientation::from_angle(theta);
            let h = orientation_histograms(&Plane::filled(1, 1, 2.0), &[o], bins);
            for (j, p) in h.iter().enumerate() {
                let expect = if j == k { 2.0 } else { 0.0 };
                assert!((p.data[0] - expect).abs() < 1e-5, "k={k} j={j} {}", p.data[0]);
            }
        }
    }

    #[test]
    fn midway_splits_in_half() {
        let bins = 6;
        let theta = 1.5 * PI / bins as f64;
        let h = orientation_histograms(&Plane::filled(1, 1, 1.0), &[Orientation::from_angle(theta)], bins);
        assert!((h[1].data[0] - 0.5).abs() < 1e-6);
        assert!((h[2].data[0] - 0.5).abs() < 1e-6);
        // wrap-around between the last bin and bin 0
        let theta = 5.5 * PI / bins as f64;
        let h = orientation_histograms(&Plane::filled(1, 1, 1.0), &[Orientation::from_angle(theta)], bins);
        assert!((h[5].data[0] - 0.5).abs() < 1e-6);
        assert!((h[0].data[0] - 0.5).abs() < 1e-6);
    }
}
