//! Separable binomial smoothing with replicated borders.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::Plane;

/// Normalized binomial coefficients `C(2r, k) / 4^r`, `k = 0..=2r`.
pub fn binomial_kernel(radius: usize) -> Vec<f32> {
    let n = 2 * radius;
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![1.0f64; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    let total = libm::pow(2.0, n as f64);
    row.into_iter().map(|c| (c / total) as f32).collect()
}

/// Smooths `plane` horizontally then vertically. Radius 0 is the identity.
///
/// Mirror-image taps are added before weighting, so the result of a
/// horizontally flipped input is the exact flip of the result.
pub fn binomial_smooth(plane: &Plane, radius: usize) -> Plane {
    if radius == 0 {
        return plane.clone();
    }
    let kernel = binomial_kernel(radius);
    let (w, h) = (plane.width, plane.height);
    let mut tmp = vec![0.0f32; w * h];
    let mut line = vec![0.0f32; w.max(h)];

    for y in 0..h {
        filter_line(plane.row(y), &mut line[..w], &kernel, radius);
        tmp[y * w..(y + 1) * w].copy_from_slice(&line[..w]);
    }

    let mut out = vec![0.0f32; w * h];
    let mut column = vec![0.0f32; h];
    for x in 0..w {
        for y in 0..h {
            column[y] = tmp[y * w + x];
        }
        filter_line(&column, &mut line[..h], &kernel, radius);
        for y in 0..h {
            out[y * w + x] = line[y];
        }
    }
    Plane::new(w, h, out)
}

fn filter_line(src: &[f32], dst: &mut [f32], kernel: &[f32], radius: usize) {
    let n = src.len() as isize;
    let at = |i: isize| src[i.clamp(0, n - 1) as usize];
    for (i, out) in dst.iter_mut().enumerate() {
        let i = i as isize;
        let mut acc = kernel[radius] * at(i);
        for j in 1..=radius {
            let pair = at(i - j as isize) + at(i + j as isize);
            acc += kernel[radius + j] * pair;
        }
        *out = acc;
    }
}
