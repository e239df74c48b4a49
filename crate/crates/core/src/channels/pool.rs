//! Non-overlapping block pooling.

use alloc::vec::Vec;

use crate::image::Plane;
use crate::rng::SeededRng;

/// Pooling reduction applied to each `shrink`×`shrink` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
#[derive(Default)]
pub enum Pooling {
    #[default]
    Average,
    Max,
    /// Samples one value per block with probability proportional to its
    /// (non-negative) activation. The seed is mandatory; `None` is rejected
    /// by config validation.
    Stochastic { seed: Option<u64> },
}


/// Pools `plane` over `factor`×`factor` blocks; blocks at the right and
/// bottom edges may be partial and are reduced over the pixels they hold.
/// `rng` is only consulted by stochastic pooling and must be `Some` then.
pub fn pool(plane: &Plane, factor: usize, method: Pooling, mut rng: Option<&mut SeededRng>) -> Plane {
    assert!(factor >= 1);
    let out_w = plane.width.div_ceil(factor);
    let out_h = plane.height.div_ceil(factor);
    let mut data = Vec::with_capacity(out_w * out_h);
    let mut block = Vec::with_capacity(factor * factor);
    for by in 0..out_h {
        let y0 = by * factor;
        let y1 = (y0 + factor).min(plane.height);
        for bx in 0..out_w {
            let x0 = bx * factor;
            let x1 = (x0 + factor).min(plane.width);
            let v = match method {
                Pooling::Average => {
                    let mut sum = 0.0f32;
                    for y in y0..y1 {
                        sum += mirrored_row_sum(&plane.row(y)[x0..x1]);
                    }
                    sum / ((x1 - x0) * (y1 - y0)) as f32
                }
                Pooling::Max => {
                    let mut m = f32::NEG_INFINITY;
                    for y in y0..y1 {
                        for &v in &plane.row(y)[x0..x1] {
                            m = m.max(v);
                        }
                    }
                    m
                }
                Pooling::Stochastic { .. } => {
                    block.clear();
                    for y in y0..y1 {
                        block.extend_from_slice(&plane.row(y)[x0..x1]);
                    }
                    let rng = rng.as_deref_mut().expect("stochastic pooling needs a generator");
                    stochastic_pick(&block, rng)
                }
            };
            data.push(v);
        }
    }
    Plane::new(out_w, out_h, data)
}

/// Sum of a row that is invariant (bit-exactly) under reversing the row:
/// mirror pairs are added first, then accumulated outside-in.
#[inline]
fn mirrored_row_sum(row: &[f32]) -> f32 {
    let n = row.len();
    let mut sum = 0.0f32;
    for j in 0..n / 2 {
        sum += row[j] + row[n - 1 - j];
    }
    if n % 2 == 1 {
        sum += row[n / 2];
    }
    sum
}

fn stochastic_pick(block: &[f32], rng: &mut SeededRng) -> f32 {
    let total: f64 = block.iter().map(|&v| v.max(0.0) as f64).sum();
    if total <= 0.0 {
        return block[rng.below(block.len())];
    }
    let target = rng.next_f64() * total;
    let mut acc = 0.0f64;
    let mut last_positive = 0;
    for (i, &v) in block.iter().enumerate() {
        let p = v.max(0.0) as f64;
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if target < acc {
                return v;
            }
        }
    }
    block[last_positive]
}
