//! Straightforward reference implementations shared by the integration and
//! acceptance tests. Written for clarity, not speed; none of them call the
//! code paths they check.
#![allow(dead_code)]

use acf_core::detector::Detection;
use acf_core::eval::{Annotation, MatchLabel};
use acf_core::rng::SeededRng;
use acf_core::boosting::{DepthTwoTree, SoftCascadeModel, TreeNode, WeightedTree};
use acf_core::{BBox, ChannelConfig, Image, Plane};

/// sRGB in [0,1] to CIE L*u*v* (D65), from the textbook definition with
/// the CIE constants written as fractions.
pub fn luv_reference(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let lin = |c: f64| if c <= 0.04045 { c / 12.92 } else { ((c + 0.055) / 1.055).powf(2.4) };
    let (r, g, b) = (lin(r), lin(g), lin(b));
    let m = [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ];
    let x = m[0][0] * r + m[0][1] * g + m[0][2] * b;
    let y = m[1][0] * r + m[1][1] * g + m[1][2] * b;
    let z = m[2][0] * r + m[2][1] * g + m[2][2] * b;
    let (xn, yn, zn) = (0.95047, 1.0, 1.08883);
    let t = y / yn;
    let delta: f64 = 6.0 / 29.0;
    let l = if t > delta.powi(3) { 116.0 * t.cbrt() - 16.0 } else { (29.0f64 / 3.0).powi(3) * t };
    let d = x + 15.0 * y + 3.0 * z;
    if d == 0.0 {
        return (l, 0.0, 0.0);
    }
    let dn = xn + 15.0 * yn + 3.0 * zn;
    let u = 13.0 * l * (4.0 * x / d - 4.0 * xn / dn);
    let v = 13.0 * l * (9.0 * y / d - 9.0 * yn / dn);
    (l, u, v)
}

/// Full 2D convolution with the outer product of the binomial row
/// `C(2r, k) / 4^r`, replicated borders, accumulated in f64.
pub fn smooth_direct(p: &Plane, r: usize) -> Plane {
    let n = 2 * r;
    let binom = |k: usize| -> f64 {
        let mut c = 1.0;
        for i in 0..k {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        c / 4f64.powi(r as i32)
    };
    let k: Vec<f64> = (0..=n).map(binom).collect();
    let (w, h) = (p.width as isize, p.height as isize);
    Plane::from_fn(p.width, p.height, |x, y| {
        let mut acc = 0.0f64;
        for dy in -(r as isize)..=r as isize {
            for dx in -(r as isize)..=r as isize {
                let sx = (x as isize + dx).clamp(0, w - 1) as usize;
                let sy = (y as isize + dy).clamp(0, h - 1) as usize;
                acc += k[(dx + r as isize) as usize] * k[(dy + r as isize) as usize] * p.get(sx, sy) as f64;
            }
        }
        acc as f32
    })
}

/// Mean and max of the `f`×`f` block at block coordinates `(bx, by)`,
/// clipped to the plane.
pub fn block_stats(p: &Plane, f: usize, bx: usize, by: usize) -> (f64, f32) {
    let mut sum = 0.0f64;
    let mut max = f32::NEG_INFINITY;
    let mut n = 0;
    for y in by * f..((by + 1) * f).min(p.height) {
        for x in bx * f..((bx + 1) * f).min(p.width) {
            sum += p.get(x, y) as f64;
            max = max.max(p.get(x, y));
            n += 1;
        }
    }
    (sum / n as f64, max)
}

pub fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = SeededRng::new(seed);
    Image::from_fn(w, h, |_, _| [rng.next_f64() as f32, rng.next_f64() as f32, rng.next_f64() as f32])
}

/// Smooth random image: sums of a few random blobs, so gradients and
/// detections are not pure noise.
pub fn blob_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = SeededRng::new(seed);
    let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..12)
        .map(|_| {
            (
                rng.next_f64() * w as f64,
                rng.next_f64() * h as f64,
                4.0 + rng.next_f64() * 20.0,
                [rng.next_f64(), rng.next_f64(), rng.next_f64()],
            )
        })
        .collect();
    let mut noise = SeededRng::new(seed ^ 0x5eed);
    Image::from_fn(w, h, |x, y| {
        let mut c = [0.2f64; 3];
        for (bx, by, r, col) in &blobs {
            let d2 = ((x as f64 - bx).powi(2) + (y as f64 - by).powi(2)) / (r * r);
            let a = (-d2).exp();
            for k in 0..3 {
                c[k] = c[k] * (1.0 - a) + col[k] * a;
            }
        }
        c.map(|v| (v + 0.05 * (noise.next_f64() - 0.5)).clamp(0.0, 1.0) as f32)
    })
}

/// One greedy node chosen by exhaustive enumeration: feature `f` and raw
/// integer threshold `a` ("value <= a goes left"), leaves by weighted
/// majority (ties negative).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSplit {
    pub feature: usize,
    pub a: Option<u32>,
    pub left: f32,
    pub right: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTree {
    pub root: OracleSplit,
    pub children: [OracleSplit; 2],
}

fn majority(pos: f64, neg: f64) -> f32 {
    if pos > neg {
        1.0
    } else {
        -1.0
    }
}

/// Exhaustive search over every feature and every integer threshold in
/// `0..max_value`, for integer-valued features. Ties: lowest feature, then
/// lowest threshold. A subset without both classes yields a constant split
/// (`a == None`) whose output is its majority, or `fallback` when empty.
pub fn oracle_split(
    x: &[Vec<u32>],
    labels: &[i8],
    w: &[f64],
    subset: &[usize],
    max_value: u32,
    fallback: f32,
) -> OracleSplit {
    let pos: f64 = subset.iter().filter(|&&i| labels[i] > 0).map(|&i| w[i]).sum();
    let neg: f64 = subset.iter().filter(|&&i| labels[i] <= 0).map(|&i| w[i]).sum();
    if pos <= 0.0 || neg <= 0.0 {
        let c = if subset.is_empty() { fallback } else { majority(pos, neg) };
        return OracleSplit {
            feature: 0,
            a: None,
            left: c,
            right: c,
        };
    }
    let mut best: Option<(f64, OracleSplit)> = None;
    for f in 0..x[0].len() {
        for a in 0..max_value {
            let (mut lp, mut ln, mut rp, mut rn) = (0.0, 0.0, 0.0, 0.0);
            for &i in subset {
                let left = x[i][f] <= a;
                match (left, labels[i] > 0) {
                    (true, true) => lp += w[i],
                    (true, false) => ln += w[i],
                    (false, true) => rp += w[i],
                    (false, false) => rn += w[i],
                }
            }
            let err = f64::min(lp, ln) + f64::min(rp, rn);
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((
                    err,
                    OracleSplit {
                        feature: f,
                        a: Some(a),
                        left: majority(lp, ln),
                        right: majority(rp, rn),
                    },
                ));
            }
        }
    }
    best.unwrap().1
}

pub fn oracle_tree(x: &[Vec<u32>], labels: &[i8], w: &[f64], max_value: u32) -> OracleTree {
    let all: Vec<usize> = (0..x.len()).collect();
    let root = oracle_split(x, labels, w, &all, max_value, -1.0);
    let goes_left = |i: usize| root.a.is_none_or(|a| x[i][root.feature] <= a);
    let left: Vec<usize> = all.iter().copied().filter(|&i| goes_left(i)).collect();
    let right: Vec<usize> = all.iter().copied().filter(|&i| !goes_left(i)).collect();
    OracleTree {
        root,
        children: [
            oracle_split(x, labels, w, &left, max_value, root.left),
            oracle_split(x, labels, w, &right, max_value, root.right),
        ],
    }
}

impl OracleTree {
    pub fn predict(&self, row: &[u32]) -> f32 {
        let go = |s: &OracleSplit| s.a.is_none_or(|a| row[s.feature] <= a);
        let child = if go(&self.root) { &self.children[0] } else { &self.children[1] };
        if go(child) {
            child.left
        } else {
            child.right
        }
    }
}

/// Classic O(n²) suppression: repeatedly take the best remaining detection
/// (score desc, then view, scale, x, y asc) and drop every remaining one
/// whose intersection over the smaller area reaches `thr`.
pub fn nms_reference(dets: &[Detection], thr: f64) -> Vec<Detection> {
    let better = |a: &Detection, b: &Detection| {
        (b.score, a.view_id, a.scale, a.x, a.y)
            .partial_cmp(&(a.score, b.view_id, b.scale, b.x, b.y))
            .unwrap()
            .is_lt()
    };
    let mut remaining: Vec<Detection> = dets.to_vec();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            if better(&remaining[i], &remaining[best]) {
                best = i;
            }
        }
        let top = remaining.swap_remove(best);
        let tb = top.bbox();
        remaining.retain(|d| {
            let b = d.bbox();
            let ix = (tb.x + tb.w).min(b.x + b.w) - tb.x.max(b.x);
            let iy = (tb.y + tb.h).min(b.y + b.h) - tb.y.max(b.y);
            let inter = ix.max(0.0) * iy.max(0.0);
            inter / (tb.w * tb.h).min(b.w * b.h) < thr
        });
        out.push(top);
    }
    out
}

fn jaccard(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    let inter = ix.max(0.0) * iy.max(0.0);
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Labels of detections (already in descending order) under greedy
/// one-to-one matching with ignore absorption.
pub fn match_reference(boxes: &[BBox], anns: &[Annotation], thr: f64) -> Vec<MatchLabel> {
    let mut used = vec![false; anns.len()];
    boxes
        .iter()
        .map(|b| {
            let cand = (0..anns.len())
                .filter(|&k| !anns[k].ignore && !used[k] && jaccard(b, &anns[k].bbox) >= thr)
                .fold(None, |best: Option<usize>, k| match best {
                    Some(j) if jaccard(b, &anns[j].bbox) >= jaccard(b, &anns[k].bbox) => Some(j),
                    _ => Some(k),
                });
            if let Some(k) = cand {
                used[k] = true;
                MatchLabel::Tp
            } else if anns.iter().any(|a| a.ignore && jaccard(b, &a.bbox) >= thr) {
                MatchLabel::Ignored
            } else {
                MatchLabel::Fp
            }
        })
        .collect()
}

/// All-points AP from the definition: mean over the positives of the
/// interpolated precision (max precision at recall >= that positive's
/// recall).
pub fn ap_reference(is_tp: &[bool], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let mut points = Vec::new();
    let mut tp = 0;
    for (i, &t) in is_tp.iter().enumerate() {
        if t {
            tp += 1;
        }
        points.push((tp as f64 / total as f64, tp as f64 / (i + 1) as f64));
    }
    let mut sum = 0.0;
    for k in 1..=total {
        let r = k as f64 / total as f64;
        let p = points
            .iter()
            .filter(|(rec, _)| *rec >= r - 1e-12)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += p;
    }
    sum / total as f64
}

/// Cascade of random depth-2 trees with continuous leaves (so scores of
/// different windows practically never tie) and stage thresholds on a
/// `-reject * sqrt(t + 1)` envelope; `reject = inf` disables rejection.
pub fn random_cascade(seed: u64, trees: usize, window: usize, cfg: &ChannelConfig, reject: f64) -> SoftCascadeModel {
    let mut rng = SeededRng::new(seed);
    let nf = cfg.feature_len(window);
    let trees: Vec<WeightedTree> = (0..trees)
        .map(|_| {
            let mut node = || TreeNode {
                feature: rng.below(nf) as u32,
                threshold: rng.next_f64() as f32 * 0.2,
            };
            let nodes = [node(), node(), node()];
            let leaves = [0; 4].map(|_| rng.range_f64(-1.0, 1.0) as f32);
            WeightedTree {
                tree: DepthTwoTree { nodes, leaves },
                alpha: 0.2 + rng.next_f64(),
            }
        })
        .collect();
    let stage_thresholds = (0..trees.len()).map(|t| -reject * ((t + 1) as f64).sqrt()).collect();
    SoftCascadeModel {
        trees,
        stage_thresholds,
        window_size: window,
        channel_config: cfg.clone(),
        descriptors: cfg.descriptors(),
        score_range: (-4.0, 4.0),
        view_id: 1,
    }
}
