//! Fusion of raw detections: score re-ranking, merging and per-view
//! adjustment.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::boosting::SoftCascadeModel;
use crate::detector::{sort_detections, Detection};
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Rerank {
    None,
    /// Affine map of each view's recorded score range onto `[0, 1]`.
    #[default]
    Normalization,
    /// Number of trees that voted positive.
    NewScore,
    /// Normalized score times the rank of the detection's overlap count.
    OverlapRerank,
    /// Sum of the normalized scores of all overlapping detections.
    SumOfOverlap,
}

impl Rerank {
    pub const ALL: [Rerank; 5] = [
        Rerank::None,
        Rerank::Normalization,
        Rerank::NewScore,
        Rerank::OverlapRerank,
        Rerank::SumOfOverlap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rerank::None => "none",
            Rerank::Normalization => "normalization",
            Rerank::NewScore => "new_score",
            Rerank::OverlapRerank => "overlap_rerank",
            Rerank::SumOfOverlap => "sum_of_overlap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Merging {
    #[default]
    GreedyNms,
    Combination,
}

impl Merging {
    pub fn name(self) -> &'static str {
        match self {
            Merging::GreedyNms => "greedy_nms",
            Merging::Combination => "combination",
        }
    }
}

/// Weights used when [`Merging::Combination`] averages a cluster's boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CombinationWeights {
    #[default]
    Score,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FusionConfig {
    pub rerank: Rerank,
    /// Jaccard threshold for counting overlaps while re-ranking.
    pub rerank_overlap_threshold: f64,
    pub merging: Merging,
    /// Intersection-over-min-area threshold for merging.
    pub merge_overlap_threshold: f64,
    pub combination_weights: CombinationWeights,
    /// Re-ranked detections below this score are dropped before merging.
    pub score_threshold: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            rerank: Rerank::Normalization,
            rerank_overlap_threshold: 0.65,
            merging: Merging::GreedyNms,
            merge_overlap_threshold: 0.65,
            combination_weights: CombinationWeights::Score,
            score_threshold: 0.0,
        }
    }
}

fn check_threshold(name: &str, t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be in (0, 1], got {t}")))
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        check_threshold("rerank overlap threshold", self.rerank_overlap_threshold)?;
        check_threshold("merge overlap threshold", self.merge_overlap_threshold)?;
        if self.score_threshold.is_nan() {
            return Err(Error::InvalidConfig("score threshold is NaN".into()));
        }
        Ok(())
    }
}

/// Center-relative box correction: the center moves by `(dx * w, dy * h)`
/// and the size scales by `(sw, sh)` about the new center.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdjustmentParams {
    pub dx: f64,
    pub dy: f64,
    pub sw: f64,
    pub sh: f64,
}

impl Default for AdjustmentParams {
    fn default() -> Self {
        AdjustmentParams::IDENTITY
    }
}

impl AdjustmentParams {
    pub const IDENTITY: AdjustmentParams = AdjustmentParams {
        dx: 0.0,
        dy: 0.0,
        sw: 1.0,
        sh: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.sw > 0.0 && self.sh > 0.0 && self.sw.is_finite() && self.sh.is_finite()) {
            return Err(Error::InvalidConfig("adjustment scale factors must be positive".into()));
        }
        if !(self.dx.is_finite() && self.dy.is_finite()) {
            return Err(Error::InvalidConfig("adjustment shifts must be finite".into()));
        }
        Ok(())
    }

    pub fn apply(&self, b: &BBox) -> BBox {
        let (cx, cy) = b.center();
        let (cx, cy) = (cx + self.dx * b.w, cy + self.dy * b.h);
        let (w, h) = (self.sw * b.w, self.sh * b.h);
        BBox::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
    }

    /// Parameters undoing `self`.
    pub fn inverse(&self) -> AdjustmentParams {
        AdjustmentParams {
            dx: -self.dx / self.sw,
            dy: -self.dy / self.sh,
            sw: 1.0 / self.sw,
            sh: 1.0 / self.sh,
        }
    }
}

/// Normalization output; `degenerate_views` lists views whose range had
/// `max <= min` (their scores all become 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub detections: Vec<Detection>,
    pub degenerate_views: Vec<u32>,
}

/// `score' = clamp((score - min) / (max - min), 0, 1)` with the range of the
/// detection's view, looked up through `range_of`.
pub fn rerank_normalization(
    dets: &[Detection],
    range_of: impl Fn(u32) -> Option<(f64, f64)>,
) -> Result<Normalized> {
    let mut degenerate_views: Vec<u32> = Vec::new();
    let mut out = Vec::with_capacity(dets.len());
    for d in dets {
        let (lo, hi) = range_of(d.view_id)
            .ok_or_else(|| Error::InvalidModel(format!("no score range for view {}", d.view_id)))?;
        let score = if hi > lo {
            ((d.score - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            if !degenerate_views.contains(&d.view_id) {
                degenerate_views.push(d.view_id);
            }
            1.0
        };
        out.push(Detection { score, ..*d });
    }
    degenerate_views.sort_unstable();
    Ok(Normalized {
        detections: out,
        degenerate_views,
    })
}

/// Replaces every score by the detection's positive tree votes.
pub fn rerank_new_score(dets: &[Detection]) -> Vec<Detection> {
    dets.iter()
        .map(|d| Detection {
            score: d.votes as f64,
            ..*d
        })
        .collect()
}

/// Number of *other* detections whose Jaccard overlap with each detection is
/// at least `threshold`.
pub fn overlap_counts(dets: &[Detection], threshold: f64) -> Vec<usize> {
    let boxes: Vec<BBox> = dets.iter().map(Detection::bbox).collect();
    let mut counts = vec![0usize; dets.len()];
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            if boxes[i].jaccard(&boxes[j]) >= threshold {
                counts[i] += 1;
                counts[j] += 1;
            }
        }
    }
    counts
}

/// Ranks detections by ascending `counts` (ties by the detection total
/// order) and multiplies each score by `rank / N`, ranks `1..=N`.
pub fn rerank_by_overlap_counts(dets: &[Detection], counts: &[usize]) -> Vec<Detection> {
    assert_eq!(dets.len(), counts.len());
    let n = dets.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| counts[a].cmp(&counts[b]).then(dets[a].total_cmp(&dets[b])));
    let mut out = dets.to_vec();
    for (r, &i) in order.iter().enumerate() {
        out[i].score = dets[i].score * (r + 1) as f64 / n as f64;
    }
    out
}

pub fn rerank_overlap(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    rerank_by_overlap_counts(dets, &overlap_counts(dets, threshold))
}

/// Each score becomes the sum of the scores of all detections (itself
/// included) with Jaccard overlap at least `threshold`.
pub fn rerank_sum_overlap(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let boxes: Vec<BBox> = dets.iter().map(Detection::bbox).collect();
    let mut sums: Vec<f64> = dets.iter().map(|d| d.score).collect();
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            if boxes[i].jaccard(&boxes[j]) >= threshold {
                sums[i] += dets[j].score;
                sums[j] += dets[i].score;
            }
        }
    }
    dets.iter()
        .zip(sums)
        .map(|(d, score)| Detection { score, ..*d })
        .collect()
}

/// Greedy* suppression: in total order, keep a detection unless its
/// intersection-over-min-area with an already kept one is `>= threshold`.
/// Output is in total order.
pub fn nms_greedy(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sort_detections(&mut sorted);
    let mut kept: Vec<Detection> = Vec::new();
    let mut kept_boxes: Vec<BBox> = Vec::new();
    for d in sorted {
        let b = d.bbox();
        if kept_boxes.iter().all(|k| k.min_area_overlap(&b) < threshold) {
            kept.push(d);
            kept_boxes.push(b);
        }
    }
    kept
}

/// Cluster assignment of [`merge_combination`]: `clusters[k]` lists input
/// indices, the first being the seed.
pub fn combination_clusters(dets: &[Detection], threshold: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[a].total_cmp(&dets[b]));
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut seeds: Vec<BBox> = Vec::new();
    for i in order {
        let b = dets[i].bbox();
        match seeds.iter().position(|s| s.min_area_overlap(&b) >= threshold) {
            Some(k) => clusters[k].push(i),
            None => {
                seeds.push(b);
                clusters.push(vec![i]);
            }
        }
    }
    clusters
}

/// Greedy clustering seeded in total order; each cluster becomes one
/// detection with the weighted mean box and the seed's (maximal) score.
pub fn merge_combination(dets: &[Detection], threshold: f64, weights: CombinationWeights) -> Vec<Detection> {
    let mut out: Vec<Detection> = combination_clusters(dets, threshold)
        .into_iter()
        .map(|members| {
            let seed = dets[members[0]];
            let score_weights = weights == CombinationWeights::Score
                && members.iter().all(|&i| dets[i].score >= 0.0)
                && members.iter().map(|&i| dets[i].score).sum::<f64>() > 0.0;
            let w = |i: usize| if score_weights { dets[i].score } else { 1.0 };
            let total: f64 = members.iter().map(|&i| w(i)).sum();
            let mean = |f: fn(&Detection) -> f64| members.iter().map(|&i| w(i) * f(&dets[i])).sum::<f64>() / total;
            if members.len() == 1 {
                return seed;
            }
            Detection {
                x: mean(|d| d.x),
                y: mean(|d| d.y),
                w: mean(|d| d.w),
                h: mean(|d| d.h),
                ..seed
            }
        })
        .collect();
    sort_detections(&mut out);
    out
}

/// Applies each detection's view adjustment (`view_id` is 1-based).
pub fn adjust_detections(dets: &[Detection], params: &[AdjustmentParams]) -> Vec<Detection> {
    dets.iter()
        .map(|d| {
            let p = params
                .get((d.view_id as usize).wrapping_sub(1))
                .copied()
                .unwrap_or(AdjustmentParams::IDENTITY);
            d.with_bbox(p.apply(&d.bbox()))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fused {
    pub detections: Vec<Detection>,
    pub degenerate_views: Vec<u32>,
}

/// Re-ranks raw detections (overlap-based modes act on normalized scores),
/// drops those below the score threshold, merges across views, adjusts per
/// view and sorts by the total order.
pub fn fuse(
    raw: Vec<Detection>,
    models: &[SoftCascadeModel],
    adjustments: &[AdjustmentParams],
    config: &FusionConfig,
) -> Result<Fused> {
    config.validate()?;
    let range_of = |v: u32| models.iter().find(|m| m.view_id == v).map(|m| m.score_range);
    let mut degenerate_views = Vec::new();
    let mut normalized = || -> Result<Vec<Detection>> {
        let n = rerank_normalization(&raw, range_of)?;
        degenerate_views = n.degenerate_views;
        Ok(n.detections)
    };
    let reranked = match config.rerank {
        Rerank::None => raw.clone(),
        Rerank::Normalization => normalized()?,
        Rerank::NewScore => rerank_new_score(&raw),
        Rerank::OverlapRerank => rerank_overlap(&normalized()?, config.rerank_overlap_threshold),
        Rerank::SumOfOverlap => rerank_sum_overlap(&normalized()?, config.rerank_overlap_threshold),
    };
    let kept: Vec<Detection> = reranked
        .into_iter()
        .filter(|d| d.score >= config.score_threshold)
        .collect();
    let merged = match config.merging {
        Merging::GreedyNms => nms_greedy(&kept, config.merge_overlap_threshold),
        Merging::Combination => merge_combination(&kept, config.merge_overlap_threshold, config.combination_weights),
    };
    let mut detections = adjust_detections(&merged, adjustments);
    sort_detections(&mut detections);
    Ok(Fused {
        detections,
        degenerate_views,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, y: f64, w: f64, h: f64, score: f64) -> Detection {
        Detection {
            x,
            y,
            w,
            h,
            score,
            view_id: 1,
            scale: 1.0,
            votes: 0,
        }
    }

    #[test]
    fn footnote_example() {
        let d = [det(0.0, 0.0, 1.0, 1.0, 10.0), det(5.0, 0.0, 1.0, 1.0, 9.0), det(10.0, 0.0, 1.0, 1.0, 5.0)];
        let r = rerank_by_overlap_counts(&d, &[10, 20, 5]);
        let s: Vec<f64> = r.iter().map(|d| d.score).collect();
        assert!((s[0] - 6.67).abs() < 0.01 && (s[1] - 9.0).abs() < 1e-12 && (s[2] - 1.67).abs() < 0.01);
    }

    #[test]
    fn overlap_rerank_ties_and_singletons() {
        let one = rerank_overlap(&[det(0.0, 0.0, 5.0, 5.0, 3.0)], 0.65);
        assert_eq!(one[0].score, 3.0);
        let two = rerank_overlap(&[det(0.0, 0.0, 5.0, 5.0, 2.0), det(50.0, 0.0, 5.0, 5.0, 2.0)], 0.65);
        assert_eq!(two[0].score, 1.0);
        assert_eq!(two[1].score, 2.0);
    }

    #[test]
    fn normalization_endpoints_and_degenerate() {
        let d = [det(0.0, 0.0, 1.0, 1.0, -2.0), det(0.0, 0.0, 1.0, 1.0, 2.0), det(0.0, 0.0, 1.0, 1.0, 5.0)];
        let n = rerank_normalization(&d, |_| Some((-2.0, 2.0))).unwrap();
        let s: Vec<f64> = n.detections.iter().map(|d| d.score).collect();
        assert_eq!(s, [0.0, 1.0, 1.0]);
        assert!(n.degenerate_views.is_empty());
        let n = rerank_normalization(&d, |_| Some((1.0, 1.0))).unwrap();
        assert!(n.detections.iter().all(|d| d.score == 1.0));
        assert_eq!(n.degenerate_views, [1]);
        assert!(rerank_normalization(&d, |_| None).is_err());
    }

    #[test]
    fn sum_overlap_cases() {
        let iso = rerank_sum_overlap(&[det(0.0, 0.0, 4.0, 4.0, 1.5)], 0.65);
        assert_eq!(iso[0].score, 1.5);
        let tri = rerank_sum_overlap(
            &[det(0.0, 0.0, 10.0, 10.0, 1.0), det(0.0, 0.0, 10.0, 10.0, 2.0), det(0.5, 0.0, 10.0, 10.0, 3.0)],
            0.65,
        );
        assert!(tri.iter().all(|d| d.score == 6.0));
    }

    #[test]
    fn nms_basic() {
        let d = [det(0.0, 0.0, 10.0, 10.0, 1.0), det(0.0, 0.0, 10.0, 10.0, 2.0)];
        let k = nms_greedy(&d, 0.65);
        assert_eq!(k.len(), 1);
        assert_eq!(k[0].score, 2.0);
        // nested box: min-area overlap 1 although Jaccard is small
        let k = nms_greedy(&[det(0.0, 0.0, 100.0, 100.0, 2.0), det(10.0, 10.0, 10.0, 10.0, 1.0)], 0.65);
        assert_eq!(k.len(), 1);
    }

    #[test]
    fn combination_mean() {
        let d = [det(0.0, 0.0, 10.0, 10.0, 1.0), det(2.0, 0.0, 10.0, 10.0, 1.0)];
        let m = merge_combination(&d, 0.65, CombinationWeights::Score);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].x, m[0].y, m[0].w, m[0].h), (1.0, 0.0, 10.0, 10.0));
        let d = [det(0.0, 0.0, 10.0, 10.0, 3.0), det(2.0, 0.0, 10.0, 10.0, 1.0), det(40.0, 0.0, 10.0, 10.0, 0.5)];
        let m = merge_combination(&d, 0.65, CombinationWeights::Score);
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].x, 0.5);
        assert_eq!(m[0].score, 3.0);
        assert_eq!(m[1], d[2]);
    }

    #[test]
    fn adjustment_and_inverse() {
        let b = BBox::new(10.0, 10.0, 20.0, 20.0);
        assert_eq!(AdjustmentParams::IDENTITY.apply(&b), b);
        let p = AdjustmentParams {
            dx: 0.1,
            ..AdjustmentParams::IDENTITY
        };
        assert_eq!(p.apply(&b).center().0, b.center().0 + 2.0);
        let p = AdjustmentParams {
            dx: -0.07,
            dy: 0.12,
            sw: 1.3,
            sh: 0.8,
        };
        let back = p.inverse().apply(&p.apply(&b));
        for (u, v) in [(back.x, b.x), (back.y, b.y), (back.w, b.w), (back.h, b.h)] {
            assert!((u - v).abs() < 1e-9);
        }
        assert!(AdjustmentParams { sw: 0.0, ..p }.validate().is_err());
    }
}
