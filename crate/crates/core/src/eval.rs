//! Ground truth, greedy one-to-one matching, average precision and ROC.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Annotation {
    pub bbox: BBox,
    /// Matches absorb detections without counting as true or false positives.
    pub ignore: bool,
    /// Yaw level of the target, when known.
    pub yaw: Option<u32>,
}

impl Annotation {
    pub fn new(bbox: BBox) -> Self {
        Annotation {
            bbox,
            ignore: false,
            yaw: None,
        }
    }
}

/// Ground truth per image id, plus a free-form annotation style tag.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnnotationSet {
    pub style: String,
    pub images: BTreeMap<String, Vec<Annotation>>,
}

impl AnnotationSet {
    pub fn new(style: impl Into<String>) -> Self {
        AnnotationSet {
            style: style.into(),
            images: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, image_id: impl Into<String>, annotation: Annotation) {
        self.images.entry(image_id.into()).or_default().push(annotation);
    }

    pub fn validate(&self) -> Result<()> {
        for (id, anns) in &self.images {
            if let Some(a) = anns.iter().find(|a| !a.bbox.is_valid()) {
                return Err(Error::InvalidConfig(format!("image {id}: invalid box {:?}", a.bbox)));
            }
        }
        Ok(())
    }

    /// Annotations that are not ignore-flagged.
    pub fn positives(&self) -> usize {
        self.images.values().flatten().filter(|a| !a.ignore).count()
    }

    pub fn len(&self) -> usize {
        self.images.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Axis-aligned bounding rectangle of an ellipse with semi-axes `major`,
/// `minor`, the major axis at `angle` radians from the x axis.
pub fn ellipse_to_bbox(major: f64, minor: f64, angle: f64, cx: f64, cy: f64) -> BBox {
    let (s, c) = (libm::sin(angle), libm::cos(angle));
    let hx = libm::sqrt(major * major * c * c + minor * minor * s * s);
    let hy = libm::sqrt(major * major * s * s + minor * minor * c * c);
    BBox::new(cx - hx, cy - hy, 2.0 * hx, 2.0 * hy)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EvalConfig {
    pub jaccard_threshold: f64,
    /// False-positives-per-image values at which ROC readouts are taken.
    pub fppi_points: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            jaccard_threshold: 0.5,
            fppi_points: alloc::vec![1.0],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.jaccard_threshold > 0.0 && self.jaccard_threshold <= 1.0) {
            return Err(Error::InvalidConfig("Jaccard threshold must be in (0, 1]".into()));
        }
        if self.fppi_points.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidConfig("FPPI points must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MatchLabel {
    Tp,
    Fp,
    /// Matched an ignore-flagged annotation.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub labels: Vec<MatchLabel>,
    /// Jaccard overlap of each true positive with its annotation, else 0.
    pub overlaps: Vec<f64>,
    /// Which annotation each true positive matched.
    pub matched_to: Vec<Option<usize>>,
    pub gt_matched: Vec<bool>,
}

/// Greedy one-to-one matching of detections, given in descending score
/// order. Each detection takes the unmatched non-ignored annotation of
/// highest Jaccard overlap (lowest index on ties) when that overlap reaches
/// `threshold`; otherwise it is absorbed by any ignore-flagged annotation it
/// overlaps enough, or else it is a false positive.
pub fn match_detections(boxes: &[BBox], annotations: &[Annotation], threshold: f64) -> MatchResult {
    let mut gt_matched = alloc::vec![false; annotations.len()];
    let mut labels = Vec::with_capacity(boxes.len());
    let mut overlaps = Vec::with_capacity(boxes.len());
    let mut matched_to = Vec::with_capacity(boxes.len());
    for b in boxes {
        let mut best: Option<(usize, f64)> = None;
        for (k, a) in annotations.iter().enumerate() {
            if a.ignore || gt_matched[k] {
                continue;
            }
            let j = b.jaccard(&a.bbox);
            if j >= threshold && best.is_none_or(|(_, bj)| j > bj) {
                best = Some((k, j));
            }
        }
        match best {
            Some((k, j)) => {
                gt_matched[k] = true;
                labels.push(MatchLabel::Tp);
                overlaps.push(j);
                matched_to.push(Some(k));
            }
            None => {
                let absorbed = annotations.iter().any(|a| a.ignore && b.jaccard(&a.bbox) >= threshold);
                labels.push(if absorbed { MatchLabel::Ignored } else { MatchLabel::Fp });
                overlaps.push(0.0);
                matched_to.push(None);
            }
        }
    }
    MatchResult {
        labels,
        overlaps,
        matched_to,
        gt_matched,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredLabel {
    pub score: f64,
    pub label: MatchLabel,
    pub overlap: f64,
}

/// All-points interpolated average precision of true/false positive labels
/// in descending score order.
pub fn average_precision(is_tp: &[bool], total_positives: usize) -> f64 {
    if total_positives == 0 || is_tp.is_empty() {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(is_tp.len());
    let mut tp = 0usize;
    for (i, &t) in is_tp.iter().enumerate() {
        tp += t as usize;
        precision.push(tp as f64 / (i + 1) as f64);
    }
    // interpolated precision: running max from the right
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let step = 1.0 / total_positives as f64;
    is_tp
        .iter()
        .zip(&precision)
        .filter(|(&t, _)| t)
        .map(|(_, &p)| p * step)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RocMode {
    /// A match counts 1.
    Discrete,
    /// A match counts its Jaccard overlap.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocPoint {
    pub false_positives: usize,
    pub fppi: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocCurve {
    pub mode: RocMode,
    /// Starts at the origin; one point per distinct score threshold.
    pub points: Vec<RocPoint>,
    /// `(fppi, tpr)` at the requested FPPI values.
    pub readouts: Vec<(f64, f64)>,
}

impl RocCurve {
    /// TPR linearly interpolated at `fppi`; beyond the curve it stays at the
    /// last value.
    pub fn tpr_at(&self, fppi: f64) -> f64 {
        let pts = &self.points;
        let Some(i) = pts.iter().rposition(|p| p.fppi <= fppi) else {
            return 0.0;
        };
        match pts[i + 1..].iter().find(|p| p.fppi > fppi) {
            None => pts[i].tpr,
            Some(next) => {
                let a = &pts[i];
                a.tpr + (next.tpr - a.tpr) * (fppi - a.fppi) / (next.fppi - a.fppi)
            }
        }
    }
}

/// Sweeps the score threshold over `labels` (descending score order,
/// ignored detections skipped).
pub fn roc_curve(
    labels: &[ScoredLabel],
    total_positives: usize,
    image_count: usize,
    mode: RocMode,
    fppi_points: &[f64],
) -> RocCurve {
    let images = image_count.max(1) as f64;
    let denom = total_positives.max(1) as f64;
    let mut points = alloc::vec![RocPoint {
        false_positives: 0,
        fppi: 0.0,
        tpr: 0.0
    }];
    let (mut tp, mut fp) = (0.0f64, 0usize);
    let kept: Vec<&ScoredLabel> = labels.iter().filter(|l| l.label != MatchLabel::Ignored).collect();
    for (i, l) in kept.iter().enumerate() {
        match l.label {
            MatchLabel::Tp => {
                tp += match mode {
                    RocMode::Discrete => 1.0,
                    RocMode::Continuous => l.overlap,
                }
            }
            _ => fp += 1,
        }
        let group_ends = kept.get(i + 1).is_none_or(|n| n.score != l.score);
        if group_ends {
            points.push(RocPoint {
                false_positives: fp,
                fppi: fp as f64 / images,
                tpr: tp / denom,
            });
        }
    }
    let mut curve = RocCurve {
        mode,
        points,
        readouts: Vec::new(),
    };
    curve.readouts = fppi_points.iter().map(|&f| (f, curve.tpr_at(f))).collect();
    curve
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalSummary {
    pub average_precision: f64,
    pub total_positives: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub ignored: usize,
    pub image_count: usize,
    pub discrete: RocCurve,
    pub continuous: RocCurve,
}

/// Matches every image's detections (sorted by the detection total order)
/// and reduces the labels into AP and both ROC curves. Images present on
/// only one side still count.
pub fn evaluate(
    detections: &BTreeMap<String, Vec<Detection>>,
    annotations: &AnnotationSet,
    config: &EvalConfig,
) -> EvalSummary {
    let mut ids: Vec<&String> = annotations.images.keys().chain(detections.keys()).collect();
    ids.sort();
    ids.dedup();
    let empty_a: Vec<Annotation> = Vec::new();
    let empty_d: Vec<Detection> = Vec::new();
    let mut all: Vec<ScoredLabel> = Vec::new();
    for id in &ids {
        let anns = annotations.images.get(*id).unwrap_or(&empty_a);
        let mut dets = detections.get(*id).unwrap_or(&empty_d).clone();
        crate::detector::sort_detections(&mut dets);
        let boxes: Vec<BBox> = dets.iter().map(Detection::bbox).collect();
        let m = match_detections(&boxes, anns, config.jaccard_threshold);
        all.extend(dets.iter().zip(m.labels).zip(m.overlaps).map(|((d, label), overlap)| ScoredLabel {
            score: d.score,
            label,
            overlap,
        }));
    }
    // stable: equal scores keep image-id order
    all.sort_by(|a, b| b.score.total_cmp(&a.score));
    let total_positives = annotations.positives();
    let is_tp: Vec<bool> = all
        .iter()
        .filter(|l| l.label != MatchLabel::Ignored)
        .map(|l| l.label == MatchLabel::Tp)
        .collect();
    let count = |k: MatchLabel| all.iter().filter(|l| l.label == k).count();
    EvalSummary {
        average_precision: average_precision(&is_tp, total_positives),
        total_positives,
        true_positives: count(MatchLabel::Tp),
        false_positives: count(MatchLabel::Fp),
        ignored: count(MatchLabel::Ignored),
        image_count: ids.len(),
        discrete: roc_curve(&all, total_positives, ids.len(), RocMode::Discrete, &config.fppi_points),
        continuous: roc_curve(&all, total_positives, ids.len(), RocMode::Continuous, &config.fppi_points),
    }
}
