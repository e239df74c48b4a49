//! Sliding-window detection, mirrored views and the multi-view model.

pub mod sliding;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::boosting::{CascadeMode, SoftCascadeModel, WeightedTree};
use crate::channels::mirror_channel_permutation;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::image::Image;
use crate::postprocess::{self, AdjustmentParams, FusionConfig};
use crate::pyramid::{build_pyramid, PyramidConfig, PyramidLevel};

pub use sliding::CompiledCascade;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    pub view_id: u32,
    /// Nominal scale of the pyramid level the window came from.
    pub scale: f64,
    /// Trees that voted positive for the window.
    #[cfg_attr(feature = "serde", serde(default))]
    pub votes: u32,
}

impl Detection {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.x, self.y, self.w, self.h)
    }

    pub fn with_bbox(self, b: BBox) -> Detection {
        Detection {
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
            ..self
        }
    }

    /// Deterministic total order: score descending, then view, scale, x, y
    /// ascending.
    pub fn total_cmp(&self, other: &Detection) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.view_id.cmp(&other.view_id))
            .then(self.scale.total_cmp(&other.scale))
            .then(self.x.total_cmp(&other.x))
            .then(self.y.total_cmp(&other.y))
    }
}

/// Sorts by [`Detection::total_cmp`].
pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(Detection::total_cmp);
}

/// The horizontally mirrored detector: feature `(c, x, y)` becomes
/// `(c', G - 1 - x, y)` with orientation bin `k` mapped to `(bins - k) mod
/// bins`. Everything else is copied.
pub fn mirror_model(model: &SoftCascadeModel) -> Result<SoftCascadeModel> {
    let perm = mirror_channel_permutation(&model.descriptors, model.channel_config.num_orientation_bins)?;
    let g = model.grid() as u32;
    let gg = g * g;
    let remap = |f: u32| -> Result<u32> {
        let (c, rest) = ((f / gg) as usize, f % gg);
        let (y, x) = (rest / g, rest % g);
        let c2 = *perm
            .get(c)
            .ok_or_else(|| Error::InvalidModel(format!("feature {f} names channel {c}")))?;
        Ok(c2 as u32 * gg + y * g + (g - 1 - x))
    };
    let mut trees = Vec::with_capacity(model.trees.len());
    for wt in &model.trees {
        let mut tree = wt.tree;
        for node in &mut tree.nodes {
            node.feature = remap(node.feature)?;
        }
        trees.push(WeightedTree { tree, alpha: wt.alpha });
    }
    Ok(SoftCascadeModel {
        trees,
        ..model.clone()
    })
}

/// Counters from one or more sliding-window scans.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub windows: u64,
    pub passed: u64,
    pub rejected: u64,
    pub trees_evaluated: u64,
    pub trees_in_rejected: u64,
    /// Windows rejected at each stage.
    pub stage_rejections: Vec<u64>,
}

impl ScanStats {
    pub fn merge(&mut self, other: &ScanStats) {
        self.windows += other.windows;
        self.passed += other.passed;
        self.rejected += other.rejected;
        self.trees_evaluated += other.trees_evaluated;
        self.trees_in_rejected += other.trees_in_rejected;
        if self.stage_rejections.len() < other.stage_rejections.len() {
            self.stage_rejections.resize(other.stage_rejections.len(), 0);
        }
        for (a, b) in self.stage_rejections.iter_mut().zip(&other.stage_rejections) {
            *a += b;
        }
    }

    pub fn mean_trees_per_window(&self) -> f64 {
        if self.windows == 0 {
            0.0
        } else {
            self.trees_evaluated as f64 / self.windows as f64
        }
    }

    pub fn mean_trees_per_rejected(&self) -> f64 {
        if self.rejected == 0 {
            0.0
        } else {
            self.trees_in_rejected as f64 / self.rejected as f64
        }
    }
}

/// Raw detections of one cascade over a pyramid, with scan counters.
///
/// Every grid-aligned window on a `stride`-cell lattice is evaluated; windows
/// that pass every stage with `score >= score_threshold` are reported, boxes
/// in source-image pixels. In [`CascadeMode::Exhaustive`] all trees are
/// evaluated but pass/reject is decided exactly as in
/// [`CascadeMode::Enabled`].
pub fn detect_single_view_with_stats(
    levels: &[PyramidLevel],
    model: &SoftCascadeModel,
    stride: usize,
    score_threshold: f64,
    mode: CascadeMode,
) -> (Vec<Detection>, ScanStats) {
    let mut out = Vec::new();
    let mut stats = ScanStats {
        stage_rejections: vec![0; model.trees.len()],
        ..ScanStats::default()
    };
    let shrink = model.channel_config.shrink as f64;
    let window = model.window_size as f64;
    for level in levels {
        let compiled = CompiledCascade::new(model, &level.stack);
        compiled.scan(stride, mode, |x, y, o| {
            stats.windows += 1;
            stats.trees_evaluated += o.trees_evaluated as u64;
            match o.rejected_at {
                Some(t) => {
                    stats.rejected += 1;
                    stats.trees_in_rejected += o.trees_evaluated as u64;
                    stats.stage_rejections[t] += 1;
                }
                None => {
                    stats.passed += 1;
                    if o.score >= score_threshold {
                        out.push(Detection {
                            x: x as f64 * shrink / level.scale_x,
                            y: y as f64 * shrink / level.scale_y,
                            w: window / level.scale_x,
                            h: window / level.scale_y,
                            score: o.score,
                            view_id: model.view_id,
                            scale: level.scale,
                            votes: o.positive_votes,
                        });
                    }
                }
            }
        });
    }
    (out, stats)
}

pub fn detect_single_view(
    levels: &[PyramidLevel],
    model: &SoftCascadeModel,
    stride: usize,
    score_threshold: f64,
) -> Vec<Detection> {
    detect_single_view_with_stats(levels, model, stride, score_threshold, CascadeMode::Enabled).0
}

/// Where a view's cascade comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewSource {
    Trained(SoftCascadeModel),
    /// Horizontal mirror of the trained view at index `of`.
    Mirror { of: usize },
}

/// Several view-specific cascades sharing one pyramid, plus fusion settings.
///
/// View `i` (0-based) reports detections with `view_id = i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewModel {
    sources: Vec<ViewSource>,
    models: Vec<SoftCascadeModel>,
    pub adjustments: Vec<AdjustmentParams>,
    pub fusion: FusionConfig,
    pub pyramid: PyramidConfig,
    /// Sliding stride in pooled cells.
    pub stride: usize,
}

impl MultiViewModel {
    /// Resolves mirror references and checks that all views agree on window
    /// size and channel configuration.
    pub fn new(
        mut sources: Vec<ViewSource>,
        adjustments: Vec<AdjustmentParams>,
        fusion: FusionConfig,
        pyramid: PyramidConfig,
        stride: usize,
    ) -> Result<Self> {
        for (i, s) in sources.iter_mut().enumerate() {
            if let ViewSource::Trained(m) = s {
                m.view_id = i as u32 + 1;
            }
        }
        if sources.is_empty() {
            return Err(Error::InvalidModel("a multi-view model needs at least one view".into()));
        }
        if adjustments.len() != sources.len() {
            return Err(Error::InvalidModel(format!(
                "{} views but {} adjustments",
                sources.len(),
                adjustments.len()
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidConfig("stride must be positive".into()));
        }
        fusion.validate()?;
        pyramid.validate()?;
        for a in &adjustments {
            a.validate()?;
        }
        let mut models = Vec::with_capacity(sources.len());
        for (i, s) in sources.iter().enumerate() {
            let mut m = match s {
                ViewSource::Trained(m) => m.clone(),
                ViewSource::Mirror { of } => match sources.get(*of) {
                    Some(ViewSource::Trained(m)) => mirror_model(m)?,
                    _ => {
                        return Err(Error::InvalidModel(format!(
                            "view {i} mirrors view {of}, which is not a trained view"
                        )))
                    }
                },
            };
            m.validate()?;
            m.view_id = i as u32 + 1;
            models.push(m);
        }
        let first = &models[0];
        if models
            .iter()
            .any(|m| m.window_size != first.window_size || m.channel_config != first.channel_config)
        {
            return Err(Error::InvalidModel("views disagree on window size or channel config".into()));
        }
        Ok(MultiViewModel {
            sources,
            models,
            adjustments,
            fusion,
            pyramid,
            stride,
        })
    }

    /// Trained views `t_1..t_k` followed by their mirrors in reverse order,
    /// so view `i` and view `n + 1 - i` are mirror images.
    pub fn symmetric(
        trained: Vec<SoftCascadeModel>,
        fusion: FusionConfig,
        pyramid: PyramidConfig,
        stride: usize,
    ) -> Result<Self> {
        let k = trained.len();
        let mut sources: Vec<ViewSource> = trained.into_iter().map(ViewSource::Trained).collect();
        sources.extend((0..k).rev().map(|of| ViewSource::Mirror { of }));
        let adjustments = vec![AdjustmentParams::default(); 2 * k];
        Self::new(sources, adjustments, fusion, pyramid, stride)
    }

    pub fn sources(&self) -> &[ViewSource] {
        &self.sources
    }

    /// Resolved cascades, one per view.
    pub fn models(&self) -> &[SoftCascadeModel] {
        &self.models
    }

    pub fn window_size(&self) -> usize {
        self.models[0].window_size
    }

    pub fn channel_config(&self) -> &crate::channels::ChannelConfig {
        &self.models[0].channel_config
    }

    pub fn build_pyramid(&self, image: &Image) -> Result<Vec<PyramidLevel>> {
        build_pyramid(image, self.channel_config(), &self.pyramid, self.window_size())
    }
}

/// Unfused detections of every view, plus per-view scan counters.
pub fn raw_multiview_detections(
    levels: &[PyramidLevel],
    model: &MultiViewModel,
    mode: CascadeMode,
) -> (Vec<Detection>, Vec<ScanStats>) {
    let mut all = Vec::new();
    let mut stats = Vec::with_capacity(model.models.len());
    for m in &model.models {
        let (d, s) = detect_single_view_with_stats(levels, m, model.stride, f64::NEG_INFINITY, mode);
        all.extend(d);
        stats.push(s);
    }
    (all, stats)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultiViewOutput {
    pub detections: Vec<Detection>,
    pub stats: Vec<ScanStats>,
    /// Views whose score range was degenerate during normalization.
    pub degenerate_views: Vec<u32>,
}

/// Builds the pyramid once, runs every view, then re-ranks, filters by the
/// fusion score threshold, merges across views and applies per-view
/// adjustments. Output is sorted by [`Detection::total_cmp`].
pub fn detect_multiview_full(image: &Image, model: &MultiViewModel) -> Result<MultiViewOutput> {
    let levels = model.build_pyramid(image)?;
    let (raw, stats) = raw_multiview_detections(&levels, model, CascadeMode::Enabled);
    let fused = postprocess::fuse(raw, model.models(), &model.adjustments, &model.fusion)?;
    Ok(MultiViewOutput {
        detections: fused.detections,
        stats,
        degenerate_views: fused.degenerate_views,
    })
}

pub fn detect_multiview(image: &Image, model: &MultiViewModel) -> Result<Vec<Detection>> {
    Ok(detect_multiview_full(image, model)?.detections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::{DepthTwoTree, TreeNode};
    use crate::channels::{compute_channels, ChannelConfig, ChannelKind};
    use crate::rng::SeededRng;

    pub(crate) fn random_model(seed: u64, trees: usize, window: usize) -> SoftCascadeModel {
        let cfg = ChannelConfig::default();
        let g = window / cfg.shrink;
        let nf = cfg.channel_count() * g * g;
        let mut rng = SeededRng::new(seed);
        let trees = (0..trees)
            .map(|_| {
                let node = |rng: &mut SeededRng| TreeNode {
                    feature: rng.below(nf) as u32,
                    threshold: rng.next_f64() as f32 * 0.3,
                };
                let nodes = [node(&mut rng), node(&mut rng), node(&mut rng)];
                let leaves = [0; 4].map(|_| if rng.next_f64() < 0.5 { -1.0 } else { 1.0 });
                WeightedTree {
                    tree: DepthTwoTree { nodes, leaves },
                    alpha: 0.1 + rng.next_f64(),
                }
            })
            .collect::<Vec<_>>();
        let n = trees.len();
        SoftCascadeModel {
            trees,
            stage_thresholds: vec![f64::NEG_INFINITY; n],
            window_size: window,
            descriptors: cfg.descriptors(),
            channel_config: cfg,
            score_range: (-3.0, 3.0),
            view_id: 1,
        }
    }

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = SeededRng::new(seed);
        Image::from_fn(w, h, |_, _| [rng.next_f64() as f32, rng.next_f64() as f32, rng.next_f64() as f32])
    }

    #[test]
    fn mirror_remaps_magnitude_feature() {
        let mut m = random_model(1, 1, 80);
        let mag = m.descriptors.iter().position(|d| d.kind == ChannelKind::Magnitude).unwrap() as u32;
        m.trees[0].tree.nodes[0].feature = mag * 400 + 7 * 20 + 3;
        let mm = mirror_model(&m).unwrap();
        assert_eq!(mm.trees[0].tree.nodes[0].feature, mag * 400 + 7 * 20 + 16);
    }

    #[test]
    fn mirror_is_an_involution() {
        let m = random_model(2, 50, 80);
        assert_eq!(mirror_model(&mirror_model(&m).unwrap()).unwrap(), m);
        let bare = SoftCascadeModel {
            descriptors: Vec::new(),
            ..m
        };
        assert_eq!(mirror_model(&bare), Err(Error::MissingDescriptors));
    }

    #[test]
    fn mirrored_model_on_flipped_window() {
        let m = random_model(3, 64, 16);
        let mm = mirror_model(&m).unwrap();
        for seed in 0..20 {
            let img = noise(16, 16, 100 + seed);
            let a = compute_channels(&img, &m.channel_config).unwrap();
            let b = compute_channels(&img.flip_horizontal(), &m.channel_config).unwrap();
            let sa = m.evaluate(&a.window_features(0, 0, 4), CascadeMode::Disabled).score;
            let sb = mm.evaluate(&b.window_features(0, 0, 4), CascadeMode::Disabled).score;
            assert!((sa - sb).abs() < 1e-6);
        }
    }

    #[test]
    fn compiled_matches_flat_features() {
        let mut m = random_model(4, 40, 16);
        m.stage_thresholds = (0..40).map(|t| -0.3 * t as f64 * 0.1).collect();
        let stack = compute_channels(&noise(40, 36, 5), &m.channel_config).unwrap();
        let c = CompiledCascade::new(&m, &stack);
        assert_eq!(c.positions(), (7, 6));
        for y in 0..6 {
            for x in 0..7 {
                let f = stack.window_features(x, y, 4);
                for mode in [CascadeMode::Enabled, CascadeMode::Exhaustive, CascadeMode::Disabled] {
                    assert_eq!(c.evaluate_at(x, y, mode), m.evaluate(&f, mode));
                }
            }
        }
    }

    #[test]
    fn window_count_arithmetic() {
        let m = random_model(6, 2, 80);
        let stack = compute_channels(&noise(120, 100, 6), &m.channel_config).unwrap();
        let c = CompiledCascade::new(&m, &stack);
        let mut n = 0;
        c.scan(1, CascadeMode::Enabled, |_, _, _| n += 1);
        assert_eq!(n, 66);
        let mut n2 = 0;
        c.scan(2, CascadeMode::Enabled, |_, _, _| n2 += 1);
        assert_eq!(n2, 6 * 3);
    }

    #[test]
    fn threshold_above_max_gives_nothing() {
        let m = random_model(7, 10, 16);
        let levels = build_pyramid(&Image::constant(48, 40, [0.5; 3]), &m.channel_config, &PyramidConfig::default(), 16).unwrap();
        let max: f64 = m.trees.iter().map(|t| t.alpha).sum();
        assert!(detect_single_view(&levels, &m, 1, max + 1.0).is_empty());
        let all = detect_single_view(&levels, &m, 1, f64::NEG_INFINITY);
        for d in &all {
            assert!(d.x >= 0.0 && d.y >= 0.0 && d.x + d.w <= 48.0 + 1e-9 && d.y + d.h <= 40.0 + 1e-9);
        }
    }

    #[test]
    fn multiview_rejects_bad_mirror_reference() {
        let m = random_model(8, 4, 16);
        let r = MultiViewModel::new(
            vec![ViewSource::Trained(m.clone()), ViewSource::Mirror { of: 1 }],
            vec![AdjustmentParams::default(); 2],
            FusionConfig::default(),
            PyramidConfig::default(),
            1,
        );
        assert!(r.is_err());
        let ok = MultiViewModel::symmetric(vec![m], FusionConfig::default(), PyramidConfig::default(), 1).unwrap();
        assert_eq!(ok.models().len(), 2);
        assert_eq!(ok.models()[1].view_id, 2);
    }
}
