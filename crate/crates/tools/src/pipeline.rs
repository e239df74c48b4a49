//! Training-set assembly and multi-view training.

use std::sync::Arc;

use acf_core::boosting::{adaboost_train, NegativeSource, TrainReport};
use acf_core::channels::patch_side;
use acf_core::boosting::CascadeMode;
use acf_core::detector::{raw_multiview_detections, MultiViewModel, ScanStats, ViewSource};
use acf_core::eval::Annotation;
use acf_core::postprocess::{fuse, FusionConfig};
use acf_core::pyramid::{build_pyramid, PyramidConfig, PyramidLevel};
use acf_core::rng::SeededRng;
use acf_core::{BBox, ChannelConfig, Image};

use crate::config::RunConfig;
use crate::error::{ToolError, ToolResult};
use crate::formats::DetectionMap;
use crate::synth::{crop_with_context, generate_image, image_id, SynthConfig};

/// A training window with its context margin, at patch resolution, plus
/// misaligned copies used only to calibrate the cascade thresholds.
#[derive(Debug, Clone)]
pub struct PositivePatch {
    pub patch: Image,
    pub jittered: Vec<Image>,
    pub yaw: Option<u32>,
}

/// Context on each side of the window as a fraction of the window side.
pub fn context_fraction(channels: &ChannelConfig, window: usize) -> f64 {
    (channels.context_cells() * channels.shrink) as f64 / window as f64
}

/// Box misalignment of calibration copies: shifts up to `max_shift` of the
/// box side and scale changes up to `1 ± max_scale`, uniform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub copies: usize,
    pub max_shift: f64,
    pub max_scale: f64,
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        copies: 0,
        max_shift: 0.0,
        max_scale: 0.0,
    };

    /// The worst misalignment between a target and the nearest scanned
    /// window: half the stride and half a pyramid scale step.
    pub fn for_scan(run: &RunConfig) -> Jitter {
        let spo = run.pyramid.scales_per_octave as f64;
        Jitter {
            copies: run.calibration_copies,
            max_shift: (run.stride * run.channels.shrink) as f64 / 2.0 / run.window_size as f64,
            max_scale: (0.5 / spo).exp2() - 1.0,
        }
    }

    fn apply(&self, b: &BBox, rng: &mut SeededRng) -> BBox {
        let s = 1.0 + self.max_scale * (2.0 * rng.next_f64() - 1.0);
        let (cx, cy) = b.center();
        let (w, h) = (b.w * s, b.h * s);
        let dx = self.max_shift * w * (2.0 * rng.next_f64() - 1.0);
        let dy = self.max_shift * h * (2.0 * rng.next_f64() - 1.0);
        BBox::new(cx - w / 2.0 + dx, cy - h / 2.0 + dy, w, h)
    }
}

/// Patches for every non-ignored annotation of one image.
pub fn extract_positives(
    image: &Image,
    annotations: &[Annotation],
    channels: &ChannelConfig,
    window: usize,
    jitter: &Jitter,
    rng: &mut SeededRng,
) -> Vec<PositivePatch> {
    let side = patch_side(channels, window);
    let ctx = context_fraction(channels, window);
    annotations
        .iter()
        .filter(|a| !a.ignore)
        .map(|a| PositivePatch {
            patch: crop_with_context(image, &a.bbox, ctx, side),
            jittered: (0..jitter.copies)
                .map(|_| crop_with_context(image, &jitter.apply(&a.bbox, rng), ctx, side))
                .collect(),
            yaw: a.yaw,
        })
        .collect()
}

// RNG stream namespace for calibration jitter, apart from image rendering
const JITTER_STREAM: u64 = 0x6a69_7474;

fn jitter_rng(seed: u64, index: usize) -> SeededRng {
    SeededRng::with_stream(seed ^ JITTER_STREAM, index as u64)
}

/// Positives of every image of a synthetic set.
pub fn synth_positives(config: &SynthConfig, channels: &ChannelConfig, window: usize, jitter: &Jitter) -> Vec<PositivePatch> {
    let mut out = Vec::new();
    for i in 0..config.image_count {
        let img = generate_image(config, i);
        let anns: Vec<Annotation> = img
            .targets
            .iter()
            .map(|t| Annotation {
                bbox: t.bbox,
                ignore: false,
                yaw: Some(t.yaw_level),
            })
            .collect();
        out.extend(extract_positives(&img.image, &anns, channels, window, jitter, &mut jitter_rng(config.rng_seed, i)));
    }
    out
}

/// Positives of annotated image files. Images are looked up by id (file
/// stem) in `image_dir`; annotations without a matching file are an error.
pub fn file_positives(
    image_dir: &std::path::Path,
    annotations: &acf_core::AnnotationSet,
    channels: &ChannelConfig,
    window: usize,
    jitter: &Jitter,
) -> ToolResult<Vec<PositivePatch>> {
    let files = crate::imageio::list_images(image_dir)?;
    let by_id: std::collections::BTreeMap<String, &std::path::PathBuf> =
        files.iter().map(|p| (crate::imageio::image_id_of(p), p)).collect();
    let mut out = Vec::new();
    for (i, (id, anns)) in annotations.images.iter().enumerate() {
        let path = by_id
            .get(id)
            .ok_or_else(|| ToolError::Validation(format!("no image file for annotated id {id}")))?;
        let image = crate::imageio::load_image(path)?;
        out.extend(extract_positives(&image, anns, channels, window, jitter, &mut jitter_rng(0, i)));
    }
    Ok(out)
}

/// Unfused detections of every view on every image of a synthetic set.
pub fn synth_raw_detections(
    model: &MultiViewModel,
    config: &SynthConfig,
    mode: CascadeMode,
) -> ToolResult<(DetectionMap, ScanStats)> {
    let mut map = DetectionMap::new();
    let mut total = ScanStats::default();
    for i in 0..config.image_count {
        let img = generate_image(config, i);
        let levels = model.build_pyramid(&img.image)?;
        let (raw, stats) = raw_multiview_detections(&levels, model, mode);
        for s in &stats {
            total.merge(s);
        }
        map.insert(image_id(i), raw);
    }
    Ok((map, total))
}

/// Applies fusion to per-image raw detections.
pub fn fuse_all(raw: &DetectionMap, model: &MultiViewModel, fusion: &FusionConfig) -> ToolResult<DetectionMap> {
    let mut out = DetectionMap::new();
    for (id, dets) in raw {
        let fused = fuse(dets.clone(), model.models(), &model.adjustments, fusion)?;
        out.insert(id.clone(), fused.detections);
    }
    Ok(out)
}

/// Fused detections of the model's own fusion settings on a synthetic set.
pub fn detect_synth(model: &MultiViewModel, config: &SynthConfig, mode: CascadeMode) -> ToolResult<(DetectionMap, ScanStats)> {
    let (raw, stats) = synth_raw_detections(model, config, mode)?;
    Ok((fuse_all(&raw, model, &model.fusion)?, stats))
}

/// Detection count of a map.
pub fn detection_count(map: &DetectionMap) -> usize {
    map.values().map(Vec::len).sum()
}

/// Negative images rendered on demand from the synthetic generator.
pub struct SynthNegatives {
    pub config: SynthConfig,
    pub pyramid: PyramidConfig,
}

impl NegativeSource for SynthNegatives {
    fn len(&self) -> usize {
        self.config.image_count
    }

    fn levels(&self, index: usize, channels: &ChannelConfig, window: usize) -> acf_core::Result<Arc<Vec<PyramidLevel>>> {
        let img = generate_image(&self.config.negatives(), index);
        Ok(Arc::new(build_pyramid(&img.image, channels, &self.pyramid, window)?))
    }
}

/// Negative images loaded from files on demand.
pub struct FileNegatives {
    pub paths: Vec<std::path::PathBuf>,
    pub pyramid: PyramidConfig,
}

impl NegativeSource for FileNegatives {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn levels(&self, index: usize, channels: &ChannelConfig, window: usize) -> acf_core::Result<Arc<Vec<PyramidLevel>>> {
        let img = crate::imageio::load_image(&self.paths[index])
            .map_err(|e| acf_core::Error::InvalidImage(e.to_string()))?;
        Ok(Arc::new(build_pyramid(&img, channels, &self.pyramid, window)?))
    }
}

/// Number of independently trained views for `yaw_levels`; the rest are
/// mirrors.
pub fn trained_view_count(yaw_levels: u32) -> usize {
    (yaw_levels as usize).div_ceil(2)
}

/// Trained view (0-based) and whether the patch must be flipped, for a
/// yaw level in `1..=yaw_levels`.
pub fn view_for_yaw(yaw: u32, yaw_levels: u32) -> (usize, bool) {
    let mirror = yaw_levels + 1 - yaw;
    if yaw <= mirror {
        (yaw as usize - 1, false)
    } else {
        (mirror as usize - 1, true)
    }
}

/// Training and calibration patches of one trained view.
#[derive(Debug, Clone, Default)]
pub struct ViewPositives {
    pub training: Vec<Image>,
    pub calibration: Vec<Image>,
}

/// Groups positives by trained view, flipping those from mirrored yaw
/// levels.
pub fn partition_positives(positives: &[PositivePatch], yaw_levels: u32) -> ToolResult<Vec<ViewPositives>> {
    let k = trained_view_count(yaw_levels);
    let mut groups = vec![ViewPositives::default(); k];
    for p in positives {
        let (view, flip) = if yaw_levels == 1 {
            (0, false)
        } else {
            let yaw = p
                .yaw
                .filter(|y| (1..=yaw_levels).contains(y))
                .ok_or_else(|| ToolError::Validation(format!("positive without a yaw level in 1..={yaw_levels}")))?;
            view_for_yaw(yaw, yaw_levels)
        };
        let orient = |img: &Image| if flip { img.flip_horizontal() } else { img.clone() };
        groups[view].training.push(orient(&p.patch));
        groups[view].calibration.extend(p.jittered.iter().map(orient));
    }
    Ok(groups)
}

/// Trains one cascade per trained view and assembles the multi-view model,
/// mirrored views referencing their trained counterparts.
pub fn train_multiview(
    positives: &[PositivePatch],
    negatives: &dyn NegativeSource,
    run: &RunConfig,
    mut progress: impl FnMut(usize, &TrainReport),
) -> ToolResult<(MultiViewModel, Vec<TrainReport>)> {
    run.validate()?;
    let groups = partition_positives(positives, run.yaw_levels)?;
    let mut sources = Vec::with_capacity(run.yaw_levels as usize);
    let mut reports = Vec::new();
    for (v, group) in groups.iter().enumerate() {
        if group.training.is_empty() {
            return Err(ToolError::Validation(format!("no positives for view {}", v + 1)));
        }
        let mut train = run.train.clone();
        train.rng_seed = run.train.rng_seed.wrapping_add(v as u64);
        let (model, report) = adaboost_train(&group.training, &group.calibration, negatives, &train, &run.channels, run.window_size)?;
        progress(v, &report);
        reports.push(report);
        sources.push(ViewSource::Trained(model));
    }
    let k = groups.len();
    for idx in k..run.yaw_levels as usize {
        sources.push(ViewSource::Mirror {
            of: run.yaw_levels as usize - 1 - idx,
        });
    }
    let model = MultiViewModel::new(
        sources,
        run.view_adjustments(),
        run.fusion.clone(),
        run.pyramid.clone(),
        run.stride,
    )?;
    Ok((model, reports))
}
