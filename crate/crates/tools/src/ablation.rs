//! Fusion and channel-design sweeps on the synthetic splits.
//!
//! One multi-view model is trained per distinct channel configuration. The
//! fusion matrix reuses the raw detections of the base model, so every
//! re-ranking and merging row sees identical classifier output. Rows carry
//! no timings, so reports of identical inputs compare equal.

use acf_core::boosting::{CachedNegatives, CascadeMode};
use acf_core::detector::MultiViewModel;
use acf_core::eval::{evaluate, AnnotationSet};
use acf_core::postprocess::{FusionConfig, Merging, Rerank};
use acf_core::ChannelConfig;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::ToolResult;
use crate::formats::DetectionMap;
use crate::pipeline::{fuse_all, Jitter, synth_positives, synth_raw_detections, train_multiview, SynthNegatives};
use crate::synth::{annotations, SynthSplits};

pub const REFERENCE_NOTE: &str = "Reference context, not asserted: published AFW AP (%) with Greedy* NMS \
is None 91.7, Normalization 93.5, NewScore 92.9, OverlapRerank 95.0, SumofOverlap 93.7; \
Combination merging 93.4. Synthetic values below are reported for ordering only.";

/// A channel configuration evaluated with the run's fusion settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelVariant {
    pub name: String,
    pub channels: ChannelConfig,
}

/// Single and multi-local-scale variants of `base`.
pub fn scale_variants(base: &ChannelConfig) -> Vec<ChannelVariant> {
    vec![
        ChannelVariant {
            name: "single-scale".into(),
            channels: ChannelConfig {
                pre_smooth_radii: vec![1],
                ..base.clone()
            },
        },
        ChannelVariant {
            name: "multi-local-scale".into(),
            channels: ChannelConfig {
                pre_smooth_radii: vec![1, 2],
                ..base.clone()
            },
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub average_precision: f64,
    /// Discrete true positive rate at 1 false positive per image.
    pub tpr_at_1_fppi: f64,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRow {
    pub rerank: String,
    pub merging: String,
    pub result: Result<Metrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub name: String,
    pub feature_count: usize,
    pub result: Result<Metrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub reference: String,
    pub train_positives: usize,
    pub test_positives: usize,
    pub base_feature_count: usize,
    pub fusion: Vec<FusionRow>,
    pub channels: Vec<ChannelRow>,
}

impl AblationReport {
    pub fn fusion_ap(&self, rerank: Rerank, merging: Merging) -> Option<f64> {
        self.fusion
            .iter()
            .find(|r| r.rerank == rerank.name() && r.merging == merging.name())
            .and_then(|r| r.result.as_ref().ok())
            .map(|m| m.average_precision)
    }

    /// Plain-text table of every row.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("# Ablation\n\n");
        s.push_str(&self.reference);
        s.push_str(&format!(
            "\n\ntrain positives {}, test positives {}, base feature pool {}\n\n",
            self.train_positives, self.test_positives, self.base_feature_count
        ));
        s.push_str(&format!("{:<16} {:<14} {:>8} {:>10} {:>8}\n", "rerank", "merging", "AP(%)", "TPR@1FPPI", "dets"));
        for r in &self.fusion {
            s.push_str(&format!("{:<16} {:<14} {}\n", r.rerank, r.merging, metrics_cells(&r.result)));
        }
        s.push_str(&format!("\n{:<20} {:>9} {:>8} {:>10} {:>8}\n", "channels", "features", "AP(%)", "TPR@1FPPI", "dets"));
        for r in &self.channels {
            s.push_str(&format!("{:<20} {:>9} {}\n", r.name, r.feature_count, metrics_cells(&r.result)));
        }
        s
    }
}

fn metrics_cells(r: &Result<Metrics, String>) -> String {
    match r {
        Ok(m) => format!("{:>8.2} {:>10.3} {:>8}", 100.0 * m.average_precision, m.tpr_at_1_fppi, m.detections),
        Err(e) => format!("failed: {e}"),
    }
}

fn metrics(dets: &DetectionMap, truth: &AnnotationSet, run: &RunConfig) -> Metrics {
    let eval = acf_core::EvalConfig {
        fppi_points: vec![1.0],
        ..run.eval.clone()
    };
    let summary = evaluate(dets, truth, &eval);
    Metrics {
        average_precision: summary.average_precision,
        tpr_at_1_fppi: summary.discrete.tpr_at(1.0),
        detections: crate::pipeline::detection_count(dets),
    }
}

/// Runs the fusion matrix on a model trained with `run.channels` and one row
/// per channel variant. Failures are recorded in their rows; only invalid
/// configuration aborts the run.
pub fn run_ablation(
    run: &RunConfig,
    data: &SynthSplits,
    variants: &[ChannelVariant],
    mut progress: impl FnMut(&str),
) -> ToolResult<AblationReport> {
    run.validate()?;
    data.validate()?;
    let negatives = CachedNegatives::new(SynthNegatives {
        config: data.negatives.clone(),
        pyramid: run.pyramid.clone(),
    });
    let truth = annotations(&data.test);
    // the None row ranks raw scores, which may be negative
    let open_fusion = FusionConfig {
        score_threshold: f64::NEG_INFINITY,
        ..run.fusion.clone()
    };

    let mut trained: Vec<(ChannelConfig, Result<MultiViewModel, String>)> = Vec::new();
    let mut train_positives = 0;
    let mut model_for = |channels: &ChannelConfig, progress: &mut dyn FnMut(&str)| -> Result<MultiViewModel, String> {
        if let Some((_, m)) = trained.iter().find(|(c, _)| c == channels) {
            return m.clone();
        }
        progress(&format!("training {} channels, {} features", channels.channel_count(), channels.feature_len(run.window_size)));
        let sub = RunConfig {
            channels: channels.clone(),
            ..run.clone()
        };
        let positives = synth_positives(&data.train, channels, run.window_size, &Jitter::for_scan(&sub));
        train_positives = positives.len();
        let m = train_multiview(&positives, &negatives, &sub, |_, _| {})
            .map(|(m, _)| m)
            .map_err(|e| e.to_string());
        trained.push((channels.clone(), m.clone()));
        m
    };

    let mut fusion_rows = Vec::new();
    let base = model_for(&run.channels, &mut progress);
    let raw = base
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|m| synth_raw_detections(m, &data.test, CascadeMode::Enabled).map_err(|e| e.to_string()));
    for merging in [Merging::GreedyNms, Merging::Combination] {
        for rerank in Rerank::ALL {
            progress(&format!("fusion {} + {}", rerank.name(), merging.name()));
            let fusion = FusionConfig {
                rerank,
                merging,
                ..open_fusion.clone()
            };
            let result = match (&base, &raw) {
                (Ok(m), Ok((raw, _))) => fuse_all(raw, m, &fusion)
                    .map(|d| metrics(&d, &truth, run))
                    .map_err(|e| e.to_string()),
                (Err(e), _) | (_, Err(e)) => Err(e.clone()),
            };
            fusion_rows.push(FusionRow {
                rerank: rerank.name().into(),
                merging: merging.name().into(),
                result,
            });
        }
    }

    let mut channel_rows = Vec::new();
    for v in variants {
        let feature_count = v.channels.feature_len(run.window_size);
        let result = v
            .channels
            .validate()
            .map_err(|e| e.to_string())
            .and_then(|_| model_for(&v.channels, &mut progress))
            .and_then(|m| {
                progress(&format!("evaluating {}", v.name));
                let (raw, _) = synth_raw_detections(&m, &data.test, CascadeMode::Enabled).map_err(|e| e.to_string())?;
                let d = fuse_all(&raw, &m, &open_fusion).map_err(|e| e.to_string())?;
                Ok(metrics(&d, &truth, run))
            });
        channel_rows.push(ChannelRow {
            name: v.name.clone(),
            feature_count,
            result,
        });
    }

    Ok(AblationReport {
        reference: REFERENCE_NOTE.into(),
        train_positives,
        test_positives: truth.positives(),
        base_feature_count: run.channels.feature_len(run.window_size),
        fusion: fusion_rows,
        channels: channel_rows,
    })
}
