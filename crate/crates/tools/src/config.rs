//! Run configuration: every knob of a train/detect/eval run in one TOML
//! file.

use std::path::{Path, PathBuf};

use acf_core::eval::EvalConfig;
use acf_core::postprocess::{AdjustmentParams, FusionConfig};
use acf_core::{ChannelConfig, PyramidConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{ToolError, ToolResult};
use crate::synth::SynthSplits;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub train_images: Option<PathBuf>,
    pub train_annotations: Option<PathBuf>,
    /// Directory of images without targets.
    pub negative_images: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_annotations: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Detection window side in pixels.
    pub window_size: usize,
    /// Yaw levels of the training data; levels past the middle are served by
    /// mirrored views. 1 trains a single view.
    pub yaw_levels: u32,
    /// Sliding stride in pooled cells.
    pub stride: usize,
    /// Misaligned copies of each positive added to the calibration set.
    pub calibration_copies: usize,
    pub channels: ChannelConfig,
    pub train: TrainConfig,
    pub pyramid: PyramidConfig,
    pub fusion: FusionConfig,
    pub eval: EvalConfig,
    /// Per-view adjustments; empty means identity for every view.
    pub adjustments: Vec<AdjustmentParams>,
    pub paths: Paths,
    /// Synthetic splits used when no dataset paths are given.
    pub synth: SynthSplits,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            window_size: 80,
            yaw_levels: 6,
            stride: 1,
            calibration_copies: 4,
            channels: ChannelConfig::default(),
            train: TrainConfig::default(),
            pyramid: PyramidConfig::default(),
            fusion: FusionConfig::default(),
            eval: EvalConfig::default(),
            adjustments: Vec::new(),
            paths: Paths::default(),
            synth: SynthSplits::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> ToolResult<()> {
        let c = |e: acf_core::Error| ToolError::Config(e.to_string());
        self.channels.validate().map_err(c)?;
        self.train.validate().map_err(c)?;
        self.pyramid.validate().map_err(c)?;
        self.fusion.validate().map_err(c)?;
        self.eval.validate().map_err(c)?;
        for a in &self.adjustments {
            a.validate().map_err(c)?;
        }
        if self.window_size == 0 || !self.window_size.is_multiple_of(self.channels.shrink) {
            return Err(ToolError::Config(format!(
                "window size {} must be a positive multiple of shrink {}",
                self.window_size, self.channels.shrink
            )));
        }
        if self.yaw_levels == 0 {
            return Err(ToolError::Config("yaw levels must be at least 1".into()));
        }
        self.synth.validate()?;
        if self.stride == 0 {
            return Err(ToolError::Config("stride must be positive".into()));
        }
        if !self.adjustments.is_empty() && self.adjustments.len() != self.yaw_levels as usize {
            return Err(ToolError::Config(format!(
                "{} adjustments for {} views",
                self.adjustments.len(),
                self.yaw_levels
            )));
        }
        Ok(())
    }

    /// Adjustments for every view, identity where none are configured.
    pub fn view_adjustments(&self) -> Vec<AdjustmentParams> {
        if self.adjustments.is_empty() {
            vec![AdjustmentParams::IDENTITY; self.yaw_levels as usize]
        } else {
            self.adjustments.clone()
        }
    }

    pub fn from_toml(text: &str) -> ToolResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ToolError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> ToolResult<String> {
        toml::to_string(self).map_err(|e| ToolError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> ToolResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            ToolError::Config(m) => ToolError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> ToolResult<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| ToolError::io(path, e))
    }
}

/// Example per-view adjustments for annotation styles whose boxes sit
/// higher and wider than the detector's square windows; profile views shift
/// toward the visible side.
pub fn example_adjustments(yaw_levels: u32) -> Vec<AdjustmentParams> {
    (1..=yaw_levels)
        .map(|v| {
            let t = crate::synth::yaw_value(v, yaw_levels);
            AdjustmentParams {
                dx: 0.05 * t,
                dy: -0.06,
                sw: 1.0 + 0.04 * t.abs(),
                sh: 1.08,
            }
        })
        .collect()
}
