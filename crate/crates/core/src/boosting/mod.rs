//! Soft-cascade model, its evaluation and calibration, and boosted training.

pub mod quantize;
pub mod train;
pub mod tree;

use alloc::format;
use alloc::vec::Vec;

use crate::channels::{ChannelConfig, ChannelDescriptor};
use crate::error::{Error, Result};

pub use quantize::{quantize_features, BinEdges, QuantizedMatrix};
pub use train::{adaboost_train, boost, CachedNegatives, NegativeImages, NegativeSource, SampleSet, TrainConfig, TrainReport};
pub use tree::{best_split, train_depth2_tree, DepthTwoTree, TreeNode};

/// Margin subtracted from calibrated stage thresholds.
pub const CALIBRATION_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedTree {
    pub tree: DepthTwoTree,
    pub alpha: f64,
}

/// A single boosted classifier with a rejection threshold after every tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftCascadeModel {
    pub trees: Vec<WeightedTree>,
    pub stage_thresholds: Vec<f64>,
    /// Window side in pixels.
    pub window_size: usize,
    pub channel_config: ChannelConfig,
    /// One per channel, in stack order; mirroring needs them.
    pub descriptors: Vec<ChannelDescriptor>,
    /// Smallest and largest final score over the training positives.
    pub score_range: (f64, f64),
    pub view_id: u32,
}

/// How stage thresholds are applied while evaluating a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CascadeMode {
    /// Stop at the first stage whose threshold is violated.
    #[default]
    Enabled,
    /// Evaluate every tree but still report the first violated stage.
    Exhaustive,
    /// Ignore thresholds entirely.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeOutcome {
    /// Cumulative score after the last evaluated tree.
    pub score: f64,
    /// Index of the first stage whose threshold was violated.
    pub rejected_at: Option<usize>,
    pub trees_evaluated: usize,
    /// Evaluated trees that voted positive.
    pub positive_votes: u32,
}

impl CascadeOutcome {
    pub fn passed(&self) -> bool {
        self.rejected_at.is_none()
    }
}

impl SoftCascadeModel {
    pub fn grid(&self) -> usize {
        self.window_size / self.channel_config.shrink
    }

    pub fn feature_len(&self) -> usize {
        self.descriptors.len() * self.grid() * self.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.channel_config.validate()?;
        let shrink = self.channel_config.shrink;
        if self.window_size == 0 || !self.window_size.is_multiple_of(shrink) {
            return Err(Error::InvalidModel(format!(
                "window size {} is not a positive multiple of shrink {shrink}",
                self.window_size
            )));
        }
        if self.trees.len() != self.stage_thresholds.len() {
            return Err(Error::InvalidModel(format!(
                "{} trees but {} stage thresholds",
                self.trees.len(),
                self.stage_thresholds.len()
            )));
        }
        if !self.descriptors.is_empty() && self.descriptors.len() != self.channel_config.channel_count() {
            return Err(Error::InvalidModel("descriptor count does not match the channel config".into()));
        }
        let n = self.feature_len() as u32;
        for (t, wt) in self.trees.iter().enumerate() {
            if !(wt.alpha > 0.0 && wt.alpha.is_finite()) {
                return Err(Error::InvalidModel(format!("tree {t} has non-positive weight")));
            }
            if !self.descriptors.is_empty() && wt.tree.max_feature() >= n {
                return Err(Error::InvalidModel(format!("tree {t} reads a feature out of range")));
            }
        }
        Ok(())
    }

    /// Core evaluation loop; `value(tree, node)` reads the feature tested at
    /// `node` of tree `tree`.
    #[inline(always)]
    pub fn evaluate_by(&self, mode: CascadeMode, mut value: impl FnMut(usize, usize) -> f32) -> CascadeOutcome {
        let mut score = 0.0f64;
        let mut votes = 0u32;
        let mut rejected_at = None;
        for (t, wt) in self.trees.iter().enumerate() {
            let leaf = wt.tree.leaves[wt.tree.leaf_index(|n| value(t, n))];
            if leaf > 0.0 {
                votes += 1;
            }
            score += wt.alpha * leaf as f64;
            if mode != CascadeMode::Disabled && rejected_at.is_none() && score < self.stage_thresholds[t] {
                rejected_at = Some(t);
                if mode == CascadeMode::Enabled {
                    return CascadeOutcome {
                        score,
                        rejected_at,
                        trees_evaluated: t + 1,
                        positive_votes: votes,
                    };
                }
            }
        }
        CascadeOutcome {
            score,
            rejected_at,
            trees_evaluated: self.trees.len(),
            positive_votes: votes,
        }
    }

    /// Evaluates a flattened window feature vector.
    pub fn evaluate(&self, features: &[f32], mode: CascadeMode) -> CascadeOutcome {
        self.evaluate_by(mode, |t, n| features[self.trees[t].tree.nodes[n].feature as usize])
    }

    /// Evaluates through an arbitrary feature accessor.
    pub fn evaluate_with(&self, accessor: &impl FeatureAccess, mode: CascadeMode) -> CascadeOutcome {
        self.evaluate_by(mode, |t, n| accessor.feature(self.trees[t].tree.nodes[n].feature as usize))
    }

    /// Cumulative score after every tree.
    pub fn trajectory(&self, features: &[f32]) -> Vec<f64> {
        let mut score = 0.0;
        self.trees
            .iter()
            .map(|wt| {
                score += wt.alpha * wt.tree.predict(features) as f64;
                score
            })
            .collect()
    }

    /// Copy with every stage threshold at `-inf`.
    pub fn without_thresholds(&self) -> SoftCascadeModel {
        SoftCascadeModel {
            stage_thresholds: alloc::vec![f64::NEG_INFINITY; self.trees.len()],
            ..self.clone()
        }
    }
}

/// Resolves a flattened feature index to the window's channel value.
pub trait FeatureAccess {
    fn feature(&self, index: usize) -> f32;
}

impl FeatureAccess for [f32] {
    fn feature(&self, index: usize) -> f32 {
        self[index]
    }
}

impl FeatureAccess for Vec<f32> {
    fn feature(&self, index: usize) -> f32 {
        self[index]
    }
}

/// Stage thresholds such that, at every stage, at least a `1 - quantile`
/// fraction of the calibration positives stays strictly above it:
/// `threshold_t = (quantile of cumulative scores after stage t) - ε`.
/// With `quantile = 0` every calibration positive passes the whole cascade.
pub fn calibrate_soft_cascade(model: &SoftCascadeModel, positives: &[Vec<f32>], quantile: f64) -> Result<Vec<f64>> {
    if positives.is_empty() {
        return Err(Error::InsufficientData("calibration needs at least one positive"));
    }
    if !(0.0..1.0).contains(&quantile) {
        return Err(Error::InvalidConfig(format!("rejection quantile {quantile} outside [0, 1)")));
    }
    let trajectories: Vec<Vec<f64>> = positives.iter().map(|p| model.trajectory(p)).collect();
    Ok(thresholds_from_trajectories(&trajectories, model.trees.len(), quantile))
}

pub(crate) fn thresholds_from_trajectories(trajectories: &[Vec<f64>], stages: usize, quantile: f64) -> Vec<f64> {
    let n = trajectories.len();
    let k = (libm::floor(quantile * n as f64) as usize).min(n - 1);
    let mut column = Vec::with_capacity(n);
    (0..stages)
        .map(|t| {
            column.clear();
            column.extend(trajectories.iter().map(|tr| tr[t]));
            column.sort_by(|a, b| a.total_cmp(b));
            column[k] - CALIBRATION_EPSILON
        })
        .collect()
}
