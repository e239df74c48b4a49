//! Discrete AdaBoost over depth-2 trees with bootstrapped hard negatives.

use alloc::format;
use alloc::sync::Arc;
use core::cell::RefCell;
use alloc::vec;
use alloc::vec::Vec;

use super::quantize::quantize_features;
use super::tree::train_depth2_tree_on;
use super::{thresholds_from_trajectories, CascadeMode, SoftCascadeModel, WeightedTree};
use crate::channels::{patch_features, patch_side, ChannelConfig};
use crate::detector::sliding::CompiledCascade;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::pyramid::{build_pyramid, PyramidConfig, PyramidLevel};
use crate::rng::SeededRng;

/// Bounds on the weak-learner error before computing its weight.
pub const ERROR_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub num_trees: usize,
    /// Bins per feature for the split search (at most 256).
    pub quantization_bins: usize,
    /// Tree counts after which hard negatives are mined; strictly increasing
    /// and below `num_trees`.
    pub bootstrap_schedule: Vec<usize>,
    pub negatives_per_round: usize,
    /// Random negative windows drawn before the first round.
    pub initial_negatives: usize,
    /// Cap on windows mined from any single negative image per round.
    pub max_negatives_per_image: usize,
    /// Fraction of calibration positives a stage may reject.
    pub rejection_quantile: f64,
    /// Window stride, in pooled cells, of the mining scan.
    pub mining_stride: usize,
    /// Fraction of the total weight that tree fitting may ignore, dropping
    /// the lightest samples first; 0 fits every tree on all samples.
    pub weight_trim: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_trees: 2048,
            quantization_bins: 256,
            bootstrap_schedule: vec![64, 256, 1024],
            negatives_per_round: 5000,
            initial_negatives: 5000,
            max_negatives_per_image: 25,
            rejection_quantile: 0.0,
            mining_stride: 1,
            weight_trim: 1e-4,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::InvalidConfig("number of trees must be positive".into()));
        }
        if !(2..=256).contains(&self.quantization_bins) {
            return Err(Error::InvalidConfig("quantization bins must be in 2..=256".into()));
        }
        if self.bootstrap_schedule.windows(2).any(|w| w[0] >= w[1])
            || self.bootstrap_schedule.iter().any(|&t| t == 0 || t >= self.num_trees)
        {
            return Err(Error::InvalidConfig(format!(
                "bootstrap schedule {:?} must be strictly increasing within 1..{}",
                self.bootstrap_schedule, self.num_trees
            )));
        }
        if !(0.0..1.0).contains(&self.rejection_quantile) {
            return Err(Error::InvalidConfig("rejection quantile must be in [0, 1)".into()));
        }
        if !(0.0..0.5).contains(&self.weight_trim) {
            return Err(Error::InvalidConfig("weight trim must be in [0, 0.5)".into()));
        }
        if self.mining_stride == 0 {
            return Err(Error::InvalidConfig("mining stride must be positive".into()));
        }
        Ok(())
    }
}

/// Labelled feature vectors, row-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    pub n_features: usize,
    pub features: Vec<f32>,
    pub labels: Vec<i8>,
}

impl SampleSet {
    pub fn new(n_features: usize) -> Self {
        SampleSet {
            n_features,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, features: &[f32], label: i8) {
        assert_eq!(features.len(), self.n_features);
        self.features.extend_from_slice(features);
        self.labels.push(if label > 0 { 1 } else { -1 });
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn count(&self, label: i8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundStats {
    /// Weighted error of the round's tree (before clamping).
    pub error: f64,
    pub alpha: f64,
    /// `ln Σ exp(-y F(x))` over the current training set after the round.
    pub log_exp_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiningEvent {
    pub after_trees: usize,
    /// Full-pass windows found on the negative images scanned.
    pub candidates: usize,
    pub added: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub rounds: Vec<RoundStats>,
    pub mining: Vec<MiningEvent>,
    pub positives: usize,
    pub initial_negatives: usize,
    pub final_negatives: usize,
}

/// Hard negatives returned by a mining callback.
#[derive(Debug, Clone, Default)]
pub struct MinedBatch {
    pub features: Vec<Vec<f32>>,
    pub candidates: usize,
}

fn log_sum_exp_margins(labels: &[i8], scores: &[f64]) -> (f64, Vec<f64>) {
    let neg_margin: Vec<f64> = labels.iter().zip(scores).map(|(&y, &f)| -(y as f64) * f).collect();
    let m = neg_margin.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = neg_margin.iter().map(|&v| libm::exp(v - m)).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    (m + libm::log(total), w)
}

/// Heaviest samples holding at least `1 - trim` of the (normalized) weight,
/// in index order; `None` when nothing is dropped.
fn trimmed_subset(weights: &[f64], trim: f64) -> Option<Vec<u32>> {
    if trim <= 0.0 {
        return None;
    }
    let mut order: Vec<u32> = (0..weights.len() as u32).collect();
    order.sort_by(|&a, &b| weights[b as usize].total_cmp(&weights[a as usize]).then(a.cmp(&b)));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mut keep = order.len();
    for (k, &i) in order.iter().enumerate() {
        acc += weights[i as usize];
        if acc >= (1.0 - trim) * total {
            keep = k + 1;
            break;
        }
    }
    if keep == order.len() {
        return None;
    }
    order.truncate(keep);
    order.sort_unstable();
    Some(order)
}

/// Runs discrete AdaBoost on `samples`. At each tree count listed in the
/// bootstrap schedule `miner` is handed the trees so far and its windows are
/// appended as negatives.
pub fn boost(
    samples: &mut SampleSet,
    config: &TrainConfig,
    mut miner: impl FnMut(&[WeightedTree]) -> Result<MinedBatch>,
) -> Result<(Vec<WeightedTree>, TrainReport)> {
    config.validate()?;
    if samples.count(1) == 0 || samples.count(-1) == 0 {
        return Err(Error::InsufficientData("boosting needs at least one positive and one negative"));
    }
    let mut report = TrainReport {
        positives: samples.count(1),
        initial_negatives: samples.count(-1),
        ..TrainReport::default()
    };
    let mut scores = vec![0.0f64; samples.len()];
    let (mut q, mut edges) = quantize_features(&samples.features, samples.n_features, config.quantization_bins);
    let (_, mut weights) = log_sum_exp_margins(&samples.labels, &scores);
    let mut trees: Vec<WeightedTree> = Vec::with_capacity(config.num_trees);

    for t in 0..config.num_trees {
        if config.bootstrap_schedule.contains(&t) {
            let batch = miner(&trees)?;
            report.mining.push(MiningEvent {
                after_trees: t,
                candidates: batch.candidates,
                added: batch.features.len(),
            });
            if !batch.features.is_empty() {
                for f in &batch.features {
                    let score = trees.iter().map(|wt| wt.alpha * wt.tree.predict(f) as f64).sum();
                    samples.push(f, -1);
                    scores.push(score);
                }
                (q, edges) = quantize_features(&samples.features, samples.n_features, config.quantization_bins);
                weights = log_sum_exp_margins(&samples.labels, &scores).1;
            }
        }

        let kept = trimmed_subset(&weights, config.weight_trim);
        let fit = train_depth2_tree_on(&q, &edges, &samples.labels, &weights, kept.as_deref());
        let eps = fit.error.clamp(ERROR_CLAMP, 0.5 - ERROR_CLAMP);
        let alpha = 0.5 * libm::log((1.0 - eps) / eps);
        for (s, &p) in scores.iter_mut().zip(&fit.predictions) {
            *s += alpha * p as f64;
        }
        let (log_loss, w) = log_sum_exp_margins(&samples.labels, &scores);
        weights = w;
        report.rounds.push(RoundStats {
            error: fit.error,
            alpha,
            log_exp_loss: log_loss,
        });
        trees.push(WeightedTree { tree: fit.tree, alpha });
    }
    report.final_negatives = samples.count(-1);
    Ok((trees, report))
}

/// Images that contain no target; every window is a negative.
pub trait NegativeSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel pyramid of negative image `index`.
    fn levels(&self, index: usize, channels: &ChannelConfig, window: usize) -> Result<Arc<Vec<PyramidLevel>>>;
}

/// In-memory negative images, pyramids computed on demand.
pub struct NegativeImages<'a> {
    pub images: &'a [Image],
    pub pyramid: PyramidConfig,
}

impl NegativeSource for NegativeImages<'_> {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn levels(&self, index: usize, channels: &ChannelConfig, window: usize) -> Result<Arc<Vec<PyramidLevel>>> {
        Ok(Arc::new(build_pyramid(&self.images[index], channels, &self.pyramid, window)?))
    }
}

/// Memoizes the pyramids of another source for one channel configuration
/// and window; a request with different settings resets the cache.
pub struct CachedNegatives<S> {
    inner: S,
    key: RefCell<Option<(ChannelConfig, usize)>>,
    cache: RefCell<Vec<Option<Arc<Vec<PyramidLevel>>>>>,
}

impl<S: NegativeSource> CachedNegatives<S> {
    pub fn new(inner: S) -> Self {
        CachedNegatives {
            inner,
            key: RefCell::new(None),
            cache: RefCell::new(Vec::new()),
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: NegativeSource> NegativeSource for CachedNegatives<S> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn levels(&self, index: usize, channels: &ChannelConfig, window: usize) -> Result<Arc<Vec<PyramidLevel>>> {
        {
            let mut key = self.key.borrow_mut();
            if key.as_ref().is_none_or(|(c, w)| c != channels || *w != window) {
                *key = Some((channels.clone(), window));
                let mut cache = self.cache.borrow_mut();
                cache.clear();
                cache.resize(self.inner.len(), None);
            }
        }
        if let Some(hit) = &self.cache.borrow()[index] {
            return Ok(hit.clone());
        }
        let levels = self.inner.levels(index, channels, window)?;
        self.cache.borrow_mut()[index] = Some(levels.clone());
        Ok(levels)
    }
}

fn sample_random_negatives(
    source: &dyn NegativeSource,
    channels: &ChannelConfig,
    window: usize,
    count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<f32>>> {
    let g = window / channels.shrink;
    let mut order: Vec<usize> = (0..source.len()).collect();
    rng.shuffle(&mut order);
    let per_image = count.div_ceil(source.len().max(1)).max(1);
    let mut out = Vec::with_capacity(count);
    for &i in &order {
        if out.len() >= count {
            break;
        }
        let levels = source.levels(i, channels, window)?;
        if levels.is_empty() {
            continue;
        }
        for _ in 0..per_image.min(count - out.len()) {
            let level = &levels[rng.below(levels.len())];
            let s = &level.stack;
            let x = rng.below(s.width() - g + 1);
            let y = rng.below(s.height() - g + 1);
            out.push(s.window_features(x, y, g));
        }
    }
    Ok(out)
}

fn mine_hard_negatives(
    model: &SoftCascadeModel,
    source: &dyn NegativeSource,
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<MinedBatch> {
    let g = model.grid();
    let mut order: Vec<usize> = (0..source.len()).collect();
    rng.shuffle(&mut order);
    let mut batch = MinedBatch::default();
    for &i in &order {
        if batch.features.len() >= config.negatives_per_round {
            break;
        }
        let mut found: Vec<(usize, usize, usize)> = Vec::new();
        let levels = source.levels(i, &model.channel_config, model.window_size)?;
        for (li, level) in levels.iter().enumerate() {
            let compiled = CompiledCascade::new(model, &level.stack);
            compiled.scan(config.mining_stride, CascadeMode::Enabled, |x, y, outcome| {
                if outcome.passed() {
                    found.push((li, x, y));
                }
            });
        }
        batch.candidates += found.len();
        if found.len() > config.max_negatives_per_image {
            rng.shuffle(&mut found);
            found.truncate(config.max_negatives_per_image);
        }
        let room = config.negatives_per_round - batch.features.len();
        for &(li, x, y) in found.iter().take(room) {
            batch.features.push(levels[li].stack.window_features(x, y, g));
        }
    }
    Ok(batch)
}

/// Trains one soft cascade.
///
/// `positives` are training patches of side
/// [`patch_side`]`(channels, window)`: the target window plus context on
/// every side. Negatives are drawn from `negatives`, first at random and then
/// by bootstrapping at every scheduled tree count. Stage thresholds, both
/// interim and final, are calibrated with the configured rejection quantile
/// on the positives together with `calibration` (extra patches of the same
/// shape, typically misaligned copies of the positives); the score range is
/// recorded over the same set.
pub fn adaboost_train(
    positives: &[Image],
    calibration: &[Image],
    negatives: &dyn NegativeSource,
    config: &TrainConfig,
    channels: &ChannelConfig,
    window: usize,
) -> Result<(SoftCascadeModel, TrainReport)> {
    config.validate()?;
    channels.validate()?;
    if window == 0 || !window.is_multiple_of(channels.shrink) {
        return Err(Error::InvalidConfig(format!(
            "window {window} must be a positive multiple of shrink {}",
            channels.shrink
        )));
    }
    if positives.is_empty() {
        return Err(Error::InsufficientData("no positive windows"));
    }
    if negatives.is_empty() {
        return Err(Error::InsufficientData("no negative images"));
    }
    let side = patch_side(channels, window);
    let n_features = channels.feature_len(window);
    let mut rng = SeededRng::new(config.rng_seed);

    let features_of = |patch: &Image| -> Result<Vec<f32>> {
        if patch.width() == side && patch.height() == side {
            patch_features(patch, channels, window)
        } else {
            patch_features(&patch.resize(side, side), channels, window)
        }
    };
    let mut samples = SampleSet::new(n_features);
    let mut positive_features = Vec::with_capacity(positives.len() + calibration.len());
    for patch in positives {
        let f = features_of(patch)?;
        samples.push(&f, 1);
        positive_features.push(f);
    }
    for patch in calibration {
        positive_features.push(features_of(patch)?);
    }
    for f in sample_random_negatives(negatives, channels, window, config.initial_negatives, &mut rng)? {
        samples.push(&f, -1);
    }
    if samples.count(-1) == 0 {
        return Err(Error::InsufficientData("negative images are smaller than the window"));
    }

    let mut model = SoftCascadeModel {
        trees: Vec::new(),
        stage_thresholds: Vec::new(),
        window_size: window,
        channel_config: channels.clone(),
        descriptors: channels.descriptors(),
        score_range: (0.0, 0.0),
        view_id: 0,
    };

    let mut mining_rng = SeededRng::with_stream(config.rng_seed, 1);
    let (trees, report) = boost(&mut samples, config, |trees| {
        let interim = calibrated(&model, trees, &positive_features, config.rejection_quantile);
        mine_hard_negatives(&interim, negatives, config, &mut mining_rng)
    })?;

    model = calibrated(&model, &trees, &positive_features, config.rejection_quantile);
    let finals: Vec<f64> = positive_features
        .iter()
        .map(|f| model.evaluate(f, CascadeMode::Disabled).score)
        .collect();
    let lo = finals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    model.score_range = (lo, hi);
    Ok((model, report))
}

fn calibrated(template: &SoftCascadeModel, trees: &[WeightedTree], positives: &[Vec<f32>], quantile: f64) -> SoftCascadeModel {
    let mut m = SoftCascadeModel {
        trees: trees.to_vec(),
        stage_thresholds: Vec::new(),
        ..template.clone()
    };
    let trajectories: Vec<Vec<f64>> = positives.iter().map(|p| m.trajectory(p)).collect();
    m.stage_thresholds = thresholds_from_trajectories(&trajectories, trees.len(), quantile);
    m
}
