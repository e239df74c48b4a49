//! Aggregate channel features for multi-view object detection.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the whole numeric
//! pipeline: channel extraction, the exact per-scale feature pyramid, soft
//! cascade training with depth-2 trees, sliding-window detection over one or
//! several (possibly mirrored) views, the fusion post-processing and the
//! evaluation protocol. File formats, image decoding and the command line live
//! in the `acf-tools` companion crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod boosting;
pub mod channels;
pub mod detector;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod postprocess;
pub mod pyramid;
pub mod rng;

pub use boosting::{
    adaboost_train, calibrate_soft_cascade, CascadeMode, CascadeOutcome, DepthTwoTree,
    SoftCascadeModel, TrainConfig, TrainReport, WeightedTree,
};
pub use channels::{compute_channels, ChannelConfig, ChannelStack, ColorSpace, Pooling};
pub use detector::{
    detect_multiview, detect_single_view, mirror_model, Detection, MultiViewModel, ViewSource,
};
pub use error::{Error, Result};
pub use eval::{AnnotationSet, EvalConfig};
pub use geometry::BBox;
pub use image::{Image, Plane};
pub use postprocess::{AdjustmentParams, FusionConfig, Merging, Rerank};
pub use pyramid::{build_pyramid, scale_schedule, PyramidConfig, PyramidLevel};
