//! Companion crate to `acf-core`: image and model files, annotation and
//! detection formats, run configuration, the synthetic dataset, training
//! and ablation pipelines, and benchmarking used by the `acf` binary.

pub mod ablation;
pub mod bench;
pub mod config;
pub mod error;
pub mod formats;
pub mod imageio;
pub mod model_io;
pub mod pipeline;
pub mod synth;

pub use error::{ModelFormatError, ToolError, ToolResult};
