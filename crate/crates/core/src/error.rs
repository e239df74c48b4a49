use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Image dimensions or pixel values are out of range.
    InvalidImage(String),
    /// The image is smaller than the pooling block in some dimension.
    ImageTooSmall {
        width: usize,
        height: usize,
        shrink: usize,
    },
    /// A configuration value violates its invariant.
    InvalidConfig(String),
    /// Stochastic pooling was requested without a seed.
    MissingPoolingSeed,
    /// The model carries no channel descriptors, so orientation channels
    /// cannot be identified.
    MissingDescriptors,
    /// Training or calibration received an empty sample set.
    InsufficientData(&'static str),
    /// A model is inconsistent with itself (feature out of range, length
    /// mismatch, mirrored view pointing nowhere).
    InvalidModel(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidImage(msg) => write!(f, "invalid image: {msg}"),
            Error::ImageTooSmall {
                width,
                height,
                shrink,
            } => write!(
                f,
                "image {width}x{height} is smaller than the pooling factor {shrink}"
            ),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::MissingPoolingSeed => write!(f, "stochastic pooling requires an explicit seed"),
            Error::MissingDescriptors => write!(f, "model has no channel descriptors"),
            Error::InsufficientData(what) => write!(f, "insufficient data: {what}"),
            Error::InvalidModel(msg) => write!(f, "invalid model: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
