use thiserror::Error;

/// Spatial or logical axis named in shape errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Batch,
    Channels,
    Height,
    Width,
    Features,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Axis::Batch => "batch",
            Axis::Channels => "channels",
            Axis::Height => "height",
            Axis::Width => "width",
            Axis::Features => "features",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch on {axis} axis (expected {expected}, found {found})")]
    Shape {
        op: &'static str,
        axis: Axis,
        expected: usize,
        found: usize,
    },

    #[error("{op}: dilated kernel extent {extent} exceeds padded input {padded} on {axis} axis")]
    DilationTooLarge {
        op: &'static str,
        axis: Axis,
        extent: usize,
        padded: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dilation rate set is empty")]
    EmptyRateSet,

    #[error("dilation rate set does not contain (1, 1)")]
    MissingIdentityRate,

    #[error("dilation rate {0:?} is not present in the rate set")]
    RateNotInSet((usize, usize)),

    #[error("not a probability simplex: {0}")]
    NotSimplex(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("layer {index}: {message}")]
    Config { index: usize, message: String },

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
