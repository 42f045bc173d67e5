use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage an error originated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Script,
    Foreground,
    Inpaint,
    Tamper,
    Transform,
    Depth,
    Compose,
    Evaluate,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Script => "script",
            Stage::Foreground => "foreground",
            Stage::Inpaint => "inpaint",
            Stage::Tamper => "tamper",
            Stage::Transform => "transform",
            Stage::Depth => "depth",
            Stage::Compose => "compose",
            Stage::Evaluate => "evaluate",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt data: {0}")]
    CorruptData(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("detection set is empty")]
    EmptyDetections,
    #[error("every bounding box lies outside the image")]
    AllBoxesOutOfBounds,
    #[error("mask has {have} pixels, need at least {need}")]
    TooFewPixels { have: usize, need: usize },

    #[error("mask covers the whole image; nothing to inpaint from")]
    MaskCoversImage,

    #[error("transform is singular")]
    SingularTransform,
    #[error("scale factors must be positive, got ({0}, {1})")]
    NonPositiveScale(f64, f64),
    #[error("degenerate quad: {0}")]
    DegenerateQuad(String),
    #[error("homography system is singular")]
    SingularSystem,

    #[error("gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("mask is empty")]
    EmptyMask,
    #[error("reference region is empty")]
    EmptyReference,

    #[error("histogram is not normalized")]
    NotNormalized,
    #[error("histogram has zero variance")]
    ZeroVariance,

    #[error("tamper layer has no mask")]
    MissingMask,
    #[error("tamper layer {layer:?} exceeds canvas {canvas:?}")]
    OversizedLayer {
        layer: (usize, usize),
        canvas: (usize, usize),
    },

    #[error("failed to launch provider `{program}`: {source}")]
    ProviderLaunchFailure {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("provider exited with status {code:?}: {stderr}")]
    ProviderNonZeroExit { code: Option<i32>, stderr: String },
    #[error("provider produced unusable output: {0}")]
    ProviderBadOutput(String),

    #[error("invalid edit script: {0}")]
    Script(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error with stage tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_provider_error(&self) -> bool {
        matches!(
            self.root(),
            Error::ProviderLaunchFailure { .. }
                | Error::ProviderNonZeroExit { .. }
                | Error::ProviderBadOutput(_)
        )
    }

    /// Errors caused by bad user input rather than runtime failure.
    pub fn is_validation_error(&self) -> bool {
        !self.is_provider_error()
            && !matches!(self.root(), Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
