use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("zero distance between {from} and {to}")]
    ZeroDistance { from: String, to: String },

    #[error("path length must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("invalid visibility-region configuration: {0}")]
    InvalidVrConfig(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no IRS element detected as visible to the BS")]
    EmptyVisibility,

    #[error(
        "training matrix is rank deficient ({rows}x{cols}, numerical rank {rank}, condition number {condition:.3e})"
    )]
    RankDeficient {
        rows: usize,
        cols: usize,
        rank: usize,
        condition: f64,
    },

    #[error("the typical user's cascaded channel estimate is identically zero")]
    ZeroReferenceChannel,

    #[error("ground-truth channel has zero energy; NMSE is undefined")]
    ZeroGroundTruth,

    #[error("all channel estimates are zero; cannot design beamformers")]
    NoBeamformingChannel,

    #[error("training length T_e = {training} exceeds coherence time T = {coherence}")]
    TrainingExceedsCoherence { training: f64, coherence: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
