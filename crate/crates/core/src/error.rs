use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read image {path}: {reason}")]
    UnreadableImage { path: PathBuf, reason: String },

    #[error("missing capture metadata for {image}: {field}")]
    MissingMetadata { image: String, field: &'static str },

    #[error("invalid capture metadata: {0}")]
    InvalidMetadata(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: timestamps are not strictly increasing")]
    NonMonotonicTimestamps { path: String, line: u64 },

    #[error("daylight window start {start} is not before end {end}")]
    InvalidWindow { start: String, end: String },

    #[error("direction is below the horizon (z = {z})")]
    BelowHorizon { z: f64 },

    #[error("radius {radius:.3} px lies outside the image circle ({limit:.3} px)")]
    OutsideImageCircle { radius: f64, limit: f64 },

    #[error("invalid lens model: {0}")]
    InvalidLens(String),

    #[error("day of year {0} outside 1..=366")]
    InvalidDay(u32),

    #[error("sun is below the horizon (zenith {zenith_deg:.2} deg)")]
    SunBelowHorizon { zenith_deg: f64 },

    #[error("no pixel reaches the sun threshold {threshold}")]
    NoSunPixels { threshold: u8 },

    #[error("could not draw {wanted} valid samples within {attempts} attempts")]
    SamplingExhausted { wanted: usize, attempts: usize },

    #[error("sample set is empty")]
    EmptySampleSet,

    #[error("zenith angle {0} deg outside [0, 90]")]
    InvalidZenith(f64),

    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("design matrix is rank deficient")]
    DegenerateDesign,

    #[error("denominator is zero")]
    ZeroDenominator,

    #[error("missing input: {0}")]
    MissingInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("series is constant, rank correlation undefined")]
    ConstantSeries,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
