use alloc::string::String;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scenario has no tones")]
    EmptyScenario,

    #[error("tone at {frequency} Hz is not strictly inside (0, {band_limit}) Hz")]
    ToneOutOfBand { frequency: f64, band_limit: f64 },

    #[error("noise-free channel: SNR is undefined for sigma_x = 0")]
    ZeroNoise,

    #[error("model order estimation failed: {0}")]
    OrderEstimation(String),

    #[error("aliased frequency collision: {0}")]
    AliasCollision(String),

    #[error("observation is not uniformly sampled; use the nonuniform estimator")]
    NonUniformInput,

    #[error("degenerate amplitude fit (derivative amplitude {amp_xdot} vs signal amplitude {amp_x})")]
    DegenerateFit { amp_x: f64, amp_xdot: f64 },

    #[error("fold ambiguity: candidates {below} Hz and {above} Hz both lie within 3 sigma of {f_ratio} Hz")]
    FoldAmbiguity { f_ratio: f64, below: f64, above: f64 },

    #[error("no fold candidate inside (0, band_limit]")]
    NoFoldCandidate,

    #[error("Fisher information is singular (equilibrated condition number {0:e})")]
    SingularFisher(f64),

    #[error("frequency grid is empty or exhausted")]
    GridExhausted,

    #[error("empty summary")]
    EmptySummary,

    #[error("scenario draw failed: {0}")]
    ScenarioDraw(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
