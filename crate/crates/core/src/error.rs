use thiserror::Error;

/// Errors raised by the solvers and kernels.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} is not a node of the grid")]
    Alignment { t: f64 },

    #[error("matrix is not diagonalizable (eigenvector condition {cond:.3e})")]
    NotDiagonalizable { cond: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("resonant discrete problem: |det| = {det_abs:.3e} (scale {scale:.3e})")]
    ResonantDiscrete { det_abs: f64, scale: f64 },

    #[error("resonant continuous problem: margin {margin:.3e}")]
    ResonantContinuous { margin: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("degenerate spectrum: eigenvalue gap {gap:.3e}")]
    DegenerateSpectrum { gap: f64 },

    #[error("spectrum leaves the unit circle: max ||lambda|-1| = {deviation:.3e}")]
    NonUnimodular { deviation: f64 },

    #[error("no invertible solvent partition found")]
    SolventExtraction,
}

impl Error {
    /// True for the discrete and continuous resonance variants.
    pub fn is_resonance(&self) -> bool {
        matches!(
            self,
            Error::ResonantDiscrete { .. } | Error::ResonantContinuous { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
