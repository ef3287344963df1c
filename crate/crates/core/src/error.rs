use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid geometry, profile, distribution or experiment parameter.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical precondition of a bound or identity does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A constant was requested outside the region where it is finite and positive.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index mismatch: expected {expected} entries, got {got} ({what})")]
    IndexMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigensolver did not converge: residual {residual:e} exceeds {tolerance:e}")]
    Convergence { residual: f64, tolerance: f64 },

    /// Branch identity was lost between two coupling values; the grid needs refinement there.
    #[error("refine grid on [{lo}, {hi}]: eigenvector overlap {overlap:.3} below floor {floor}")]
    Refine {
        lo: f64,
        hi: f64,
        overlap: f64,
        floor: f64,
    },

    #[error("branch {branch} decreases by {drop:e} on [{lo}, {hi}]")]
    NonMonotone {
        branch: usize,
        lo: f64,
        hi: f64,
        drop: f64,
    },

    #[error("energy {energy} lies within {distance:e} of the spectrum (tolerance {tolerance:e})")]
    NearSpectrum {
        energy: f64,
        distance: f64,
        tolerance: f64,
    },

    #[error("Birman-Schwinger kernel is singular on the support of u at E = {energy}")]
    SingularKernel { energy: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by invalid input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Domain(_) | Error::IndexMismatch { .. }
        )
    }
}
