use thiserror::Error;

/// Errors surfaced by the operator kernels, cone geometry, grid machinery
/// and the continuity solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {n} exceeds the subset-enumeration bound {max}")]
    DimensionTooLarge { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigenvalue tuple is outside the operator domain cone")]
    OutsideDomain,

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("ray from the anchor never leaves the level set (f increases along it)")]
    RayStaysInside,

    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),

    #[error("curvature cross-check failed: relative residual {rel:.3e} (grid under-resolved)")]
    CrossCheckFailed { rel: f64 },

    #[error("metric is numerically degenerate at grid point {point}")]
    MetricDegenerate { point: usize },

    #[error("field is not admissible: cone margin {margin:.3e} at grid point {point}")]
    NotAdmissible { point: usize, margin: f64 },

    #[error("no admissible start: u = 0 is not admissible for this problem")]
    NoAdmissibleStart,

    #[error("continuity method stalled: t-step underflow below {min_step:.1e} at t = {t}")]
    ContinuityStalled { t: f64, min_step: f64 },

    #[error("Newton iteration diverged: no residual decrease within {iterations} iterations")]
    NewtonDiverged { iterations: usize },

    #[error("degenerate spectrum: |lambda_i - lambda_j| = {gap:.3e} below {tol:.1e}")]
    DegenerateSpectrum { gap: f64, tol: f64 },

    #[error("empty solution family")]
    EmptyFamily,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
