use thiserror::Error;

use crate::interference::DipFit;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown mode label `{0}`")]
    UnknownMode(String),

    #[error("duplicate mode label `{0}`")]
    DuplicateMode(String),

    #[error("malformed mode label `{0}` (expected a spatial name followed by H or V)")]
    BadModeLabel(String),

    #[error("negative photon count {count} for mode `{mode}`")]
    NegativeCount { mode: String, count: i64 },

    #[error("spatial mode `{0}` has no horizontal/vertical partner pair")]
    MissingPolarizationPartner(String),

    #[error("spatial modes `{0}` and `{1}` carry different polarization sets")]
    PolarizationMismatch(String, String),

    #[error("a beamsplitter needs two distinct spatial modes, got `{0}` twice")]
    SameMode(String),

    #[error("{name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("network acts on {expected} modes but the state has {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state holds {found} photons, {expected} required")]
    PhotonNumber { expected: u32, found: u32 },

    #[error("herald probability is zero")]
    ZeroHeraldProbability,

    #[error("distinguishable transmission probability Q(n) vanishes")]
    ZeroReference,

    #[error("perfect single-photon visibility: blocking ratio is unbounded")]
    UnboundedRatio,

    #[error("population ratio denominator n_HV + n_VH is zero")]
    ZeroDenominator,

    #[error("scan needs at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("scan positions must be strictly monotonic")]
    NonMonotonicScan,

    #[error("scan has no counts to fit")]
    EmptyScan,

    #[error("dip fit did not converge after {} iterations", .0.iterations)]
    FitNotConverged(Box<DipFit>),

    #[error("invalid tomography data: {0}")]
    InvalidCounts(String),

    #[error("counts normalization over the H/V quadruple is zero")]
    ZeroNormalization,

    #[error("maximum-likelihood search did not converge after {iterations} iterations (objective {objective:.6e})")]
    MleNotConverged { iterations: usize, objective: f64 },

    #[error("{skipped} of {trials} bootstrap trials failed")]
    TooManySkippedTrials { skipped: usize, trials: usize },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
