use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the crate. Variant names double as
/// machine-readable error kinds (see [`Error::kind`]), which the CLI maps to
/// exit codes.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("AsymmetricDistance: |d[{i}][{j}] - d[{j}][{i}]| = {gap:.3e} exceeds {tol:.0e}")]
    AsymmetricDistance { i: usize, j: usize, gap: f64, tol: f64 },

    #[error("NonzeroDiagonal: d[{i}][{i}] = {value:.3e}, diagonal entries must be zero")]
    NonzeroDiagonal { i: usize, value: f64 },

    #[error("TriangleViolation: d[{i}][{k}] exceeds d[{i}][{j}] + d[{j}][{k}] by {gap:.3e}")]
    TriangleViolation { i: usize, j: usize, k: usize, gap: f64 },

    #[error("NonpositiveWeight: weights[{i}] = {value:.3e}")]
    NonpositiveWeight { i: usize, value: f64 },

    #[error("WeightSumMismatch: weights sum to {sum} instead of 1 (tolerance {tol:.0e})")]
    WeightSumMismatch { sum: f64, tol: f64 },

    #[error("CoordDistMismatch: dist[{i}][{j}] = {dist} but coordinates give {derived}")]
    CoordDistMismatch { i: usize, j: usize, dist: f64, derived: f64 },

    #[error("NegativeDistance: d[{i}][{j}] = {value:.3e}")]
    NegativeDistance { i: usize, j: usize, value: f64 },

    #[error("ZeroDistance: d[{i}][{j}] = 0 for distinct atoms (strict mode)")]
    ZeroDistance { i: usize, j: usize },

    #[error("LengthMismatch: expected length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("SizeMismatch: {0}")]
    SizeMismatch(String),

    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),

    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),

    #[error("NegativeMass: plan entry {index:?} = {value:.3e}")]
    NegativeMass { index: Vec<usize>, value: f64 },

    #[error("MarginalMismatch: axis {axis} marginal deviates by {violation:.3e} (tolerance {tol:.0e})")]
    MarginalMismatch { axis: usize, violation: f64, tol: f64 },

    #[error("MassMismatch: total mass {total} deviates from 1 beyond {tol:.0e}")]
    MassMismatch { total: f64, tol: f64 },

    #[error("SharedMarginalMismatch: shared marginals differ by {gap:.3e} at atom {index}")]
    SharedMarginalMismatch { index: usize, gap: f64 },

    #[error("MissingCoords: {0}")]
    MissingCoords(String),

    #[error("IndexOutOfRange: map sends atom {atom} to index {target}, target space has {n} atoms")]
    IndexOutOfRange { atom: usize, target: usize, n: usize },

    #[error("NonConvergence: {context} exhausted {iterations} outer iterations (last relative change {last_change:.3e})")]
    NonConvergence { context: String, iterations: usize, last_change: f64 },

    #[error("TensorTooLarge: plan tensor needs {entries} entries, cap is {cap}")]
    TensorTooLarge { entries: usize, cap: usize },

    #[error("NumericalOverflow: {0}")]
    NumericalOverflow(String),

    #[error("AnchorNotOptimal: {side} anchor residual {residual:.3e} exceeds opt_tol {tol:.3e}")]
    AnchorNotOptimal { side: &'static str, residual: f64, tol: f64 },

    #[error("EmptySupport: pruning at {prune_tol:.3e} removed every support atom")]
    EmptySupport { prune_tol: f64 },

    #[error("TooLarge: {0}")]
    TooLarge(String),

    #[error("NotApplicable: {0}")]
    NotApplicable(String),
}

impl Error {
    /// Stable kind string, independent of the formatted message.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::AsymmetricDistance { .. } => "AsymmetricDistance",
            Error::NonzeroDiagonal { .. } => "NonzeroDiagonal",
            Error::TriangleViolation { .. } => "TriangleViolation",
            Error::NonpositiveWeight { .. } => "NonpositiveWeight",
            Error::WeightSumMismatch { .. } => "WeightSumMismatch",
            Error::CoordDistMismatch { .. } => "CoordDistMismatch",
            Error::NegativeDistance { .. } => "NegativeDistance",
            Error::ZeroDistance { .. } => "ZeroDistance",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::SizeMismatch(_) => "SizeMismatch",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NegativeMass { .. } => "NegativeMass",
            Error::MarginalMismatch { .. } => "MarginalMismatch",
            Error::MassMismatch { .. } => "MassMismatch",
            Error::SharedMarginalMismatch { .. } => "SharedMarginalMismatch",
            Error::MissingCoords(_) => "MissingCoords",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::TensorTooLarge { .. } => "TensorTooLarge",
            Error::NumericalOverflow(_) => "NumericalOverflow",
            Error::AnchorNotOptimal { .. } => "AnchorNotOptimal",
            Error::EmptySupport { .. } => "EmptySupport",
            Error::TooLarge(_) => "TooLarge",
            Error::NotApplicable(_) => "NotApplicable",
        }
    }
}
