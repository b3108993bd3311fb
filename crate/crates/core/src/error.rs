use thiserror::Error;

/// Every failure the library can report.
///
/// The variants are split into two families by [`Error::is_config`]: bad
/// inputs (caller mistakes) and numerical failures (the math did not work out
/// at the requested point).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("matrix is not skew-symmetric (asymmetry {0:.3e})")]
    NonSkewInput(f64),

    #[error("Euler pitch {theta} rad is within {margin} rad of the gimbal singularity")]
    GimbalSingularity { theta: f64, margin: f64 },

    #[error("advected direction is not a unit vector (norm {0})")]
    NonUnitGamma(f64),

    #[error("mass block is singular or not positive definite ({0})")]
    SingularMassBlock(&'static str),

    #[error("evaluation left the valid chart at {0}")]
    ChartViolation(String),

    #[error("bracket degree {degree} exceeds the limit {limit}")]
    DegreeTooLarge { degree: usize, limit: usize },

    #[error("nested bracket degree {degree} exceeds the finite-difference limit {limit}")]
    DegreeTooDeep { degree: usize, limit: usize },

    #[error("drift does not vanish at the analysis point (|f + G u|_inf = {0:.3e})")]
    DriftNotVanishing(f64),

    #[error("equilibrium solve did not converge: {0}")]
    NoConvergence(String),

    #[error("equilibrium is infeasible: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// True for errors caused by malformed inputs rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::DegreeTooLarge { .. }
                | Error::DegreeTooDeep { .. }
                | Error::Dimension { .. }
                | Error::InvalidParameter(_)
                | Error::NonUnitGamma(_)
                | Error::NonSkewInput(_)
        )
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonSkewInput(_) => "NonSkewInput",
            Error::GimbalSingularity { .. } => "GimbalSingularity",
            Error::NonUnitGamma(_) => "NonUnitGamma",
            Error::SingularMassBlock(_) => "SingularMassBlock",
            Error::ChartViolation(_) => "ChartViolation",
            Error::DegreeTooLarge { .. } => "DegreeTooLarge",
            Error::DegreeTooDeep { .. } => "DegreeTooDeep",
            Error::DriftNotVanishing(_) => "DriftNotVanishing",
            Error::NoConvergence(_) => "NoConvergence",
            Error::Infeasible(_) => "Infeasible",
            Error::Dimension { .. } => "Dimension",
            Error::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
