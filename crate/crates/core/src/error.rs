use thiserror::Error;

/// Every failure the library can report.
///
/// Variants are grouped by the stage that raises them. [`Error::is_numerical`]
/// separates numerical failures from bad input, which the CLI maps onto
/// distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // modesolver
    #[error("no bound mode: {0}")]
    NoBoundMode(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("offset {y0_nm} nm outside grid half-width {half_width_nm} nm")]
    OutOfRange { y0_nm: f64, half_width_nm: f64 },

    // opticalstack
    #[error("singular transfer matrix: {0}")]
    SingularMatrix(String),

    // emission
    #[error("reflectivity {0} outside [0, 1]")]
    ReflectivityOutOfRange(f64),
    #[error("both field weights vanish")]
    ZeroField,
    #[error("degenerate rates: Gamma_x0 + Gamma_y0 = 0")]
    DegenerateRates,

    // synthlab
    #[error("voltage {voltage} V outside calibrated range [{min}, {max}] V")]
    OutOfCalibration { voltage: f64, min: f64, max: f64 },

    // inference
    #[error("rates not identifiable: {0}")]
    NonIdentifiable(String),
    #[error("fit did not converge after {0} iterations")]
    NotConverged(usize),
    #[error("insufficient phase span: {0}")]
    InsufficientPhaseSpan(String),
    #[error("insufficient fringes: {0}")]
    InsufficientFringes(String),
    #[error("branch ambiguity: {0}")]
    BranchAmbiguity(String),
    #[error("no parameter triple is consistent with the measured visibilities")]
    EmptyFeasibleSet,
    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoBoundMode(_)
                | Error::GridTooCoarse(_)
                | Error::SingularMatrix(_)
                | Error::DegenerateRates
                | Error::NonIdentifiable(_)
                | Error::NotConverged(_)
                | Error::InsufficientPhaseSpan(_)
                | Error::InsufficientFringes(_)
                | Error::BranchAmbiguity(_)
                | Error::EmptyFeasibleSet
                | Error::ZeroField
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
