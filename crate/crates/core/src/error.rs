use thiserror::Error;

use crate::params::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters:\n{0}")]
    Validation(ValidationReport),

    #[error("ill-posed fault circuit: z_f + z_s = 0")]
    IllPosedFault,

    #[error("algebraic loop divergence after {iterations} iterations (residual {residual:e})")]
    AlgebraicLoopDivergence { iterations: usize, residual: f64 },

    #[error("non-physical inertia analog: t_pll = {0}")]
    NonPhysicalInertia(f64),

    #[error("no steady operating point: {0}")]
    NoOperatingPoint(String),

    #[error("numerical blow-up at t = {t} s (last good time {last_good_t} s)")]
    NumericalBlowUp { t: f64, last_good_t: f64 },

    #[error("invalid bracket [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    InvalidBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("invalid clearing-time bracket [{t_lo}, {t_hi}] s: verdicts {verdict_lo} / {verdict_hi}")]
    InvalidCctBracket {
        t_lo: f64,
        t_hi: f64,
        verdict_lo: String,
        verdict_hi: String,
    },

    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::AlgebraicLoopDivergence { .. }
                | Error::NumericalBlowUp { .. }
                | Error::InvalidBracket { .. }
                | Error::InvalidCctBracket { .. }
                | Error::NonPhysicalInertia(_)
        )
    }
}
