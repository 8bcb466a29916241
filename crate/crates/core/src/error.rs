use thiserror::Error;

use crate::certifier::CertificateReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("non-positive base {base} for non-integer exponent p = {p}")]
    NonPositiveBase { base: f64, p: f64 },

    #[error("degenerate states: u_minus = u_plus = {0}")]
    DegenerateStates(f64),

    #[error("state {value} outside the band [{lo}, {hi}]")]
    OutOfBand { value: f64, lo: f64, hi: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("certification failed for p = {p}, u_minus = {u_minus}, u_plus = {u_plus}: {reason} at U = {witness}")]
    CertificationFailed {
        p: f64,
        u_minus: f64,
        u_plus: f64,
        witness: f64,
        reason: String,
        report: Box<CertificateReport>,
    },

    #[error("non-finite value in {what} at t = {t}")]
    NonFinite { t: f64, what: String },

    #[error("insufficient time span: need t_end >= {required}, got {t_end}")]
    InsufficientSpan { t_end: f64, required: f64 },

    #[error("Poincare battery failure (gap {gap:e}) for {witness}")]
    BatteryFailure { gap: f64, witness: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("step failed at t = {t}: {source}")]
    StepFailed {
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerics (blow-up, positivity loss), as opposed
    /// to bad input or a failed certificate.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite { .. } | Error::NonPositiveBase { .. } => true,
            Error::StepFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "InvalidParams",
            Error::NonPositiveBase { .. } => "NonPositiveBase",
            Error::DegenerateStates(_) => "DegenerateStates",
            Error::OutOfBand { .. } => "OutOfBand",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::QuadratureFailure(_) => "QuadratureFailure",
            Error::CertificationFailed { .. } => "CertificationFailed",
            Error::NonFinite { .. } => "NonFinite",
            Error::InsufficientSpan { .. } => "InsufficientSpan",
            Error::BatteryFailure { .. } => "BatteryFailure",
            Error::EmptyInput(_) => "EmptyInput",
            Error::StepFailed { source, .. } => source.kind(),
        }
    }
}
