use thiserror::Error;

/// Errors raised by the numerical pipeline.
///
/// `Domain` marks a violated precondition on user-supplied numbers; the CLI
/// maps it to its own exit code. Everything else is a numerical failure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed at rho = {rho}: {reason}")]
    Integration { rho: f64, reason: String },

    #[error(
        "tail not resolved: fit residual {residual:e} exceeds 10x uncertainty {uncertainty:e} \
         (try a larger rho_max)"
    )]
    TailNotResolved { residual: f64, uncertainty: f64 },

    #[error("bad bracket: {0}")]
    BadBracket(String),

    #[error("empty bracket: miss function has no sign change on [{lo}, {hi}]")]
    EmptyBracket { lo: f64, hi: f64 },

    #[error("no unstable expander: p = {p} is at or above the Joseph-Lundgren exponent")]
    NoUnstableExpander { p: f64 },

    #[error("grid too coarse: spacing {spacing} exceeds {max}")]
    Resolution { spacing: f64, max: f64 },

    #[error(
        "divergent norm: |f|^{gamma} with tail exponent {tail_exponent} is not integrable \
         against rho^{}",
        dimension - 1
    )]
    DivergentNorm {
        gamma: f64,
        tail_exponent: f64,
        dimension: u32,
    },

    #[error("quadrature did not converge: achieved relative change {achieved:e}")]
    Quadrature { achieved: f64 },

    #[error("step rejected: dtau = {dtau} exceeds the stability cap; use dtau <= {suggested}")]
    StabilityCap { dtau: f64, suggested: f64 },

    #[error(
        "seed amplitude too large: lower bound violated at tau = {tau}; \
         try epsilon <= {suggested_epsilon:e}"
    )]
    Amplitude { tau: f64, suggested_epsilon: f64 },

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
