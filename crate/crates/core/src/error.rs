use core::fmt;

/// Errors raised by the model and its numerical machinery.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter set violates its constraints.
    InvalidParams(&'static str),
    /// Both sectors are unproductive, so the wage has no solution.
    DegenerateEconomy,
    /// An argument lies outside the domain of a function.
    Domain(&'static str),
    /// A caller broke an operation's precondition.
    Contract(&'static str),
    /// A macro state lies outside the invariant polytope.
    OutsidePolytope { t: f64 },
    /// The adaptive integrator could not make progress.
    StepSizeUnderflow { t: f64, state: alloc::vec::Vec<f64> },
    /// Newton iteration did not converge.
    NoConvergence { iterations: usize, residual: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            Error::DegenerateEconomy => write!(f, "degenerate economy: no productive sector"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::OutsidePolytope { t } => write!(f, "state left the invariant polytope at t={t}"),
            Error::StepSizeUnderflow { t, .. } => write!(f, "step size underflow at t={t}"),
            Error::NoConvergence {
                iterations,
                residual,
            } => write!(
                f,
                "no convergence after {iterations} iterations (residual {residual:e})"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
