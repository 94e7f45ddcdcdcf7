//! Error type shared by all modules.

use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes of kernel evaluation and the solvers built on it.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A decomposition axis (or momentum exchange) is numerically zero.
    ZeroAxis,
    /// Momentum exchange below the singular-direction cutoff `eps_q`.
    SingularQ { q: f64, eps_q: f64 },
    /// On-shell-only amplitude called with |p_f| != |p_i| beyond tolerance.
    OffShell { p_f: f64, p_i: f64 },
    /// Partial-wave cutoff too small: tail estimate above 1e-10 of the sum.
    CutoffTooSmall { l_max: usize, tail: f64 },
    /// The in-plane argument violates p · Q = 0.
    OffPlane { dot: f64 },
    /// Successive node-count doublings disagree beyond the target tolerance.
    QuadratureNotConverged { estimate: f64, error: f64, rel_tol: f64 },
    /// Operation not defined for this gas distribution variant.
    UnsupportedVariant(&'static str),
    /// Operation requires a different scattering model.
    WrongModel(&'static str),
    /// MC step too large: dt * rate above the rejection bound.
    StepTooLarge { dt_rate: f64 },
    /// Rejection envelope violated; the precomputed bound is wrong.
    EnvelopeExceeded { ratio: f64 },
    /// A coherence amplitude grew by more than 10% in a single step.
    StepUnstable { growth: f64 },
    /// Boundary cells hold more than the allowed share of the field.
    GridTooSmall { boundary_fraction: f64 },
    /// Drift fit covers fewer than two e-folds of decay.
    FitIllConditioned { efolds: f64 },
    /// A constructor or evaluator received an invalid parameter.
    InvalidParameter(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ZeroAxis => write!(f, "decomposition axis has zero norm"),
            Error::SingularQ { q, eps_q } => {
                write!(f, "momentum exchange |Q| = {q:e} below cutoff {eps_q:e}")
            }
            Error::OffShell { p_f, p_i } => {
                write!(f, "off-shell amplitude request: |p_f| = {p_f:e}, |p_i| = {p_i:e}")
            }
            Error::CutoffTooSmall { l_max, tail } => {
                write!(f, "partial-wave cutoff l_max = {l_max} leaves tail {tail:e}")
            }
            Error::OffPlane { dot } => {
                write!(f, "momentum not in the Q-perpendicular plane (p.Q/|p||Q| = {dot:e})")
            }
            Error::QuadratureNotConverged { estimate, error, rel_tol } => write!(
                f,
                "quadrature not converged: estimate {estimate:e}, doubling difference {error:e}, target {rel_tol:e}"
            ),
            Error::UnsupportedVariant(what) => write!(f, "unsupported distribution variant: {what}"),
            Error::WrongModel(need) => write!(f, "operation requires scattering model: {need}"),
            Error::StepTooLarge { dt_rate } => {
                write!(f, "step too large: dt * rate = {dt_rate:e} exceeds 0.1")
            }
            Error::EnvelopeExceeded { ratio } => {
                write!(f, "rejection envelope exceeded: acceptance ratio {ratio:e} > 1")
            }
            Error::StepUnstable { growth } => {
                write!(f, "coherence step unstable: |g| grew by factor {growth:e}")
            }
            Error::GridTooSmall { boundary_fraction } => {
                write!(f, "grid too small: boundary cells hold {boundary_fraction:e} of the field")
            }
            Error::FitIllConditioned { efolds } => {
                write!(f, "drift fit ill-conditioned: decay covers {efolds:.2} e-folds (< 2)")
            }
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
        }
    }
}

impl core::error::Error for Error {}
