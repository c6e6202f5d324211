//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument `{name}` = {value} outside the domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("Levy measure not integrable: {0}")]
    Integrability(String),

    #[error("quadrature did not converge at {at} (estimated error {estimate:e})")]
    Quadrature { at: f64, estimate: f64 },

    #[error(
        "finite-activity Levy measure without drift: inverse subordinator would not be continuous"
    )]
    FiniteActivity,

    #[error("subordinator path exhausted: requested t = {requested} but max H = {max_h}")]
    PathExhausted { requested: f64, max_h: f64 },

    #[error("Gaver-Stehfest weights lose precision for {n_terms} terms")]
    Precision { n_terms: usize },

    #[error("transform is not flagged complex-analytic; Talbot inversion unsupported")]
    UnsupportedTransform,

    #[error("Laplace inversion unstable at t = {t}: Gaver-Stehfest {stehfest}, Talbot {talbot}")]
    InversionInstability { t: f64, stehfest: f64, talbot: f64 },

    #[error("epsilon-layer under-resolved: {cells} cells (need at least {required})")]
    UnderResolvedLayer { cells: usize, required: usize },

    #[error("operator is not self-adjoint in the weighted inner product (residual {residual:e})")]
    NotSelfAdjoint { residual: f64 },

    #[error("singular linear system at row {row}")]
    Singular { row: usize },

    #[error("time step {dt} too coarse (limit {limit})")]
    TimeStep { dt: f64, limit: f64 },

    #[error("local-time shell {delta} too thin for dt = {dt} (need delta > 3 sqrt(dt))")]
    ShellWidth { delta: f64, dt: f64 },

    #[error("generators do not share an embedding grid: {0}")]
    GridMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "(0, inf)",
        })
    }
}

pub(crate) fn check_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, inf)",
        })
    }
}

pub(crate) fn check_unit_open(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "(0, 1)",
        })
    }
}
