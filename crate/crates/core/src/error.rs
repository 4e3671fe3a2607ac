use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("particles {0} and {1} coincide")]
    CoincidentPoints(usize, usize),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("gaussian quadrature did not converge within the refinement cap")]
    QuadratureNotConverged,
    #[error("dual solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("damped newton step could not be accepted after {0} halvings")]
    DampingFailed(usize),
    #[error("cell {0} has no mass at the initial potentials")]
    EmptyCell(usize),
    #[error("particle {0} left the domain")]
    LeftDomain(usize),
    #[error("point ({0}, {1}) is outside the domain")]
    OutsideDomain(f64, f64),
    #[error("{0} grid nodes inside the domain were never reached")]
    UnreachableRegion(usize),
    #[error("grid initialization produced no points")]
    EmptyGrid,
    #[error("domain length {0} is smaller than 1, the density constraint is infeasible")]
    InfeasibleDomain(f64),
    #[error("radial reference hit a singular denominator at t = {t} (b = {b})")]
    SingularDenominator { t: f64, b: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
