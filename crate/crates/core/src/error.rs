use alloc::string::String;
use core::fmt;

/// Errors raised by constructors and numerical routines in this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    EmptySupportSet,
    EmptyFamily,
    EmptyMask,
    InvalidParameter(String),
    DimensionMismatch { expected: usize, found: usize },
    NonFinite,
    SingularBlock { point: usize },
    EllipticityViolated { point: usize, value: f64 },
    NotSelfAdjoint { residual: f64 },
    MethodUnavailable(&'static str),
    QuadratureDiverged { nodes: usize, change: f64 },
    DomainTooSmall,
    FitDiverged,
    NoShift,
    NonUniformTimeGrid,
    DirichletTrace { point: usize },
    SupportViolation { point: usize },
    FormRequiresUnitA { point: usize },
    NotCutoffOnSupport { index: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptySupportSet => write!(f, "empty support set"),
            Error::EmptyFamily => write!(f, "empty function family"),
            Error::EmptyMask => write!(f, "grid mask leaves no cells"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NonFinite => write!(f, "non-finite entries"),
            Error::SingularBlock { point } => write!(f, "singular coefficient block at point {point}"),
            Error::EllipticityViolated { point, value } => {
                write!(f, "ellipticity violated at point {point} (smallest eigenvalue {value:e})")
            }
            Error::NotSelfAdjoint { residual } => {
                write!(f, "operator is not self-adjoint (relative residual {residual:e})")
            }
            Error::MethodUnavailable(why) => write!(f, "propagation method unavailable: {why}"),
            Error::QuadratureDiverged { nodes, change } => {
                write!(f, "quadrature did not converge with {nodes} nodes (last change {change:e})")
            }
            Error::DomainTooSmall => write!(f, "domain too small for requested horizon"),
            Error::FitDiverged => write!(f, "growth-bound fit diverged"),
            Error::NoShift => write!(f, "no finite shift restores ellipticity"),
            Error::NonUniformTimeGrid => write!(f, "time grid is not uniform"),
            Error::DirichletTrace { point } => {
                write!(f, "data violates the Dirichlet condition at boundary point {point}")
            }
            Error::SupportViolation { point } => {
                write!(f, "data not supported in the given set (point {point})")
            }
            Error::FormRequiresUnitA { point } => {
                write!(f, "form identity requires a = 1 (violated at point {point})")
            }
            Error::NotCutoffOnSupport { index } => {
                write!(f, "family member {index} is not identically 1 on the support set")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
