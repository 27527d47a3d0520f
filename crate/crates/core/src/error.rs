//! Error type shared by all solver and estimator operations.

use alloc::string::String;
use core::fmt;

/// Errors reported by mesh construction, solvers and estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Unknown benchmark domain identifier.
    UnknownDomain(String),
    /// A patch was requested at a hanging vertex; estimator patches are
    /// defined at master nodes only.
    HangingVertexPatch { vertex: usize },
    /// Negative reaction coefficient at a quadrature point; the energy norm
    /// would be undefined.
    NegativeCoefficient { cell: usize, value: f64 },
    /// Linear solve failed to reach the required relative residual.
    SolveFailed { residual: f64 },
    /// Sparse Cholesky hit a non-positive pivot.
    NotPositiveDefinite { pivot_index: usize },
    /// Fields live on meshes that are not related by refinement.
    MeshesNotNested,
    /// Primal-dual active set iteration did not settle.
    ActiveSetMaxIter { iterations: usize, last_delta: usize },
    /// Lagged-coefficient fixed point for the split stress did not converge.
    FixedPointMaxIter { iterations: usize, residual: f64 },
    /// Algebraic and integral representations of the constraining force
    /// disagree beyond quadrature tolerance (assembly/quadrature bug).
    DualPathMismatch { node: usize, difference: f64 },
    /// Negative radicand in the semi-contact estimator term beyond the sign
    /// tolerance (signals a multiplier sign violation).
    NegativeRadicand { node: usize, value: f64 },
    /// Reference mesh would exceed the desk-scale degree-of-freedom guard.
    ReferenceTooLarge { dofs: usize, limit: usize },
    /// A time step failed; wraps the underlying error with the step index.
    StepFailed { step: usize, source: alloc::boxed::Box<Error> },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::UnknownDomain(name) => write!(f, "unknown domain id `{name}`"),
            Error::HangingVertexPatch { vertex } => {
                write!(f, "patch requested at hanging vertex {vertex}")
            }
            Error::NegativeCoefficient { cell, value } => {
                write!(f, "negative reaction coefficient {value:e} in cell {cell}")
            }
            Error::SolveFailed { residual } => {
                write!(f, "linear solve stalled at relative residual {residual:e}")
            }
            Error::NotPositiveDefinite { pivot_index } => {
                write!(f, "matrix not positive definite (pivot {pivot_index})")
            }
            Error::MeshesNotNested => write!(f, "meshes are not related by refinement"),
            Error::ActiveSetMaxIter { iterations, last_delta } => write!(
                f,
                "active set iteration did not settle after {iterations} iterations \
                 (last change touched {last_delta} nodes)"
            ),
            Error::FixedPointMaxIter { iterations, residual } => write!(
                f,
                "stress-split fixed point did not converge after {iterations} iterations \
                 (residual {residual:e})"
            ),
            Error::DualPathMismatch { node, difference } => write!(
                f,
                "constraining force representations disagree by {difference:e} at node {node}"
            ),
            Error::NegativeRadicand { node, value } => write!(
                f,
                "negative radicand {value:e} in semi-contact term at node {node}"
            ),
            Error::ReferenceTooLarge { dofs, limit } => write!(
                f,
                "reference mesh with {dofs} unknowns exceeds desk-scale limit {limit}"
            ),
            Error::StepFailed { step, source } => write!(f, "time step {step}: {source}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

impl Error {
    pub fn at_step(self, step: usize) -> Error {
        Error::StepFailed { step, source: alloc::boxed::Box::new(self) }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
