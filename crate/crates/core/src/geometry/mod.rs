//! Closed convex target sets and the canonical frame used by the samplers.
//!
//! Every set exposes exact projection and distance oracles. Distances are the
//! only thing the estimators need: a sample contributes to the inflated event
//! `{x : d(x, E) <= u}` exactly when its distance is at most `u`, so
//! [`ConvexTarget::distance_within`] lets callers skip the projection for
//! samples that are provably farther than `u` away.

mod frame;
mod polyhedron;
mod quadratic;
mod target;

pub use frame::CanonicalFrame;
pub use polyhedron::{Halfspace, Polyhedron, ProjectionMethod};
pub use quadratic::QuadraticSuperlevel;
pub use target::{ConvexTarget, TargetShape};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("set description is empty or has dimension zero")]
    NoDimensions,
    #[error("halfspace normal has zero length")]
    ZeroNormal,
    #[error("non-finite value in set description or query point")]
    NonFinite,
    #[error("set is empty")]
    EmptySet,
    #[error("set contains the origin")]
    ContainsOrigin,
    #[error("quadratic coefficient c[{index}] = {value} is positive; superlevel set is not convex")]
    NonConvex { index: usize, value: f64 },
    #[error("scale factor must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("projection did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("min-norm point has norm {norm:e}; canonical frame is degenerate")]
    Degenerate { norm: f64 },
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn check_point(x: &[f64], dim: usize) -> Result<(), GeometryError> {
    if x.len() != dim {
        return Err(GeometryError::DimensionMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    Ok(())
}
