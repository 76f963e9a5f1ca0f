//! Options and failure types shared by the Newton solvers.

use std::fmt;

use crate::Real;

/// Stopping rules for the Newton iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<T> {
    pub max_iterations: usize,
    /// Absolute change in the objective between iterations.
    pub objective_tolerance: T,
    /// Euclidean norm of the parameter step.
    pub step_tolerance: T,
    /// Gradient norm relative to `1 + objective`.
    pub gradient_tolerance: T,
}

impl<T: Real> Default for SolveOptions<T> {
    /// `1e-12` / `1e-10` / `1e-10` in double precision; floored at small
    /// multiples of machine epsilon for narrower types.
    fn default() -> Self {
        let eps = T::eps();
        Self {
            max_iterations: 50,
            objective_tolerance: T::lit(1e-12).max(T::lit(100.0) * eps),
            step_tolerance: T::lit(1e-10).max(T::lit(1000.0) * eps),
            gradient_tolerance: T::lit(1e-10).max(T::lit(1000.0) * eps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveErrorKind {
    /// The Newton system could not be factored.
    SingularHessian,
    /// The objective or an iterate became non-finite.
    NonFinite,
    /// The initial state does not match the dataset length.
    SizeMismatch,
}

impl fmt::Display for SolveErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SingularHessian => f.write_str("singular Newton system"),
            Self::NonFinite => f.write_str("non-finite iterate (divergence)"),
            Self::SizeMismatch => f.write_str("initial state does not match the dataset"),
        }
    }
}

/// Solver failure carrying the report accumulated up to the failing iteration.
#[derive(Debug, Clone)]
pub struct SolveError<R> {
    pub kind: SolveErrorKind,
    pub report: R,
}

impl<R> fmt::Display for SolveError<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "solver failure: {}", self.kind)
    }
}

impl<R: fmt::Debug> std::error::Error for SolveError<R> {}
