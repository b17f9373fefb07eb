//! Exact polynomial and polynomial-vector-field arithmetic over the rationals.

mod coeff;
mod field;
pub mod linalg;
pub mod maps;
mod polynomial;

pub use coeff::{f64_to_rational, rat, rational_pow, rational_to_f64, rint, Coeff, Rational};
pub use field::{
    apply_derivation, bracket_components, linear_combination, monomial_poly, reassemble,
    CoordinateChart, PolyVectorField,
};
pub use polynomial::{CompiledPoly, Monomial, Polynomial};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("vector fields live on different charts")]
    ChartMismatch,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid chart: {0}")]
    InvalidChart(String),
}

/// Vector field with exact rational coefficients.
pub type VectorField = PolyVectorField<Rational>;
