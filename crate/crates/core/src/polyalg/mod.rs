//! Sparse multivariate polynomials, monomial bases, differential operators
//! and box integrals.

mod basis;
pub mod expr;
mod monomial;
mod polynomial;

pub use basis::{basis_len, binomial, box_integral, Hyperbox, MonomialBasis};
pub use expr::{parse_polynomial, Expr};
pub use monomial::Monomial;
pub use polynomial::{Polynomial, PRUNE_TOL};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("variable count mismatch: {left} vs {right}")]
    VarCountMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid basis bounds n={n}, d1={d1}, d2={d2}")]
    InvalidDegreeBounds { n: usize, d1: u32, d2: u32 },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("monomial {monomial} lies outside the basis m_{{{d1},{d2}}}")]
    OutsideBasis { monomial: String, d1: u32, d2: u32 },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("expression is not a polynomial: {0}")]
    NotPolynomial(String),
}

/// `basis(n, d1, d2)`: the ordered monomial vector `m_{d1,d2}(x)`.
pub fn basis(n: usize, d1: u32, d2: u32) -> Result<MonomialBasis, PolyError> {
    MonomialBasis::new(n, d1, d2)
}
