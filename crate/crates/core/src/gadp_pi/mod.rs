//! Offline policy iteration for polynomial input-affine systems.
//!
//! Each step evaluates the current policy through an SOS program over the
//! value-function coefficients and then improves the policy with
//! `u = -1/2 R^{-1} g^T grad V`.

mod eval;
mod feasible;
mod iterate;
mod operators;
mod system;
mod value;

pub use eval::{certify_l_operator, policy_eval_program, policy_eval_sos, EvalOptions, EvalOutcome};
pub use feasible::{robust_feasible_v0, FeasibleObjective, FeasibleOptions, FeasibleOutcome};
pub use iterate::{grid_max, run_pi, IterationRecord, IterationTrace, PiConfig};
pub use operators::{
    degree_bound, hamiltonian, hamiltonian_poly, improved_input, input_gap, l_operator,
    l_operator_affine, l_operator_poly, policy_improve,
};
pub use system::{CostSpec, ParamSpec, ParametricSystem, PolySystem};
pub use value::{Policy, ValueFn};

pub(crate) use eval::{solve_with_retry, squared_norm};

use thiserror::Error;

use crate::polyalg::PolyError;
use crate::soscomp::SosError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PiError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid cost: {0}")]
    InvalidCost(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("improved policy has term {monomial} beyond degree {d}")]
    DegreeOverflow { monomial: String, d: u32 },
    #[error("system is not affine in parameter `{0}`")]
    NonAffine(String),
    #[error("{stage} is infeasible: {message}")]
    Infeasible { stage: String, message: String },
    #[error("{stage} failed: {message}")]
    SolverFailure { stage: String, message: String },
    #[error("initial pair is not admissible, L(V0, u1) is not certified SOS: {message}")]
    Assumption4 { message: String },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Sos(#[from] SosError),
}
