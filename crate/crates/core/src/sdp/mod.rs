//! Block semidefinite programs: problem form, sparse text format and a
//! primal-dual interior-point solver.
//!
//! Problems have the shape
//!
//! ```text
//! min  sum_k <C_k, X_k> + c^T y
//! s.t. <A_i, X_{k(i)}> + b_i^T y = rhs_i     for every row i
//!      X_k PSD,  y free
//! ```
//!
//! where each row touches at most one block. That restriction is what SOS
//! compilation produces and keeps the Schur complement block diagonal.

mod ipm;
mod problem;

use nalgebra::DMatrix;
use thiserror::Error;

pub use ipm::InteriorPointSolver;
pub use problem::{assemble_symmetric, Constraint, SdpProblem, SymEntry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("invalid SDP problem: {0}")]
    Invalid(String),
    #[error("SDP text format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl std::fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::Unbounded => "unbounded",
            SdpStatus::NumericalFailure => "numerical-failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative primal and dual infeasibility accepted at optimality.
    pub feas_tol: f64,
    /// Relative duality gap accepted at optimality.
    pub gap_tol: f64,
    /// Threshold on normalized Farkas residuals for infeasibility claims.
    pub infeas_tol: f64,
    pub max_iter: usize,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-7,
            gap_tol: 1e-7,
            infeas_tol: 1e-8,
            max_iter: 100,
            verbose: false,
        }
    }
}

impl SolverOptions {
    /// Same options with feasibility and gap tolerances multiplied by `factor`.
    pub fn loosened(&self, factor: f64) -> Self {
        SolverOptions {
            feas_tol: self.feas_tol * factor,
            gap_tol: self.gap_tol * factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Primal block matrices `X_k`.
    pub blocks: Vec<DMatrix<f64>>,
    /// Free variables `y`.
    pub free: Vec<f64>,
    /// Equality multipliers. For an infeasible status this is a normalized
    /// Farkas certificate.
    pub dual: Vec<f64>,
    /// Dual slack matrices `S_k = C_k - sum_i dual_i A_i`.
    pub dual_slack: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `max_i |rhs_i - <A_i, X> - b_i^T y| / (1 + max_i |rhs_i|)`.
    pub primal_residual: f64,
    /// Relative dual infeasibility, Frobenius and Euclidean norms.
    pub dual_residual: f64,
    /// `|pobj - dobj| / (1 + |pobj| + |dobj|)`.
    pub gap: f64,
    pub iterations: usize,
    pub message: String,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

/// Anything able to solve an [`SdpProblem`]. Implementations must be
/// reentrant: `solve` takes `&self` and may be called from several threads.
pub trait ConicSolver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &SdpProblem, opts: &SolverOptions) -> SdpSolution;
}

/// Evaluates `<A_i, X> + b_i^T y` for every row, in original data.
pub fn row_activity(problem: &SdpProblem, blocks: &[DMatrix<f64>], free: &[f64]) -> Vec<f64> {
    problem
        .constraints
        .iter()
        .map(|c| {
            let mut s = 0.0;
            if let Some(k) = c.block {
                let x = &blocks[k];
                for e in &c.entries {
                    let w = if e.row == e.col { 1.0 } else { 2.0 };
                    s += w * e.value * x[(e.row, e.col)];
                }
            }
            for &(j, v) in &c.free {
                s += v * free[j];
            }
            s
        })
        .collect()
}

#[cfg(test)]
mod tests;
