//! SOS programs: affine polynomial constraints, compilation to block SDPs
//! through Gram matrices, and certificate recovery.

mod certificate;
mod compile;
mod program;

pub use certificate::{extract_certificate, gram_polynomial, CertificateOptions, GramCertificate};
pub use compile::{compile, CompileOptions, CompiledSos, RowOrigin, SosBlock};
pub use program::{AffinePolynomial, DecisionVector, LinearEquality, SosConstraint, SosProgram};

use thiserror::Error;

use crate::polyalg::{basis_len, MonomialBasis};
use crate::sdp::{ConicSolver, SdpSolution, SdpStatus, SolverOptions};

/// Largest Gram basis the compiler will build.
pub const MAX_GRAM_BASIS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SosError {
    #[error("decision variable name `{0}` is already taken")]
    DuplicateName(String),
    #[error("decision variable {0} does not exist")]
    UnknownVariable(usize),
    #[error("invalid bounds [{lo}, {hi}] for variable {var}")]
    InvalidBounds { var: usize, lo: f64, hi: f64 },
    #[error("variable count mismatch: expected {expected}, got {got}")]
    VarCountMismatch { expected: usize, got: usize },
    #[error("SOS constraint `{constraint}` has odd degree {degree}")]
    OddDegree { constraint: String, degree: u32 },
    #[error("Gram basis of {len} monomials exceeds the limit of {MAX_GRAM_BASIS}")]
    BasisTooLarge { len: usize },
    #[error("certificates need an optimal solution, solver returned {0}")]
    NotOptimal(SdpStatus),
    #[error("certificate for `{constraint}` failed: residual {residual:.3e}, min eigenvalue {min_eigenvalue:.3e}")]
    Certificate {
        constraint: String,
        residual: f64,
        min_eigenvalue: f64,
    },
    #[error(transparent)]
    Poly(#[from] crate::polyalg::PolyError),
}

/// Gram basis `m_{ceil(dmin/2), dmax/2}` for a polynomial with degrees in
/// `[dmin, dmax]`. A `dmin` of 0 or 1 yields a basis that includes the
/// constant monomial only when `dmin = 0`.
pub fn gram_basis_for(dmin: u32, dmax: u32, n: usize) -> Result<MonomialBasis, SosError> {
    if dmax % 2 == 1 {
        return Err(SosError::OddDegree {
            constraint: String::new(),
            degree: dmax,
        });
    }
    let lo = dmin.div_ceil(2).min(dmax / 2);
    let hi = dmax / 2;
    let len = basis_len(n, lo, hi);
    if len > MAX_GRAM_BASIS {
        return Err(SosError::BasisTooLarge { len });
    }
    Ok(MonomialBasis::spanning(n, lo, hi)?)
}

#[derive(Debug, Clone)]
pub struct SosSolution {
    pub status: SdpStatus,
    /// Decision values (meaningful when `status` is optimal).
    pub values: Vec<f64>,
    pub objective: f64,
    /// Verified certificates, one per SOS constraint, when optimal or inexact.
    pub certificates: Vec<GramCertificate>,
    /// The solver stalled before proving optimality, but the primal point is
    /// feasible and every certificate verified.
    pub inexact: bool,
    pub sdp: SdpSolution,
}

impl SosSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    /// Optimal, or an inexact point whose certificates verified.
    pub fn is_certified(&self) -> bool {
        self.is_optimal() || self.inexact
    }
}

/// Compiles, solves and certifies. An optimal status is only returned together
/// with certificates that pass [`GramCertificate::verify`].
pub fn solve_sos(
    sp: &SosProgram,
    solver: &dyn ConicSolver,
    opts: &SolverOptions,
    compile_opts: &CompileOptions,
    cert_opts: &CertificateOptions,
) -> Result<SosSolution, SosError> {
    let compiled = compile(sp, compile_opts)?;
    let sdp = solver.solve(&compiled.sdp, opts);
    let (certificates, inexact) = match sdp.status {
        SdpStatus::Optimal => (extract_certificate(sp, &compiled, &sdp, cert_opts)?, false),
        SdpStatus::NumericalFailure if sdp.primal_residual <= cert_opts.stalled_residual => {
            match extract_certificate(sp, &compiled, &sdp, cert_opts) {
                Ok(c) => (c, true),
                Err(_) => (Vec::new(), false),
            }
        }
        _ => (Vec::new(), false),
    };
    Ok(SosSolution {
        status: sdp.status,
        values: sdp.free.clone(),
        objective: sp.objective_value(&sdp.free),
        certificates,
        inexact,
        sdp,
    })
}

impl SosProgram {
    /// [`solve_sos`] with default compile and certificate options.
    pub fn solve(&self, solver: &dyn ConicSolver, opts: &SolverOptions) -> Result<SosSolution, SosError> {
        solve_sos(
            self,
            solver,
            opts,
            &CompileOptions::default(),
            &CertificateOptions::default(),
        )
    }
}

#[cfg(test)]
mod tests;
