use crate::polyalg::Polynomial;
use crate::sdp::{ConicSolver, SdpStatus, SolverOptions};
use crate::soscomp::{
    solve_sos, AffinePolynomial, CertificateOptions, CompileOptions, GramCertificate, SosError,
    SosProgram,
};

use super::{l_operator_affine, CostSpec, PiError, Policy, PolySystem, ValueFn};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub solver: SolverOptions,
    pub certificate: CertificateOptions,
    pub compile: CompileOptions,
    /// Retry once with 10x looser tolerances and a normalized objective.
    pub retry: bool,
    /// Optional `V - margin * sum x_i^2` SOS constraint.
    pub margin: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            solver: SolverOptions::default(),
            certificate: CertificateOptions::default(),
            compile: CompileOptions::default(),
            retry: true,
            margin: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub value: ValueFn,
    pub objective: f64,
    pub status: SdpStatus,
    pub certificates: Vec<GramCertificate>,
    pub primal_residual: f64,
    pub gap: f64,
    pub solver_iterations: usize,
    pub retried: bool,
    /// Accepted from a stalled solve on the strength of its certificates.
    pub inexact: bool,
}

/// `sum_i x_i^2`.
pub(crate) fn squared_norm(n: usize) -> Polynomial {
    (0..n).fold(Polynomial::zero(n), |acc, i| &acc + &Polynomial::var(n, i).powi(2))
}

/// The policy-evaluation program: minimize `c^T p` subject to
/// `L(V, u)` SOS and `V_prev - V` SOS, with `V = p^T m_{2,2r}`.
pub fn policy_eval_program(
    v_prev: &ValueFn,
    u: &Policy,
    sys: &PolySystem,
    cost: &CostSpec,
    c: &[f64],
    margin: Option<f64>,
) -> Result<SosProgram, PiError> {
    let basis = v_prev.basis();
    if c.len() != basis.len() {
        return Err(PiError::Dimension(format!(
            "objective has {} entries, basis has {}",
            c.len(),
            basis.len()
        )));
    }
    let n = v_prev.n;
    let mut sp = SosProgram::new(n);
    let vars = sp.add_variables("p", basis.len())?;
    for (&j, &cj) in vars.iter().zip(c) {
        sp.set_objective(j, cj)?;
    }
    let l = l_operator_affine(&basis, &vars, &u.polynomials(), sys, cost)?;
    sp.add_sos("L(V,u)", l)?;
    let mut dec = AffinePolynomial::from_constant(v_prev.polynomial());
    for (m, &j) in basis.entries().iter().zip(&vars) {
        dec.add_term(j, &Polynomial::monomial(m.clone(), -1.0))?;
    }
    sp.add_sos("V_prev - V", dec)?;
    if let Some(eps) = margin {
        let mut pos = AffinePolynomial::from_constant(squared_norm(n).scale(-eps));
        for (m, &j) in basis.entries().iter().zip(&vars) {
            pos.add_term(j, &Polynomial::monomial(m.clone(), 1.0))?;
        }
        sp.add_sos("V - margin", pos)?;
    }
    Ok(sp)
}

/// Solves an SOS program under the retry policy: on numerical failure or a
/// failed certificate, one more attempt with tolerances loosened 10x and the
/// objective normalized to unit max-norm.
pub(crate) fn solve_with_retry(
    sp: &SosProgram,
    solver: &dyn ConicSolver,
    opts: &EvalOptions,
    stage: &str,
) -> Result<(crate::soscomp::SosSolution, bool), PiError> {
    let attempt = |prog: &SosProgram, solver_opts: &SolverOptions, cert: &CertificateOptions| {
        solve_sos(prog, solver, solver_opts, &opts.compile, cert)
    };
    let first = attempt(sp, &opts.solver, &opts.certificate);
    let failure = match first {
        Ok(sol) if sol.is_certified() => return Ok((sol, false)),
        Ok(sol) if sol.status == SdpStatus::Infeasible => {
            return Err(PiError::Infeasible {
                stage: stage.to_string(),
                message: sol.sdp.message,
            })
        }
        Ok(sol) => format!("{}: {}", sol.status, sol.sdp.message),
        Err(SosError::Certificate {
            constraint,
            residual,
            min_eigenvalue,
        }) => format!(
            "certificate `{constraint}` rejected (residual {residual:.2e}, min eigenvalue {min_eigenvalue:.2e})"
        ),
        Err(e) => return Err(e.into()),
    };
    if !opts.retry {
        return Err(PiError::SolverFailure {
            stage: stage.to_string(),
            message: failure,
        });
    }
    let mut rescaled = sp.clone();
    let cmax = sp.objective().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if cmax > 0.0 {
        for (j, &cj) in sp.objective().iter().enumerate() {
            rescaled.set_objective(j, cj / cmax)?;
        }
    }
    let loose_cert = CertificateOptions {
        recon_tol: opts.certificate.recon_tol * 10.0,
        eig_floor: opts.certificate.eig_floor * 10.0,
        stalled_residual: opts.certificate.stalled_residual * 10.0,
    };
    match attempt(&rescaled, &opts.solver.loosened(10.0), &loose_cert) {
        Ok(mut sol) if sol.is_certified() => {
            sol.objective = sp.objective_value(&sol.values);
            Ok((sol, true))
        }
        Ok(sol) if sol.status == SdpStatus::Infeasible => Err(PiError::Infeasible {
            stage: stage.to_string(),
            message: sol.sdp.message,
        }),
        Ok(sol) => Err(PiError::SolverFailure {
            stage: stage.to_string(),
            message: format!("{failure}; retry: {}: {}", sol.status, sol.sdp.message),
        }),
        Err(e) => Err(PiError::SolverFailure {
            stage: stage.to_string(),
            message: format!("{failure}; retry: {e}"),
        }),
    }
}

/// One policy-evaluation step: the minimizer of `c^T p` over value functions
/// that certify `u` and lie below `V_prev`.
pub fn policy_eval_sos(
    v_prev: &ValueFn,
    u: &Policy,
    sys: &PolySystem,
    cost: &CostSpec,
    c: &[f64],
    solver: &dyn ConicSolver,
    opts: &EvalOptions,
) -> Result<EvalOutcome, PiError> {
    let sp = policy_eval_program(v_prev, u, sys, cost, c, opts.margin)?;
    let (sol, retried) = solve_with_retry(&sp, solver, opts, "policy evaluation")?;
    let value = ValueFn::new(v_prev.n, v_prev.r, sol.values.clone())?;
    Ok(EvalOutcome {
        objective: value.objective(c),
        value,
        status: sol.status,
        certificates: sol.certificates,
        primal_residual: sol.sdp.primal_residual,
        gap: sol.sdp.gap,
        solver_iterations: sol.sdp.iterations,
        retried,
        inexact: sol.inexact,
    })
}

/// Certifies that `L(V, u)` is SOS with no decision variables.
pub fn certify_l_operator(
    v: &ValueFn,
    u: &Policy,
    sys: &PolySystem,
    cost: &CostSpec,
    solver: &dyn ConicSolver,
    opts: &EvalOptions,
) -> Result<GramCertificate, PiError> {
    let l = super::l_operator(v, u, sys, cost)?;
    let mut sp = SosProgram::new(v.n);
    sp.add_sos("L(V,u)", AffinePolynomial::from_constant(l))?;
    let (sol, _) = solve_with_retry(&sp, solver, opts, "L(V,u) certification")?;
    Ok(sol.certificates.into_iter().next().expect("one constraint"))
}
