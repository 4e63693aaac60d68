use nalgebra::DMatrix;

use crate::polyalg::{box_integral, Hyperbox, Polynomial};
use crate::sdp::{ConicSolver, SdpStatus};
use crate::soscomp::{gram_basis_for, AffinePolynomial, GramCertificate, SosProgram};

use super::{
    l_operator_affine, solve_with_retry, squared_norm, CostSpec, EvalOptions, ParametricSystem,
    PiError, Policy, ValueFn,
};

const SLACK_REGULARIZATION: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleObjective {
    /// Minimize a slack `t >= -1` entering every vertex constraint as
    /// `L_k(V) + t * sum_i m_i^2`, where `m` is the Gram basis, plus
    /// `SLACK_REGULARIZATION` times the integral of `V` over the unit box so
    /// that `V` stays bounded. Success needs the unslacked certificates to
    /// verify.
    Slack,
    /// Minimize the integral of `V` over the box.
    Integral(Hyperbox),
}

#[derive(Debug, Clone)]
pub struct FeasibleOptions {
    /// `V - margin * |x|^2` must be SOS.
    pub margin: f64,
    pub objective: FeasibleObjective,
    pub eval: EvalOptions,
    /// Reject families that are not affine in the parameters.
    pub require_affine: bool,
}

impl Default for FeasibleOptions {
    fn default() -> Self {
        FeasibleOptions {
            margin: 1e-6,
            objective: FeasibleObjective::Slack,
            eval: EvalOptions::default(),
            require_affine: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeasibleOutcome {
    pub value: ValueFn,
    pub status: SdpStatus,
    pub objective: f64,
    /// Optimal slack in [`FeasibleObjective::Slack`] mode.
    pub slack: Option<f64>,
    pub vertices: usize,
    /// Whether the vertex certificates cover the whole parameter box.
    pub affine: bool,
    /// One certificate per vertex for `L(V0, u1)`, then one for the margin.
    pub certificates: Vec<GramCertificate>,
    pub retried: bool,
    pub inexact: bool,
}

/// Finds `V0` with `L(V0, u1)` SOS at every vertex of the parameter box and
/// `V0` positive definite up to the margin. For systems affine in the
/// parameters this certifies `u1` over the whole box; otherwise only the
/// vertices are certified and `affine` is false.
pub fn robust_feasible_v0(
    family: &ParametricSystem,
    cost: &CostSpec,
    u1: &Policy,
    r: u32,
    opts: &FeasibleOptions,
    solver: &dyn ConicSolver,
) -> Result<FeasibleOutcome, PiError> {
    let affine = match family.check_affine() {
        Ok(()) => true,
        Err(e) if opts.require_affine => return Err(e),
        Err(_) => false,
    };
    let n = family.n();
    let basis = ValueFn::basis_for(n, r)?;
    let mut sp = SosProgram::new(n);
    let vars = sp.add_variables("p", basis.len())?;
    let slack = match &opts.objective {
        FeasibleObjective::Integral(omega) => {
            let c = box_integral(&basis, omega)?;
            for (&j, cj) in vars.iter().zip(c) {
                sp.set_objective(j, cj)?;
            }
            None
        }
        FeasibleObjective::Slack => {
            let c = box_integral(&basis, &Hyperbox::symmetric(n, 1.0)?)?;
            for (&j, cj) in vars.iter().zip(c) {
                sp.set_objective(j, SLACK_REGULARIZATION * cj)?;
            }
            let t = sp.add_variable("t")?;
            sp.set_objective(t, 1.0)?;
            sp.set_bounds(t, -1.0, f64::INFINITY)?;
            Some(t)
        }
    };
    let u = u1.polynomials();
    let vertices = family.vertices();
    let mut lops = Vec::with_capacity(vertices.len());
    let mut grams = Vec::with_capacity(vertices.len());
    for (k, theta) in vertices.iter().enumerate() {
        let sys = family.instantiate(theta)?;
        let mut l = l_operator_affine(&basis, &vars, &u, &sys, cost)?;
        lops.push(l.clone());
        if let (Some(t), Some((dmin, dmax))) = (slack, l.degree_range()) {
            let gb = gram_basis_for(dmin, dmax, n)?;
            let diag = gb
                .entries()
                .iter()
                .fold(Polynomial::zero(n), |acc, m| &acc + &Polynomial::monomial(m.mul(m), 1.0));
            l.add_term(t, &diag)?;
            grams.push(gb.entries().to_vec());
        }
        sp.add_sos(format!("L(V,u) at vertex {k}"), l)?;
    }
    let mut pos = AffinePolynomial::from_constant(squared_norm(n).scale(-opts.margin));
    for (m, &j) in basis.entries().iter().zip(&vars) {
        pos.add_term(j, &Polynomial::monomial(m.clone(), 1.0))?;
    }
    sp.add_sos("V - margin", pos)?;
    let (sol, retried) = solve_with_retry(&sp, solver, &opts.eval, "initial value search")?;
    let value = ValueFn::new(n, r, sol.values[..basis.len()].to_vec())?;
    let mut certificates = sol.certificates;
    let t_opt = slack.map(|t| sol.values[t]);
    if let Some(t) = t_opt {
        // L_k(V) = m^T (Q_k - t I) m with Q_k the certificate of the slacked constraint.
        for (k, cert) in certificates.iter_mut().take(vertices.len()).enumerate() {
            let target = lops[k].evaluate(&value.p);
            let dim = grams[k].len();
            let gram = &cert.gram - DMatrix::identity(dim, dim) * t;
            *cert = GramCertificate::from_gram(k, cert.name.clone(), grams[k].clone(), gram, target, &opts.eval.certificate);
            if let Err(e) = cert.verify() {
                if t > 0.0 {
                    return Err(PiError::Infeasible {
                        stage: "initial value search".into(),
                        message: format!("smallest vertex slack is {t:.3e} > 0"),
                    });
                }
                return Err(e.into());
            }
        }
    }
    Ok(FeasibleOutcome {
        value,
        status: sol.status,
        objective: sol.objective,
        slack: t_opt,
        vertices: vertices.len(),
        affine,
        certificates,
        retried,
        inexact: sol.inexact,
    })
}
