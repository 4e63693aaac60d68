use serde::{Deserialize, Serialize};

use crate::polyalg::{box_integral, Hyperbox, Polynomial};
use crate::sdp::{ConicSolver, SdpStatus};
use crate::soscomp::GramCertificate;

use super::{
    certify_l_operator, degree_bound, hamiltonian, input_gap, l_operator, policy_eval_sos,
    policy_improve, CostSpec, EvalOptions, PiError, Policy, PolySystem, ValueFn,
};

#[derive(Debug, Clone)]
pub struct PiConfig {
    /// `V` is a polynomial of degree `2r`.
    pub r: u32,
    /// Policy degree; defaults to [`degree_bound`].
    pub d: Option<u32>,
    /// Region whose integral of `V` is minimized.
    pub omega: Hyperbox,
    /// Stop when `|p_i - p_{i-1}| < epsilon`.
    pub epsilon: f64,
    pub max_iter: usize,
    pub eval: EvalOptions,
    /// Grid resolution per axis for the Hamiltonian check.
    pub grid_per_axis: usize,
    /// Certify `L(V0, u1)` SOS before iterating.
    pub check_initial: bool,
}

impl PiConfig {
    pub fn new(r: u32, omega: Hyperbox) -> Self {
        PiConfig {
            r,
            d: None,
            omega,
            epsilon: 1e-3,
            max_iter: 20,
            eval: EvalOptions::default(),
            grid_per_axis: 21,
            check_initial: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub p: Vec<f64>,
    /// Gains of the improved policy `u_{i+1}`.
    pub k_next: Vec<Vec<f64>>,
    pub objective: f64,
    pub status: SdpStatus,
    pub step_norm: f64,
    /// Largest value of `H(V_i)` over the grid on the region.
    pub hamiltonian_max: f64,
    /// Max coefficient of `L(V_i, u_{i+1}) - L(V_i, u_i) - |u_{i+1} - u_i|_R^2`.
    pub identity_residual: f64,
    pub primal_residual: f64,
    pub gap: f64,
    pub retried: bool,
    /// Accepted from a stalled solve on the strength of its certificates.
    pub inexact: bool,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub failure: Option<String>,
    /// `V_0, V_1, ...`
    pub values: Vec<ValueFn>,
    /// `u_1, u_2, ...`
    pub policies: Vec<Policy>,
    /// `c^T p_0`.
    pub initial_objective: f64,
    /// Integration weights `c = int_Omega m_{2,2r}`.
    pub weights: Vec<f64>,
    /// Gram certificates of each policy-evaluation step.
    pub certificates: Vec<Vec<GramCertificate>>,
}

impl IterationTrace {
    pub fn final_value(&self) -> &ValueFn {
        self.values.last().expect("trace holds V_0")
    }

    pub fn final_policy(&self) -> &Policy {
        self.policies.last().expect("trace holds u_1")
    }
}

/// Maximum of `p` over the uniform grid on `omega`.
pub fn grid_max(p: &Polynomial, omega: &Hyperbox, per_axis: usize) -> f64 {
    omega
        .grid(per_axis)
        .iter()
        .map(|x| p.eval_unchecked(x))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn identity_residual(v: &ValueFn, u: &Policy, u_next: &Policy, sys: &PolySystem, cost: &CostSpec) -> Result<f64, PiError> {
    let l_next = l_operator(v, u_next, sys, cost)?;
    let l_cur = l_operator(v, u, sys, cost)?;
    let gap = input_gap(&u_next.polynomials(), &u.polynomials(), cost);
    Ok((&(&l_next - &l_cur) - &gap).max_abs_coeff())
}

/// Runs policy iteration from `(V0, u1)`. An inadmissible initial pair is an
/// error; solver failures later on end the trace with `failure` set.
pub fn run_pi(
    sys: &PolySystem,
    cost: &CostSpec,
    v0: &ValueFn,
    u1: &Policy,
    config: &PiConfig,
    solver: &dyn ConicSolver,
) -> Result<IterationTrace, PiError> {
    if v0.r != config.r || v0.n != sys.n() {
        return Err(PiError::Dimension(format!(
            "V0 has n = {}, r = {}; expected n = {}, r = {}",
            v0.n,
            v0.r,
            sys.n(),
            config.r
        )));
    }
    if config.omega.dim() != sys.n() {
        return Err(PiError::Dimension(format!(
            "region has dimension {}, system has {}",
            config.omega.dim(),
            sys.n()
        )));
    }
    let d = config.d.unwrap_or_else(|| degree_bound(sys, cost, config.r));
    let u1 = Policy::from_polynomials(&u1.polynomials(), d)?;
    if u1.m() != sys.m() {
        return Err(PiError::Dimension(format!(
            "policy has {} inputs, system has {}",
            u1.m(),
            sys.m()
        )));
    }
    if config.check_initial {
        certify_l_operator(v0, &u1, sys, cost, solver, &config.eval).map_err(|e| {
            PiError::Assumption4 {
                message: e.to_string(),
            }
        })?;
    }
    let c = box_integral(&v0.basis(), &config.omega)?;
    let mut trace = IterationTrace {
        records: Vec::new(),
        converged: false,
        failure: None,
        values: vec![v0.clone()],
        policies: vec![u1],
        initial_objective: v0.objective(&c),
        weights: c.clone(),
        certificates: Vec::new(),
    };
    for iter in 1..=config.max_iter {
        let v_prev = trace.final_value().clone();
        let u = trace.final_policy().clone();
        let out = match policy_eval_sos(&v_prev, &u, sys, cost, &c, solver, &config.eval) {
            Ok(out) => out,
            Err(e) => {
                trace.failure = Some(format!("iteration {iter}: {e}"));
                break;
            }
        };
        let v = out.value;
        let u_next = match policy_improve(&v, sys, cost, d) {
            Ok(u) => u,
            Err(e) => {
                trace.failure = Some(format!("iteration {iter}: {e}"));
                break;
            }
        };
        let step_norm = v.distance(&v_prev);
        let h = hamiltonian(&v, sys, cost)?;
        trace.records.push(IterationRecord {
            iter,
            p: v.p.clone(),
            k_next: u_next.k.clone(),
            objective: out.objective,
            status: out.status,
            step_norm,
            hamiltonian_max: grid_max(&h, &config.omega, config.grid_per_axis),
            identity_residual: identity_residual(&v, &u, &u_next, sys, cost)?,
            primal_residual: out.primal_residual,
            gap: out.gap,
            retried: out.retried,
            inexact: out.inexact,
            solver_iterations: out.solver_iterations,
        });
        trace.certificates.push(out.certificates);
        trace.values.push(v);
        trace.policies.push(u_next);
        if step_norm < config.epsilon {
            trace.converged = true;
            break;
        }
    }
    Ok(trace)
}
