//! Model-free policy iteration from trajectory data.
//!
//! Along `x' = f + g (u_i + e)` every value candidate `V = p^T m_{2,2r}`
//! satisfies, on each sampling interval,
//! `int sigma_e^T [l_p; vec(K_p)] = int r(x, u_i) + p^T (m(x(t1)) - m(x(t0)))`,
//! where `l_p^T m_{2,2d} = L(V, u_i)` and `K_p m_{1,d}` is the improved
//! policy. Stacking intervals gives `Phi [l_p; vec(K_p)] = Xi + Theta p`,
//! which is solved for `(l_p, K_p)` in the least-squares sense and fed to an
//! SOS program over `p` alone.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gadp_pi::{solve_with_retry, CostSpec, EvalOptions, PiError, Policy, ValueFn};
use crate::polyalg::{box_integral, Hyperbox, MonomialBasis, Polynomial};
use crate::sdp::{ConicSolver, SdpStatus};
use crate::simkit::{
    collect_intervals, ChannelSpec, IntervalQuadratures, NoiseSpec, Plant, SimError, Trajectory,
};
use crate::soscomp::{AffinePolynomial, GramCertificate, SosProgram};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdpError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("rank condition violated: rank {rank} < {needed}")]
    Rank { rank: usize, needed: usize },
    #[error("learning failed: {0}; collect more data or loosen the solver tolerance")]
    Learning(String),
    #[error(transparent)]
    Pi(#[from] PiError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Stacked data `Phi`, `Xi`, `Theta` for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    pub n: usize,
    pub m: usize,
    pub r: u32,
    pub d: u32,
    /// `q x (|m_{2,2d}| + m |m_{1,d}|)`.
    pub phi: DMatrix<f64>,
    pub xi: DVector<f64>,
    /// `q x |m_{2,2r}|`.
    pub theta: DMatrix<f64>,
    pub intervals: Vec<(f64, f64)>,
}

impl DataBatch {
    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }

    /// `|m_{2,2d}|`.
    pub fn n_quad(&self) -> usize {
        self.phi.ncols() - self.n_gain()
    }

    /// `m |m_{1,d}|`.
    pub fn n_gain(&self) -> usize {
        self.m * MonomialBasis::new(self.n, 1, self.d).map_or(0, |b| b.len())
    }

    /// `Phi z - Xi - Theta p`.
    pub fn residual(&self, z: &[f64], p: &[f64]) -> DVector<f64> {
        &self.phi * DVector::from_column_slice(z) - &self.xi - &self.theta * DVector::from_column_slice(p)
    }
}

/// Stacks interval quadratures into a batch.
pub fn assemble(parts: &[IntervalQuadratures]) -> Result<DataBatch, AdpError> {
    let first = parts
        .first()
        .ok_or_else(|| AdpError::Argument("no intervals to assemble".into()))?;
    let (n, m, r, d) = (first.n, first.m, first.r, first.d);
    let ns = first.sigma.len();
    let nb = first.basis_diff.len();
    let expect_s = MonomialBasis::new(n, 2, 2 * d).map_err(PiError::from)?.len()
        + m * MonomialBasis::new(n, 1, d).map_err(PiError::from)?.len();
    let expect_b = MonomialBasis::new(n, 2, 2 * r).map_err(PiError::from)?.len();
    if ns != expect_s || nb != expect_b {
        return Err(AdpError::Argument(format!(
            "channel lengths {ns}/{nb} do not match the bases {expect_s}/{expect_b}"
        )));
    }
    let q = parts.len();
    let mut phi = DMatrix::zeros(q, ns);
    let mut theta = DMatrix::zeros(q, nb);
    let mut xi = DVector::zeros(q);
    let mut intervals = Vec::with_capacity(q);
    for (k, part) in parts.iter().enumerate() {
        if (part.n, part.m, part.r, part.d) != (n, m, r, d)
            || part.sigma.len() != ns
            || part.basis_diff.len() != nb
        {
            return Err(AdpError::Argument(format!("interval {k} uses different bases")));
        }
        for (j, v) in part.sigma.iter().enumerate() {
            phi[(k, j)] = *v;
        }
        for (j, v) in part.basis_diff.iter().enumerate() {
            theta[(k, j)] = *v;
        }
        xi[k] = part.cost;
        intervals.push((part.t0, part.t1));
    }
    Ok(DataBatch {
        n,
        m,
        r,
        d,
        phi,
        xi,
        theta,
        intervals,
    })
}

/// Columns of `Phi` scaled to unit norm, and the scale factors. Zero columns
/// keep scale 1.
fn normalized_columns(phi: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let mut out = phi.clone();
    let mut scales = Vec::with_capacity(phi.ncols());
    for j in 0..phi.ncols() {
        let norm = phi.column(j).norm();
        let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        out.column_mut(j).scale_mut(s);
        scales.push(s);
    }
    (out, scales)
}

/// Numerical rank of `Phi` after column normalization: the number of singular
/// values above `tol * sigma_max`.
pub fn data_rank(batch: &DataBatch, tol: f64) -> usize {
    if batch.rows() == 0 || batch.phi.ncols() == 0 {
        return 0;
    }
    let (scaled, _) = normalized_columns(&batch.phi);
    let sv = SVD::new(scaled, false, false).singular_values;
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Whether `Phi` has full column rank.
pub fn rank_ok(batch: &DataBatch, tol: f64) -> bool {
    data_rank(batch, tol) == batch.phi.ncols()
}

/// Least-squares map `(Xi + Theta p) -> [l_p; vec(K_p)]` as `a + B p`.
fn elimination(batch: &DataBatch) -> Result<(DVector<f64>, DMatrix<f64>), AdpError> {
    let (scaled, scales) = normalized_columns(&batch.phi);
    let svd = SVD::new(scaled, true, true);
    let smax = svd.singular_values.max();
    let pinv = svd
        .pseudo_inverse(1e-12 * smax)
        .map_err(|e| AdpError::Learning(format!("pseudo-inverse failed: {e}")))?;
    let d = DMatrix::from_diagonal(&DVector::from_vec(scales));
    let a = &d * (&pinv * &batch.xi);
    let b = &d * (&pinv * &batch.theta);
    Ok((a, b))
}

#[derive(Debug, Clone)]
pub struct OnlineOptions {
    pub eval: EvalOptions,
    /// Relative singular-value threshold of the rank test.
    pub rank_tol: f64,
    /// Warn when the least-squares residual exceeds `warn * (1 + |Xi|)`.
    pub residual_warn: f64,
    /// `delta >= 0`: the data-fitted constraint is relaxed to
    /// `l_p^T m_{2,2d} + delta * |m_{1,d}|^2` SOS. Least-squares noise on
    /// coefficients whose true value is zero can otherwise push a boundary
    /// case out of the SOS cone.
    pub data_tolerance: f64,
}

impl Default for OnlineOptions {
    fn default() -> Self {
        OnlineOptions {
            eval: EvalOptions::default(),
            rank_tol: 1e-8,
            residual_warn: 1e-3,
            data_tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OnlineIterate {
    pub value: ValueFn,
    /// The improved policy `K_{i+1}` recovered from data.
    pub policy: Policy,
    /// Coefficients of `L(V_i, u_i)` on `m_{2,2d}`.
    pub l_p: Vec<f64>,
    /// `|Phi [l_p; vec(K_p)] - Xi - Theta p|`.
    pub residual: f64,
    pub warning: Option<String>,
    pub objective: f64,
    pub status: SdpStatus,
    pub certificates: Vec<GramCertificate>,
    pub primal_residual: f64,
    pub gap: f64,
    pub solver_iterations: usize,
    pub retried: bool,
    pub inexact: bool,
}

/// One model-free evaluation and improvement step: minimize `c^T p` subject
/// to `l_p^T m_{2,2d}` SOS and `(p_prev - p)^T m_{2,2r}` SOS, with `l_p`
/// eliminated through least squares.
pub fn online_step(
    batch: &DataBatch,
    p_prev: &ValueFn,
    c: &[f64],
    opts: &OnlineOptions,
    solver: &dyn ConicSolver,
) -> Result<OnlineIterate, AdpError> {
    let n = batch.n;
    let vb = ValueFn::basis_for(n, batch.r)?;
    if p_prev.n != n || p_prev.r != batch.r || c.len() != vb.len() {
        return Err(AdpError::Argument(format!(
            "value function and objective must live on m_{{2,{}}} in {n} variables",
            2 * batch.r
        )));
    }
    let needed = batch.phi.ncols();
    let rank = data_rank(batch, opts.rank_tol);
    if rank < needed {
        return Err(AdpError::Rank { rank, needed });
    }
    let (a, b) = elimination(batch)?;
    let quad = MonomialBasis::new(n, 2, 2 * batch.d).map_err(PiError::from)?;
    let nq = quad.len();

    let mut sp = SosProgram::new(n);
    let vars = sp.add_variables("p", vb.len()).map_err(PiError::from)?;
    for (&j, &cj) in vars.iter().zip(c) {
        sp.set_objective(j, cj).map_err(PiError::from)?;
    }
    if !(opts.data_tolerance >= 0.0 && opts.data_tolerance.is_finite()) {
        return Err(AdpError::Argument("data tolerance must be nonnegative".into()));
    }
    let mut l0 = quad.polynomial(&a.as_slice()[..nq]);
    if opts.data_tolerance > 0.0 {
        let lin = MonomialBasis::new(n, 1, batch.d).map_err(PiError::from)?;
        for mono in lin.entries() {
            l0 = &l0 + &Polynomial::monomial(mono.mul(mono), opts.data_tolerance);
        }
    }
    let mut l = AffinePolynomial::from_constant(l0);
    for (col, &j) in vars.iter().enumerate() {
        let coeffs: Vec<f64> = (0..nq).map(|i| b[(i, col)]).collect();
        l.add_term(j, &quad.polynomial(&coeffs)).map_err(PiError::from)?;
    }
    sp.add_sos("L(V,u) from data", l).map_err(PiError::from)?;
    let mut dec = AffinePolynomial::from_constant(p_prev.polynomial());
    for (mono, &j) in vb.entries().iter().zip(&vars) {
        dec.add_term(j, &Polynomial::monomial(mono.clone(), -1.0))
            .map_err(PiError::from)?;
    }
    sp.add_sos("V_prev - V", dec).map_err(PiError::from)?;
    if let Some(eps) = opts.eval.margin {
        let norm = (0..n).fold(Polynomial::zero(n), |acc, i| &acc + &Polynomial::var(n, i).powi(2));
        let mut pos = AffinePolynomial::from_constant(norm.scale(-eps));
        for (mono, &j) in vb.entries().iter().zip(&vars) {
            pos.add_term(j, &Polynomial::monomial(mono.clone(), 1.0))
                .map_err(PiError::from)?;
        }
        sp.add_sos("V - margin", pos).map_err(PiError::from)?;
    }
    let (sol, retried) = solve_with_retry(&sp, solver, &opts.eval, "online policy evaluation")
        .map_err(|e| match e {
            PiError::Infeasible { message, .. } | PiError::SolverFailure { message, .. } => {
                AdpError::Learning(message)
            }
            other => AdpError::Pi(other),
        })?;
    let p = sol.values[..vb.len()].to_vec();
    let z = &a + &b * DVector::from_column_slice(&p);
    let residual = batch.residual(z.as_slice(), &p).norm();
    let threshold = opts.residual_warn * (1.0 + batch.xi.norm());
    let warning = (residual > threshold).then(|| {
        format!("least-squares residual {residual:.3e} exceeds {threshold:.3e}")
    });
    let policy = Policy::from_vec(n, batch.d, batch.m, &z.as_slice()[nq..])?;
    let value = ValueFn::new(n, batch.r, p)?;
    Ok(OnlineIterate {
        objective: value.objective(c),
        value,
        policy,
        l_p: z.as_slice()[..nq].to_vec(),
        residual,
        warning,
        status: sol.status,
        certificates: sol.certificates,
        primal_residual: sol.sdp.primal_residual,
        gap: sol.sdp.gap,
        solver_iterations: sol.sdp.iterations,
        retried,
        inexact: sol.inexact,
    })
}

/// Learning schedule and design choices for [`run_online`].
#[derive(Debug, Clone)]
pub struct OnlineConfig {
    pub r: u32,
    pub d: u32,
    pub omega: Hyperbox,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Data collected per policy before an update.
    pub window: f64,
    /// Sampling interval length; `window` must hold a whole number of them.
    pub interval: f64,
    pub noise: NoiseSpec,
    /// Collection may extend to `max_extension * window` when rank is short.
    pub max_extension: f64,
    /// Noise-free run under the final policy after learning.
    pub post_learning: f64,
    pub options: OnlineOptions,
}

impl OnlineConfig {
    pub fn new(r: u32, d: u32, omega: Hyperbox, window: f64, interval: f64, noise: NoiseSpec) -> Self {
        OnlineConfig {
            r,
            d,
            omega,
            epsilon: 1e-3,
            max_iter: 10,
            window,
            interval,
            noise,
            max_extension: 3.0,
            post_learning: 0.0,
            options: OnlineOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRecord {
    pub iter: usize,
    pub p: Vec<f64>,
    pub k_next: Vec<Vec<f64>>,
    pub objective: f64,
    pub status: SdpStatus,
    pub step_norm: f64,
    pub primal_residual: f64,
    pub gap: f64,
    pub retried: bool,
    pub inexact: bool,
    pub solver_iterations: usize,
    /// Least-squares residual of the data equation.
    pub ls_residual: f64,
    pub rank: usize,
    pub rows: usize,
    /// Time at which the policy was switched.
    pub t_update: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OnlineFailure {
    /// Rank never reached within the extended window.
    RankTimeout(String),
    Learning(String),
    Simulation(String),
}

impl std::fmt::Display for OnlineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OnlineFailure::RankTimeout(s) => write!(f, "rank timeout: {s}"),
            OnlineFailure::Learning(s) => write!(f, "learning failure: {s}"),
            OnlineFailure::Simulation(s) => write!(f, "simulation failure: {s}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OnlineTrace {
    pub records: Vec<OnlineRecord>,
    pub converged: bool,
    pub failure: Option<OnlineFailure>,
    /// `V_0, V_1, ...`
    pub values: Vec<ValueFn>,
    /// `u_1, u_2, ...`
    pub policies: Vec<Policy>,
    pub initial_objective: f64,
    pub weights: Vec<f64>,
    /// State and applied input through learning and the post-learning run.
    pub trajectory: Trajectory,
    /// Time at which exploration stopped.
    pub t_learning_end: f64,
    /// Gram certificates of each update.
    pub certificates: Vec<Vec<GramCertificate>>,
}

impl OnlineTrace {
    pub fn final_value(&self) -> &ValueFn {
        self.values.last().expect("trace holds V_0")
    }

    pub fn final_policy(&self) -> &Policy {
        self.policies.last().expect("trace holds u_1")
    }
}

fn without_channels(t: &Trajectory) -> Trajectory {
    Trajectory {
        channels: vec![Vec::new(); t.len()],
        ..t.clone()
    }
}

fn append(log: &mut Option<Trajectory>, seg: &Trajectory) -> Result<(), SimError> {
    let seg = without_channels(seg);
    match log {
        Some(l) => l.extend(&seg),
        None => {
            *log = Some(seg);
            Ok(())
        }
    }
}

/// Learning loop: collect data under `u_i` with exploration until the rank
/// condition holds, update `(V_i, u_{i+1})` from data, switch policy, and stop
/// once `|p_i - p_{i-1}| < epsilon`. Exploration is then switched off and the
/// final policy runs for `post_learning` seconds.
pub fn run_online(
    plant: &mut dyn Plant,
    cost: &CostSpec,
    v0: &ValueFn,
    u1: &Policy,
    config: &OnlineConfig,
    solver: &dyn ConicSolver,
) -> Result<OnlineTrace, AdpError> {
    let n = plant.n();
    if v0.n != n || v0.r != config.r || config.omega.dim() != n {
        return Err(AdpError::Argument(format!(
            "V0 and the region must be in {n} variables with r = {}",
            config.r
        )));
    }
    if u1.n != n || u1.m() != plant.m() || cost.m() != plant.m() || config.noise.m() != plant.m() {
        return Err(AdpError::Argument("input dimensions disagree".into()));
    }
    if !(config.window > 0.0 && config.interval > 0.0 && config.interval <= config.window) {
        return Err(AdpError::Argument("window and interval must satisfy 0 < interval <= window".into()));
    }
    let u1 = Policy::from_polynomials(&u1.polynomials(), config.d)?;
    let spec = ChannelSpec::new(n, cost.clone(), config.r, config.d)?;
    let c = box_integral(&v0.basis(), &config.omega).map_err(PiError::from)?;
    let max_windows = (config.max_extension.max(1.0) + 1e-9).floor() as usize;

    let mut trace = OnlineTrace {
        records: Vec::new(),
        converged: false,
        failure: None,
        values: vec![v0.clone()],
        policies: vec![u1],
        initial_objective: v0.objective(&c),
        weights: c.clone(),
        trajectory: Trajectory {
            t: Vec::new(),
            x: Vec::new(),
            u: Vec::new(),
            channels: Vec::new(),
            h: 0.0,
        },
        t_learning_end: plant.time(),
        certificates: Vec::new(),
    };
    let mut log: Option<Trajectory> = None;

    'learning: for iter in 1..=config.max_iter {
        let u = trace.final_policy().clone();
        let v_prev = trace.final_value().clone();
        let mut parts = Vec::new();
        let mut batch = None;
        for w in 1..=max_windows {
            let seg = match plant.run(&u, &config.noise, config.window, Some(&spec)) {
                Ok(s) => s,
                Err(e) => {
                    trace.failure = Some(OnlineFailure::Simulation(e.to_string()));
                    break 'learning;
                }
            };
            append(&mut log, &seg)?;
            parts.extend(collect_intervals(&seg, config.interval, &spec)?);
            let b = assemble(&parts)?;
            if rank_ok(&b, config.options.rank_tol) {
                batch = Some(b);
                break;
            }
            if w == max_windows {
                let rank = data_rank(&b, config.options.rank_tol);
                trace.failure = Some(OnlineFailure::RankTimeout(format!(
                    "iteration {iter}: rank {rank} of {} after {:.3} s of data",
                    b.phi.ncols(),
                    config.window * w as f64
                )));
                break 'learning;
            }
        }
        let batch = batch.expect("loop exits with a batch or a failure");
        let step = match online_step(&batch, &v_prev, &c, &config.options, solver) {
            Ok(s) => s,
            Err(e) => {
                trace.failure = Some(OnlineFailure::Learning(format!("iteration {iter}: {e}")));
                break;
            }
        };
        let step_norm = step.value.distance(&v_prev);
        trace.records.push(OnlineRecord {
            iter,
            p: step.value.p.clone(),
            k_next: step.policy.k.clone(),
            objective: step.objective,
            status: step.status,
            step_norm,
            primal_residual: step.primal_residual,
            gap: step.gap,
            retried: step.retried,
            inexact: step.inexact,
            solver_iterations: step.solver_iterations,
            ls_residual: step.residual,
            rank: data_rank(&batch, config.options.rank_tol),
            rows: batch.rows(),
            t_update: plant.time(),
            warning: step.warning,
        });
        trace.certificates.push(step.certificates);
        trace.values.push(step.value);
        trace.policies.push(step.policy);
        if step_norm < config.epsilon {
            trace.converged = true;
            break;
        }
    }
    trace.t_learning_end = plant.time();
    if config.post_learning > 0.0 && trace.failure.is_none() {
        let quiet = NoiseSpec::none(plant.m());
        match plant.run(trace.final_policy(), &quiet, config.post_learning, None) {
            Ok(seg) => append(&mut log, &seg)?,
            Err(e) => trace.failure = Some(OnlineFailure::Simulation(e.to_string())),
        }
    }
    if let Some(l) = log {
        trace.trajectory = l;
    }
    Ok(trace)
}
