//! Fixed-step RK4 simulation of `x' = f + g (u + e)` with the interval
//! integrals needed by the online iteration carried as extra states.
//!
//! The integral channels are `int m_{2,2d}(x)`, `int m_{1,d}(x) (x) R e` and
//! `int q(x) + u^T R u`, all accumulated from the start of the trajectory with
//! the same stepper as the state.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gadp_pi::{CostSpec, Policy, PolySystem};
use crate::polyalg::{MonomialBasis, PolyError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("state norm {norm:.3e} exceeded the blow-up guard at t = {t:.6}")]
    FiniteEscape { t: f64, norm: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("csv export failed: {0}")]
    Export(String),
}

/// `amplitude * sin(frequency * t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Exploration signal: a sum of sinusoids per input channel, active on
/// `[0, t_off)` and zero afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub channels: Vec<Vec<Sinusoid>>,
    pub t_off: f64,
}

impl NoiseSpec {
    pub fn none(m: usize) -> Self {
        NoiseSpec {
            channels: vec![Vec::new(); m],
            t_off: 0.0,
        }
    }

    /// The same sum of zero-phase sinusoids on every channel.
    pub fn uniform(m: usize, amplitude: f64, frequencies: &[f64], t_off: f64) -> Self {
        let sines: Vec<Sinusoid> = frequencies
            .iter()
            .map(|&frequency| Sinusoid {
                amplitude,
                frequency,
                phase: 0.0,
            })
            .collect();
        NoiseSpec {
            channels: vec![sines; m],
            t_off,
        }
    }

    pub fn m(&self) -> usize {
        self.channels.len()
    }

    /// Copy with the signal switched off from `t_off` on.
    pub fn until(&self, t_off: f64) -> Self {
        NoiseSpec {
            channels: self.channels.clone(),
            t_off,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.channels
            .iter()
            .all(|c| c.iter().all(|s| s.amplitude == 0.0))
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        if t >= self.t_off {
            return vec![0.0; self.m()];
        }
        self.channels
            .iter()
            .map(|c| {
                c.iter()
                    .map(|s| s.amplitude * (s.frequency * t + s.phase).sin())
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub h: f64,
    /// Largest admissible Euclidean state norm.
    pub guard: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { h: 1e-3, guard: 1e6 }
    }
}

/// Integral channels to carry alongside the state.
#[derive(Debug, Clone)]
pub struct ChannelSpec {
    pub cost: CostSpec,
    /// Value functions live on `m_{2,2r}`.
    pub r: u32,
    /// Data channels use `m_{2,2d}` and `m_{1,d}`.
    pub d: u32,
    quad: MonomialBasis,
    lin: MonomialBasis,
}

impl ChannelSpec {
    pub fn new(n: usize, cost: CostSpec, r: u32, d: u32) -> Result<Self, SimError> {
        if r < 1 || d < 1 {
            return Err(SimError::Argument("channel degrees must be at least 1".into()));
        }
        Ok(ChannelSpec {
            cost,
            r,
            d,
            quad: MonomialBasis::new(n, 2, 2 * d)?,
            lin: MonomialBasis::new(n, 1, d)?,
        })
    }

    pub fn n(&self) -> usize {
        self.quad.nvars()
    }

    pub fn m(&self) -> usize {
        self.cost.m()
    }

    /// `|m_{2,2d}|`.
    pub fn n_quad(&self) -> usize {
        self.quad.len()
    }

    /// `|m_{1,d}|`.
    pub fn n_lin(&self) -> usize {
        self.lin.len()
    }

    /// Raw channel count: `|m_{2,2d}| + m |m_{1,d}| + 1`.
    pub fn len(&self) -> usize {
        self.n_quad() + self.m() * self.n_lin() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value_basis(&self) -> Result<MonomialBasis, SimError> {
        Ok(MonomialBasis::new(self.n(), 2, 2 * self.r)?)
    }

    /// Integrands at `(x, u, e)`; `u` excludes the exploration signal.
    fn integrand(&self, x: &[f64], u: &[f64], e: &[f64], out: &mut [f64]) {
        let m = self.m();
        let nq = self.n_quad();
        for (o, mono) in out.iter_mut().zip(self.quad.entries()) {
            *o = mono.eval(x);
        }
        let re: Vec<f64> = (0..m)
            .map(|a| (0..m).map(|b| self.cost.r()[(a, b)] * e[b]).sum())
            .collect();
        for (j, mono) in self.lin.entries().iter().enumerate() {
            let v = mono.eval(x);
            for a in 0..m {
                out[nq + j * m + a] = v * re[a];
            }
        }
        out[nq + m * self.n_lin()] = self.cost.stage_cost(x, u);
    }
}

/// Sampled closed-loop run. `u` holds the applied input `u_i + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// Channel integrals from `t[0]` to `t[k]`; empty rows without channels.
    pub channels: Vec<Vec<f64>>,
    pub h: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.x.last().expect("trajectory holds the initial state")
    }

    pub fn duration(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0) - self.t.first().copied().unwrap_or(0.0)
    }

    /// Appends `other`, which must start where `self` ends. Channels of the
    /// appended part are shifted so they stay cumulative.
    pub fn extend(&mut self, other: &Trajectory) -> Result<(), SimError> {
        let (Some(&t_end), Some(&t_start)) = (self.t.last(), other.t.first()) else {
            return Err(SimError::Argument("cannot join empty trajectories".into()));
        };
        if (t_end - t_start).abs() > 1e-9 * (1.0 + t_end.abs()) {
            return Err(SimError::Argument(format!(
                "trajectories are not contiguous: {t_end} vs {t_start}"
            )));
        }
        let base = self.channels.last().cloned().unwrap_or_default();
        let first = other.channels.first().cloned().unwrap_or_default();
        if base.len() != first.len() {
            return Err(SimError::Dimension("channel layouts differ".into()));
        }
        for k in 1..other.len() {
            self.t.push(other.t[k]);
            self.x.push(other.x[k].clone());
            self.u.push(other.u[k].clone());
            let c: Vec<f64> = other.channels[k]
                .iter()
                .zip(base.iter().zip(&first))
                .map(|(v, (b, f))| b + v - f)
                .collect();
            self.channels.push(c);
        }
        // The junction sample carries the input of the next segment.
        if let Some(u0) = other.u.first() {
            let last = self.len() - other.len();
            self.u[last] = u0.clone();
        }
        Ok(())
    }

    /// CSV with columns `t, x1..xn, u1..um`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.x.first().map_or(0, |x| x.len());
        let m = self.u.first().map_or(0, |u| u.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        out.write_record(&header).map_err(|e| SimError::Export(e.to_string()))?;
        for k in 0..self.len() {
            let mut row = vec![format!("{}", self.t[k])];
            row.extend(self.x[k].iter().map(|v| format!("{v}")));
            row.extend(self.u[k].iter().map(|v| format!("{v}")));
            out.write_record(&row).map_err(|e| SimError::Export(e.to_string()))?;
        }
        out.flush().map_err(|e| SimError::Export(e.to_string()))
    }
}

/// Closed-loop right-hand side with precomputed policy basis.
struct ClosedLoop<'a> {
    sys: &'a PolySystem,
    policy: &'a Policy,
    policy_basis: MonomialBasis,
    noise: &'a NoiseSpec,
    channels: Option<&'a ChannelSpec>,
}

impl ClosedLoop<'_> {
    fn input(&self, x: &[f64]) -> Vec<f64> {
        let mx = self.policy_basis.eval(x);
        self.policy
            .k
            .iter()
            .map(|row| row.iter().zip(&mx).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Derivative of the augmented state `[x; channels]`.
    fn rhs(&self, t: f64, z: &[f64], out: &mut [f64]) {
        let n = self.sys.n();
        let x = &z[..n];
        let u = self.input(x);
        let e = self.noise.eval(t);
        let (f, g) = self.sys.eval(x);
        for i in 0..n {
            let mut acc = f[i];
            for (a, gij) in g[i].iter().enumerate() {
                acc += gij * (u[a] + e[a]);
            }
            out[i] = acc;
        }
        if let Some(spec) = self.channels {
            spec.integrand(x, &u, &e, &mut out[n..]);
        }
    }
}

/// Integrates the closed loop under `policy` plus `noise` from `x0` over
/// `t_span` with fixed-step RK4.
pub fn integrate(
    sys: &PolySystem,
    policy: &Policy,
    noise: &NoiseSpec,
    x0: &[f64],
    t_span: (f64, f64),
    step: &StepControl,
    channels: Option<&ChannelSpec>,
) -> Result<Trajectory, SimError> {
    let n = sys.n();
    if x0.len() != n || policy.n != n {
        return Err(SimError::Dimension(format!(
            "system has {n} states, x0 has {}, policy has {}",
            x0.len(),
            policy.n
        )));
    }
    if policy.m() != sys.m() || noise.m() != sys.m() {
        return Err(SimError::Dimension(format!(
            "system has {} inputs, policy {}, noise {}",
            sys.m(),
            policy.m(),
            noise.m()
        )));
    }
    if let Some(spec) = channels {
        if spec.n() != n || spec.m() != sys.m() {
            return Err(SimError::Dimension("channel spec does not match the system".into()));
        }
    }
    if !(step.h > 0.0 && step.h.is_finite()) || !(step.guard > 0.0) {
        return Err(SimError::Argument("step size and guard must be positive".into()));
    }
    let (t0, t1) = t_span;
    if !(t1 >= t0) {
        return Err(SimError::Argument(format!("empty time span [{t0}, {t1}]")));
    }
    let steps_f = (t1 - t0) / step.h;
    let steps = steps_f.round() as usize;
    if (steps_f - steps as f64).abs() > 1e-6 {
        return Err(SimError::Argument(format!(
            "span {} is not a multiple of the step {}",
            t1 - t0,
            step.h
        )));
    }
    let cl = ClosedLoop {
        sys,
        policy,
        policy_basis: policy.basis(),
        noise,
        channels,
    };
    let nc = channels.map_or(0, |c| c.len());
    let dim = n + nc;
    let mut z = vec![0.0; dim];
    z[..n].copy_from_slice(x0);

    let applied = |t: f64, x: &[f64]| -> Vec<f64> {
        let u = cl.input(x);
        let e = noise.eval(t);
        u.iter().zip(&e).map(|(a, b)| a + b).collect()
    };
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        channels: Vec::with_capacity(steps + 1),
        h: step.h,
    };
    traj.t.push(t0);
    traj.x.push(x0.to_vec());
    traj.u.push(applied(t0, x0));
    traj.channels.push(vec![0.0; nc]);

    let h = step.h;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut tmp = vec![0.0; dim];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        cl.rhs(t, &z, &mut k1);
        for i in 0..dim {
            tmp[i] = z[i] + 0.5 * h * k1[i];
        }
        cl.rhs(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = z[i] + 0.5 * h * k2[i];
        }
        cl.rhs(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = z[i] + h * k3[i];
        }
        cl.rhs(t + h, &tmp, &mut k4);
        for i in 0..dim {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = t0 + (s + 1) as f64 * h;
        let norm = z[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > step.guard {
            return Err(SimError::FiniteEscape { t: t_next, norm });
        }
        traj.t.push(t_next);
        traj.x.push(z[..n].to_vec());
        traj.u.push(applied(t_next, &z[..n]));
        traj.channels.push(z[n..].to_vec());
    }
    Ok(traj)
}

/// Quadratures over one sampling interval `[t0, t1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalQuadratures {
    pub t0: f64,
    pub t1: f64,
    pub n: usize,
    pub m: usize,
    pub r: u32,
    pub d: u32,
    /// `int sigma_e = -[int m_{2,2d}; 2 int m_{1,d} (x) R e]`.
    pub sigma: Vec<f64>,
    /// `int q(x) + u_i^T R u_i`.
    pub cost: f64,
    /// `m_{2,2r}(x(t1)) - m_{2,2r}(x(t0))`.
    pub basis_diff: Vec<f64>,
}

/// Splits a trajectory into consecutive intervals of length `dt`. A trailing
/// partial interval is dropped.
pub fn collect_intervals(
    traj: &Trajectory,
    dt: f64,
    spec: &ChannelSpec,
) -> Result<Vec<IntervalQuadratures>, SimError> {
    if traj.channels.first().map_or(0, |c| c.len()) != spec.len() {
        return Err(SimError::Dimension(
            "trajectory was not integrated with this channel spec".into(),
        ));
    }
    let per_f = dt / traj.h;
    let per = per_f.round() as usize;
    if per == 0 || (per_f - per as f64).abs() > 1e-6 {
        return Err(SimError::Argument(format!(
            "interval {dt} is not a positive multiple of the step {}",
            traj.h
        )));
    }
    let count = (traj.len().saturating_sub(1)) / per;
    if count == 0 {
        return Err(SimError::Argument(format!(
            "trajectory of duration {} is shorter than one interval {dt}",
            traj.duration()
        )));
    }
    let vb = spec.value_basis()?;
    let nq = spec.n_quad();
    let nk = spec.m() * spec.n_lin();
    Ok((0..count)
        .map(|k| {
            let (a, b) = (k * per, (k + 1) * per);
            let diff: Vec<f64> = traj.channels[b]
                .iter()
                .zip(&traj.channels[a])
                .map(|(x, y)| x - y)
                .collect();
            let sigma = diff[..nq]
                .iter()
                .map(|v| -v)
                .chain(diff[nq..nq + nk].iter().map(|v| -2.0 * v))
                .collect();
            let mb = vb.eval(&traj.x[b]);
            let ma = vb.eval(&traj.x[a]);
            IntervalQuadratures {
                t0: traj.t[a],
                t1: traj.t[b],
                n: spec.n(),
                m: spec.m(),
                r: spec.r,
                d: spec.d,
                sigma,
                cost: diff[nq + nk],
                basis_diff: mb.iter().zip(&ma).map(|(x, y)| x - y).collect(),
            }
        })
        .collect())
}

/// Something that can be driven by a policy and reports trajectories; the
/// model behind it stays hidden from the learner.
pub trait Plant {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn time(&self) -> f64;
    fn state(&self) -> &[f64];
    /// Advances by `duration` under `policy + noise`.
    fn run(
        &mut self,
        policy: &Policy,
        noise: &NoiseSpec,
        duration: f64,
        channels: Option<&ChannelSpec>,
    ) -> Result<Trajectory, SimError>;
}

/// A [`Plant`] backed by a known polynomial model.
#[derive(Debug, Clone)]
pub struct SimulatedPlant {
    sys: PolySystem,
    x: Vec<f64>,
    t: f64,
    step: StepControl,
}

impl SimulatedPlant {
    pub fn new(sys: PolySystem, x0: Vec<f64>, step: StepControl) -> Result<Self, SimError> {
        if x0.len() != sys.n() {
            return Err(SimError::Dimension(format!(
                "system has {} states, x0 has {}",
                sys.n(),
                x0.len()
            )));
        }
        Ok(SimulatedPlant { sys, x: x0, t: 0.0, step })
    }

    /// Impulse disturbance: an instantaneous jump of the state.
    pub fn kick(&mut self, dx: &[f64]) -> Result<(), SimError> {
        if dx.len() != self.x.len() {
            return Err(SimError::Dimension("impulse has the wrong length".into()));
        }
        for (x, d) in self.x.iter_mut().zip(dx) {
            *x += d;
        }
        Ok(())
    }

    pub fn step(&self) -> &StepControl {
        &self.step
    }
}

impl Plant for SimulatedPlant {
    fn n(&self) -> usize {
        self.sys.n()
    }

    fn m(&self) -> usize {
        self.sys.m()
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn state(&self) -> &[f64] {
        &self.x
    }

    fn run(
        &mut self,
        policy: &Policy,
        noise: &NoiseSpec,
        duration: f64,
        channels: Option<&ChannelSpec>,
    ) -> Result<Trajectory, SimError> {
        let traj = integrate(
            &self.sys,
            policy,
            noise,
            &self.x,
            (self.t, self.t + duration),
            &self.step,
            channels,
        )?;
        self.x = traj.final_state().to_vec();
        self.t = *traj.t.last().expect("nonempty");
        Ok(traj)
    }
}

/// `int_0^horizon q(x) + u^T R u dt` along the noise-free closed loop.
pub fn simulate_cost(
    sys: &PolySystem,
    cost: &CostSpec,
    policy: &Policy,
    x0: &[f64],
    horizon: f64,
    step: &StepControl,
) -> Result<f64, SimError> {
    let spec = ChannelSpec::new(sys.n(), cost.clone(), 1, 1)?;
    let traj = integrate(sys, policy, &NoiseSpec::none(sys.m()), x0, (0.0, horizon), step, Some(&spec))?;
    Ok(*traj.channels.last().and_then(|c| c.last()).expect("cost channel"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::parse_polynomial;
    use nalgebra::DMatrix;

    fn scalar(f: &str, g: &str) -> PolySystem {
        PolySystem::new(
            vec![parse_polynomial(f, 1).unwrap()],
            vec![vec![parse_polynomial(g, 1).unwrap()]],
        )
        .unwrap()
    }

    fn unit_cost(q: &str) -> CostSpec {
        CostSpec::new(parse_polynomial(q, 1).unwrap(), DMatrix::identity(1, 1)).unwrap()
    }

    #[test]
    fn linear_decay_matches_exponential() {
        let sys = scalar("-x", "1");
        let u = Policy::zero(1, 1, 1).unwrap();
        let traj = integrate(&sys, &u, &NoiseSpec::none(1), &[2.0], (0.0, 1.0), &StepControl::default(), None).unwrap();
        assert_eq!(traj.len(), 1001);
        assert!((traj.final_state()[0] - 2.0 / std::f64::consts::E).abs() <= 1e-8);
    }

    #[test]
    fn pure_noise_input_and_quadrature() {
        let sys = scalar("0", "1");
        let u = Policy::zero(1, 1, 1).unwrap();
        let noise = NoiseSpec::uniform(1, 0.01, &[10.0], f64::INFINITY);
        let period = 2.0 * std::f64::consts::PI / 10.0;
        let h = period / 1000.0;
        let spec = ChannelSpec::new(1, unit_cost("x^2"), 1, 1).unwrap();
        let step = StepControl { h, guard: 1e6 };
        let traj = integrate(&sys, &u, &noise, &[1.0], (0.0, period), &step, Some(&spec)).unwrap();
        let t = period;
        assert!((traj.final_state()[0] - (1.0 + 0.001 * (1.0 - (10.0 * t).cos()))).abs() <= 1e-10);
        // Channel `x e` integrates to zero over a full period.
        assert!(traj.channels.last().unwrap()[1].abs() <= 1e-8);
        // Channel `m_{2,2} = x^2`: int (1.001 - 0.001 cos 10t)^2 dt.
        let a: f64 = 1.001;
        let b: f64 = 0.001;
        let exact_sq = period * (a * a + b * b / 2.0);
        assert!((traj.channels.last().unwrap()[0] - exact_sq).abs() <= 1e-8);
    }

    #[test]
    fn blow_up_is_reported_with_time() {
        let sys = scalar("x^2", "1");
        let u = Policy::zero(1, 1, 1).unwrap();
        let err = integrate(&sys, &u, &NoiseSpec::none(1), &[1.0], (0.0, 2.0), &StepControl::default(), None).unwrap_err();
        match err {
            SimError::FiniteEscape { t, .. } => assert!(t > 0.9 && t < 1.01),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_state_gives_zero_quadratures() {
        let sys = scalar("-x", "1");
        let u = Policy::zero(1, 1, 3).unwrap();
        let spec = ChannelSpec::new(1, unit_cost("x^2"), 2, 3).unwrap();
        let traj = integrate(&sys, &u, &NoiseSpec::none(1), &[0.0], (0.0, 1.0), &StepControl::default(), Some(&spec)).unwrap();
        let iq = collect_intervals(&traj, 0.25, &spec).unwrap();
        assert_eq!(iq.len(), 4);
        for q in &iq {
            assert!(q.sigma.iter().all(|v| *v == 0.0));
            assert_eq!(q.cost, 0.0);
            assert!(q.basis_diff.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn interval_arguments_checked() {
        let sys = scalar("-x", "1");
        let u = Policy::zero(1, 1, 1).unwrap();
        let spec = ChannelSpec::new(1, unit_cost("x^2"), 1, 1).unwrap();
        let traj = integrate(&sys, &u, &NoiseSpec::none(1), &[1.0], (0.0, 0.1), &StepControl::default(), Some(&spec)).unwrap();
        assert!(collect_intervals(&traj, 0.5, &spec).is_err());
        assert!(collect_intervals(&traj, 0.0105, &spec).is_err());
        assert!(integrate(&sys, &u, &NoiseSpec::none(1), &[1.0], (0.0, 0.10005), &StepControl::default(), None).is_err());
    }

    #[test]
    fn plant_segments_join() {
        let sys = scalar("-x", "1");
        let u = Policy::zero(1, 1, 1).unwrap();
        let spec = ChannelSpec::new(1, unit_cost("x^2"), 1, 1).unwrap();
        let mut plant = SimulatedPlant::new(sys.clone(), vec![1.0], StepControl::default()).unwrap();
        let mut a = plant.run(&u, &NoiseSpec::none(1), 0.5, Some(&spec)).unwrap();
        let b = plant.run(&u, &NoiseSpec::none(1), 0.5, Some(&spec)).unwrap();
        a.extend(&b).unwrap();
        let whole = integrate(&sys, &u, &NoiseSpec::none(1), &[1.0], (0.0, 1.0), &StepControl::default(), Some(&spec)).unwrap();
        assert_eq!(a.len(), whole.len());
        let (ca, cw) = (a.channels.last().unwrap(), whole.channels.last().unwrap());
        for (x, y) in ca.iter().zip(cw) {
            assert!((x - y).abs() < 1e-12);
        }
        // Cost of x' = -x from 1 with q = x^2: (1 - e^{-2}) / 2.
        let c = simulate_cost(&sys, &unit_cost("x^2"), &u, &[1.0], 1.0, &StepControl::default()).unwrap();
        assert!((c - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-10);
    }
}
