//! Problem files: TOML description of a system, cost, design choices,
//! initial pair and optional learning schedule.

use std::path::Path;

use gadp::gadp_pi::{
    degree_bound, CostSpec, EvalOptions, FeasibleObjective, FeasibleOptions, ParamSpec,
    ParametricSystem, PiConfig, Policy, PolySystem, ValueFn,
};
use gadp::polyalg::{parse_polynomial, Expr, Hyperbox};
use gadp::simkit::{NoiseSpec, Sinusoid, StepControl};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub name: String,
    pub system: SystemBlock,
    pub cost: CostBlock,
    pub design: DesignBlock,
    pub initial: InitialBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible: Option<FeasibleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning: Option<LearningBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareBlock>,
    #[serde(default)]
    pub solver: SolverBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub n: usize,
    pub m: usize,
    pub f: Vec<String>,
    /// `n` rows of `m` entries.
    pub g: Vec<Vec<String>>,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
    /// Certify feasibility at every vertex of the parameter box rather than
    /// at the nominal values only.
    #[serde(default = "yes")]
    pub vertices: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostBlock {
    pub q: String,
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBlock {
    pub r: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    pub omega: Vec<[f64; 2]>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_grid")]
    pub grid_per_axis: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    /// A polynomial, or `"search"` to run the feasibility program first.
    pub v0: String,
    pub u1: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeasibleKind {
    Slack,
    Integral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibleBlock {
    #[serde(default = "default_kind")]
    pub objective: FeasibleKind,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "yes")]
    pub require_affine: bool,
}

impl Default for FeasibleBlock {
    fn default() -> Self {
        FeasibleBlock {
            objective: FeasibleKind::Slack,
            margin: default_margin(),
            require_affine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Impulse {
    /// Seconds after learning ends.
    pub after: f64,
    pub dx: Vec<f64>,
    /// Length of the post-impulse comparison run.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningBlock {
    pub x0: Vec<f64>,
    pub window: f64,
    pub interval: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_guard")]
    pub guard: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// One list of sinusoids per input channel.
    pub noise: Vec<Vec<Sinusoid>>,
    #[serde(default = "default_extension")]
    pub max_extension: f64,
    /// Relaxation of the data-fitted SOS constraint, see `OnlineOptions`.
    #[serde(default)]
    pub data_tolerance: f64,
    #[serde(default)]
    pub post_learning: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impulse: Option<Impulse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub x0: Vec<f64>,
    /// Policy to simulate; defaults to `initial.u1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Vec<String>>,
    pub horizon: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_guard")]
    pub guard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    /// Analytic reference in `x1..xn`; `sqrt`, `abs`, `exp` allowed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default = "default_compare_grid")]
    pub grid_per_axis: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

fn yes() -> bool {
    true
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_max_iter() -> usize {
    20
}
fn default_grid() -> usize {
    21
}
fn default_compare_grid() -> usize {
    101
}
fn default_kind() -> FeasibleKind {
    FeasibleKind::Slack
}
fn default_margin() -> f64 {
    1e-6
}
fn default_h() -> f64 {
    1e-3
}
fn default_guard() -> f64 {
    1e6
}
fn default_extension() -> f64 {
    3.0
}

/// Command-line overrides applied before validation and echoed with the
/// effective configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub solver_tol: Option<f64>,
    pub max_iter: Option<usize>,
}

impl ProblemFile {
    pub fn parse(src: &str) -> Result<Self, CliError> {
        toml::from_str(src).map_err(|e| CliError::Validation(format!("problem file: {e}")))
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Ok((Self::parse(&src)?, src))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("problem files serialize")
    }

    /// Applies overrides. A seed draws every noise phase uniformly from
    /// `[0, 2 pi)`; the drawn phases become part of the configuration.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(tol) = o.solver_tol {
            self.solver.tol = Some(tol);
        }
        if let Some(k) = o.max_iter {
            self.design.max_iter = k;
            if let Some(l) = &mut self.learning {
                l.max_iter = Some(k);
            }
        }
        if let (Some(seed), Some(l)) = (o.seed, &mut self.learning) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            for s in l.noise.iter_mut().flatten() {
                s.phase = rng.random_range(0.0..std::f64::consts::TAU);
            }
        }
    }

    pub fn validate(&self) -> Result<Problem, CliError> {
        Problem::from_file(self)
    }
}

/// A validated problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub file: ProblemFile,
    pub family: ParametricSystem,
    /// The system at nominal parameter values.
    pub sys: PolySystem,
    pub cost: CostSpec,
    pub omega: Hyperbox,
    pub r: u32,
    pub d: u32,
    /// `None` when the file asks for a search.
    pub v0: Option<ValueFn>,
    pub u1: Policy,
    pub eval: EvalOptions,
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {msg}"))
}

fn check_positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn check_multiple(field: &str, a: f64, b: f64) -> Result<(), CliError> {
    let k = a / b;
    if (k - k.round()).abs() > 1e-6 || k.round() < 1.0 {
        return Err(invalid(field, format!("{a} is not a positive multiple of {b}")));
    }
    Ok(())
}

fn parse_box(field: &str, bounds: &[[f64; 2]], n: usize) -> Result<Hyperbox, CliError> {
    if bounds.len() != n {
        return Err(invalid(field, format!("needs {n} intervals, got {}", bounds.len())));
    }
    Hyperbox::new(bounds.iter().map(|b| (b[0], b[1])).collect()).map_err(|e| invalid(field, e))
}

impl Problem {
    fn from_file(pf: &ProblemFile) -> Result<Self, CliError> {
        let s = &pf.system;
        let (n, m) = (s.n, s.m);
        if n == 0 || m == 0 {
            return Err(invalid("system", "n and m must be positive"));
        }
        if s.f.len() != n {
            return Err(invalid("system.f", format!("needs {n} entries, got {}", s.f.len())));
        }
        if s.g.len() != n {
            return Err(invalid("system.g", format!("needs {n} rows, got {}", s.g.len())));
        }
        let mut f = Vec::with_capacity(n);
        for (i, src) in s.f.iter().enumerate() {
            f.push(Expr::parse(src, n).map_err(|e| invalid(&format!("system.f[{i}]"), e))?);
        }
        let mut g = Vec::with_capacity(n);
        for (i, row) in s.g.iter().enumerate() {
            if row.len() != m {
                return Err(invalid(&format!("system.g[{i}]"), format!("needs {m} entries, got {}", row.len())));
            }
            let mut out = Vec::with_capacity(m);
            for (j, src) in row.iter().enumerate() {
                out.push(Expr::parse(src, n).map_err(|e| invalid(&format!("system.g[{i}][{j}]"), e))?);
            }
            g.push(out);
        }
        let family = ParametricSystem::new(f, g, s.params.clone()).map_err(|e| invalid("system", e))?;
        let sys = family.nominal().map_err(|e| invalid("system", e))?;

        let q = parse_polynomial(&pf.cost.q, n).map_err(|e| invalid("cost.q", e))?;
        if pf.cost.r.len() != m || pf.cost.r.iter().any(|row| row.len() != m) {
            return Err(invalid("cost.r", format!("must be {m}x{m}")));
        }
        let r_mat = DMatrix::from_fn(m, m, |a, b| pf.cost.r[a][b]);
        let cost = CostSpec::new(q, r_mat).map_err(|e| invalid("cost", e))?;

        let dz = &pf.design;
        if dz.r < 1 {
            return Err(invalid("design.r", "must be at least 1"));
        }
        let omega = parse_box("design.omega", &dz.omega, n)?;
        check_positive("design.epsilon", dz.epsilon)?;
        if dz.grid_per_axis < 2 {
            return Err(invalid("design.grid_per_axis", "must be at least 2"));
        }
        let d = match dz.d {
            Some(0) => return Err(invalid("design.d", "must be at least 1")),
            Some(d) => d,
            None => degree_bound(&sys, &cost, dz.r),
        };

        let v0 = if pf.initial.v0.trim() == "search" {
            None
        } else {
            let p = parse_polynomial(&pf.initial.v0, n).map_err(|e| invalid("initial.v0", e))?;
            Some(ValueFn::from_polynomial(&p, dz.r).map_err(|e| invalid("initial.v0", e))?)
        };
        if pf.initial.u1.len() != m {
            return Err(invalid("initial.u1", format!("needs {m} entries, got {}", pf.initial.u1.len())));
        }
        let mut u = Vec::with_capacity(m);
        for (i, src) in pf.initial.u1.iter().enumerate() {
            u.push(parse_polynomial(src, n).map_err(|e| invalid(&format!("initial.u1[{i}]"), e))?);
        }
        let u1 = Policy::from_polynomials(&u, d).map_err(|e| invalid("initial.u1", e))?;

        if let Some(fb) = &pf.feasible {
            if !(fb.margin >= 0.0 && fb.margin.is_finite()) {
                return Err(invalid("feasible.margin", "must be nonnegative"));
            }
            if fb.require_affine && s.vertices {
                family.check_affine().map_err(|e| invalid("system.params", e))?;
            }
        }
        if let Some(l) = &pf.learning {
            if l.x0.len() != n {
                return Err(invalid("learning.x0", format!("needs {n} entries")));
            }
            if l.noise.len() != m {
                return Err(invalid("learning.noise", format!("needs one list per input ({m})")));
            }
            check_positive("learning.h", l.h)?;
            check_positive("learning.guard", l.guard)?;
            check_positive("learning.window", l.window)?;
            check_positive("learning.interval", l.interval)?;
            check_multiple("learning.interval", l.interval, l.h)?;
            check_multiple("learning.window", l.window, l.interval)?;
            if l.post_learning < 0.0 {
                return Err(invalid("learning.post_learning", "must be nonnegative"));
            }
            if l.post_learning > 0.0 {
                check_multiple("learning.post_learning", l.post_learning, l.h)?;
            }
            if !(l.data_tolerance >= 0.0 && l.data_tolerance.is_finite()) {
                return Err(invalid("learning.data_tolerance", "must be nonnegative"));
            }
            if l.max_extension < 1.0 {
                return Err(invalid("learning.max_extension", "must be at least 1"));
            }
            if let Some(e) = l.epsilon {
                if !(e > 0.0) {
                    return Err(invalid("learning.epsilon", "must be positive"));
                }
            }
            if let Some(imp) = &l.impulse {
                if imp.dx.len() != n {
                    return Err(invalid("learning.impulse.dx", format!("needs {n} entries")));
                }
                if imp.after < 0.0 {
                    return Err(invalid("learning.impulse.after", "must be nonnegative"));
                }
                check_positive("learning.impulse.duration", imp.duration)?;
                if imp.after > 0.0 {
                    check_multiple("learning.impulse.after", imp.after, l.h)?;
                }
                check_multiple("learning.impulse.duration", imp.duration, l.h)?;
            }
            if v0.is_none() {
                return Err(invalid("initial.v0", "online learning needs an explicit V0"));
            }
        }
        if let Some(sb) = &pf.simulate {
            if sb.x0.len() != n {
                return Err(invalid("simulate.x0", format!("needs {n} entries")));
            }
            check_positive("simulate.h", sb.h)?;
            check_positive("simulate.horizon", sb.horizon)?;
            check_multiple("simulate.horizon", sb.horizon, sb.h)?;
            if let Some(pol) = &sb.policy {
                if pol.len() != m {
                    return Err(invalid("simulate.policy", format!("needs {m} entries")));
                }
                for (i, src) in pol.iter().enumerate() {
                    parse_polynomial(src, n).map_err(|e| invalid(&format!("simulate.policy[{i}]"), e))?;
                }
            }
        }
        if let Some(cb) = &pf.compare {
            if cb.grid_per_axis < 2 {
                return Err(invalid("compare.grid_per_axis", "must be at least 2"));
            }
            if let Some(src) = &cb.reference {
                let e = Expr::parse(src, n).map_err(|e| invalid("compare.reference", e))?;
                if !e.params().is_empty() {
                    return Err(invalid("compare.reference", "must not use parameters"));
                }
            }
        }

        let mut eval = EvalOptions::default();
        if let Some(tol) = pf.solver.tol {
            check_positive("solver.tol", tol)?;
            eval.solver.feas_tol = tol;
            eval.solver.gap_tol = tol;
        }
        if let Some(k) = pf.solver.max_iter {
            if k == 0 {
                return Err(invalid("solver.max_iter", "must be positive"));
            }
            eval.solver.max_iter = k;
        }
        Ok(Problem {
            file: pf.clone(),
            family,
            sys,
            cost,
            omega,
            r: dz.r,
            d,
            v0,
            u1,
            eval,
        })
    }

    pub fn pi_config(&self) -> PiConfig {
        let mut c = PiConfig::new(self.r, self.omega.clone());
        c.d = Some(self.d);
        c.epsilon = self.file.design.epsilon;
        c.max_iter = self.file.design.max_iter;
        c.grid_per_axis = self.file.design.grid_per_axis;
        c.eval = self.eval.clone();
        c
    }

    pub fn feasible_options(&self) -> FeasibleOptions {
        let fb = self.file.feasible.clone().unwrap_or_default();
        FeasibleOptions {
            margin: fb.margin,
            objective: match fb.objective {
                FeasibleKind::Slack => FeasibleObjective::Slack,
                FeasibleKind::Integral => FeasibleObjective::Integral(self.omega.clone()),
            },
            eval: self.eval.clone(),
            require_affine: fb.require_affine,
        }
    }

    /// The family whose vertices the feasibility program enumerates.
    pub fn feasibility_family(&self) -> ParametricSystem {
        if self.file.system.vertices {
            self.family.clone()
        } else {
            ParametricSystem::fixed(&self.sys)
        }
    }

    /// The policy named by the simulate block, or `u1`.
    pub fn simulate_policy(&self) -> Result<Policy, CliError> {
        let Some(src) = self.file.simulate.as_ref().and_then(|s| s.policy.as_ref()) else {
            return Ok(self.u1.clone());
        };
        let n = self.sys.n();
        let polys = src
            .iter()
            .map(|s| parse_polynomial(s, n))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid("simulate.policy", e))?;
        let d = polys.iter().filter_map(|p| p.degree()).max().unwrap_or(1).max(1);
        Policy::from_polynomials(&polys, d).map_err(|e| invalid("simulate.policy", e))
    }

    pub fn noise(&self) -> Option<NoiseSpec> {
        self.file.learning.as_ref().map(|l| NoiseSpec {
            channels: l.noise.clone(),
            t_off: f64::INFINITY,
        })
    }

    pub fn learning_step(&self) -> Option<StepControl> {
        self.file
            .learning
            .as_ref()
            .map(|l| StepControl { h: l.h, guard: l.guard })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"
name = "toy"
[system]
n = 1
m = 1
f = ["-x"]
g = [["1"]]
[cost]
q = "x^2"
r = [[1.0]]
[design]
r = 1
omega = [[-1.0, 1.0]]
[initial]
v0 = "x^2"
u1 = ["0"]
"#;

    #[test]
    fn parses_and_validates() {
        let p = ProblemFile::parse(SCALAR).unwrap().validate().unwrap();
        assert_eq!(p.d, 1);
        assert_eq!(p.sys.n(), 1);
    }

    #[test]
    fn echo_round_trips() {
        let pf = ProblemFile::parse(SCALAR).unwrap();
        assert_eq!(ProblemFile::parse(&pf.to_toml()).unwrap(), pf);
    }

    #[test]
    fn rejects_nonsymmetric_r() {
        let src = SCALAR.replace("n = 1\nm = 1", "n = 1\nm = 2")
            .replace("g = [[\"1\"]]", "g = [[\"1\", \"0\"]]")
            .replace("r = [[1.0]]", "r = [[1.0, 0.5], [0.0, 1.0]]")
            .replace("u1 = [\"0\"]", "u1 = [\"0\", \"0\"]");
        let err = ProblemFile::parse(&src).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("cost"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn reports_field_of_bad_expression() {
        let src = SCALAR.replace("f = [\"-x\"]", "f = [\"-x +\"]");
        let err = ProblemFile::parse(&src).unwrap().validate().unwrap_err();
        assert!(err.to_string().starts_with("system.f[0]"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let err = ProblemFile::parse(&format!("{SCALAR}\nbogus = 1\n")).unwrap_err();
        assert!(err.to_string().contains("bogus") || err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn seed_fixes_phases() {
        let src = format!(
            "{SCALAR}\n[learning]\nx0 = [1.0]\nwindow = 1.0\ninterval = 0.1\nnoise = [[{{ amplitude = 0.1, frequency = 3.0 }}]]\n"
        );
        let mut a = ProblemFile::parse(&src).unwrap();
        let mut b = a.clone();
        let o = Overrides { seed: Some(3), ..Overrides::default() };
        a.apply(&o);
        b.apply(&o);
        assert_eq!(a, b);
        let phase = a.learning.as_ref().unwrap().noise[0][0].phase;
        assert!(phase > 0.0 && phase < std::f64::consts::TAU);
        a.validate().unwrap();
    }
}
