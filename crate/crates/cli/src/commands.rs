//! The five workflows. Each `cmd_*` echoes the configuration, runs, and
//! writes its artifacts before reporting failure through the exit code.

use std::collections::HashMap;
use std::path::Path;

use gadp::adp_online::{run_online, AdpError, OnlineConfig, OnlineFailure, OnlineTrace};
use gadp::gadp_pi::{robust_feasible_v0, run_pi, FeasibleOutcome, IterationTrace, PiError, Policy, ValueFn};
use gadp::polyalg::{parse_polynomial, Expr};
use gadp::sdp::InteriorPointSolver;
use gadp::simkit::{integrate, simulate_cost, NoiseSpec, Plant, SimError, SimulatedPlant, StepControl, Trajectory};
use gadp::Polynomial;
use serde_json::{json, Value};

use crate::artifacts::{self, OutDir};
use crate::problem::Problem;
use crate::CliError;

/// Upper bound on value-grid rows for multi-dimensional states.
const GRID_ROW_BUDGET: usize = 50_000;

fn pi_error(e: PiError) -> CliError {
    match e {
        PiError::InvalidSystem(_)
        | PiError::InvalidCost(_)
        | PiError::Dimension(_)
        | PiError::NonAffine(_)
        | PiError::Poly(_) => CliError::Validation(e.to_string()),
        _ => CliError::Solver(e.to_string()),
    }
}

fn adp_error(e: AdpError) -> CliError {
    match e {
        AdpError::Argument(_) => CliError::Validation(e.to_string()),
        AdpError::Pi(p) => pi_error(p),
        _ => CliError::Solver(e.to_string()),
    }
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Argument(_) | SimError::Dimension(_) | SimError::Poly(_) => {
            CliError::Validation(e.to_string())
        }
        SimError::Export(_) => CliError::Io(e.to_string()),
        SimError::FiniteEscape { .. } => CliError::Solver(e.to_string()),
    }
}

fn status_of(err: &CliError) -> &'static str {
    match err {
        CliError::Validation(_) => "invalid",
        CliError::Solver(_) => "solver-failure",
        CliError::Timeout(_) => "timeout",
        CliError::Io(_) => "io-error",
    }
}

/// Runs `body`, recording an error summary when it fails.
fn guarded(out: &OutDir, command: &str, body: impl FnOnce() -> Result<(), CliError>) -> Result<(), CliError> {
    body().inspect_err(|e| {
        let _ = out.json(
            "summary.json",
            &json!({
                "command": command,
                "status": status_of(e),
                "exit_code": e.exit_code(),
                "message": e.to_string(),
            }),
        );
    })
}

fn begin(problem: &Problem, original: &str, out: &Path) -> Result<OutDir, CliError> {
    let dir = OutDir::create(out)?;
    dir.echo(original, &problem.file.to_toml())?;
    Ok(dir)
}

fn reference(problem: &Problem) -> Result<Option<Expr>, CliError> {
    let n = problem.sys.n();
    problem
        .file
        .compare
        .as_ref()
        .and_then(|c| c.reference.as_ref())
        .map(|src| Expr::parse(src, n).map_err(|e| CliError::Validation(format!("compare.reference: {e}"))))
        .transpose()
}

/// Points per axis for grids on the region: the compare setting in one
/// dimension, otherwise the design setting capped by a row budget.
fn grid_per_axis(problem: &Problem) -> usize {
    let n = problem.sys.n();
    if n == 1 {
        return problem.file.compare.as_ref().map_or(101, |c| c.grid_per_axis);
    }
    let wanted = problem
        .file
        .compare
        .as_ref()
        .map_or(problem.file.design.grid_per_axis, |c| c.grid_per_axis);
    let cap = (GRID_ROW_BUDGET as f64).powf(1.0 / n as f64).floor() as usize;
    wanted.min(cap).max(2)
}

fn value_columns(
    problem: &Problem,
    points: &[Vec<f64>],
    named: &[(String, Polynomial)],
) -> Result<Vec<(String, Vec<f64>)>, CliError> {
    let mut cols = Vec::with_capacity(named.len() + 1);
    for (name, p) in named {
        let vals = points
            .iter()
            .map(|x| p.eval(x))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
        cols.push((name.clone(), vals));
    }
    if let Some(e) = reference(problem)? {
        let empty = HashMap::new();
        let vals = points
            .iter()
            .map(|x| e.eval(x, &empty))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Validation(format!("compare.reference: {e}")))?;
        cols.push(("reference".into(), vals));
    }
    Ok(cols)
}

fn write_value_grid(out: &OutDir, problem: &Problem, values: &[ValueFn]) -> Result<(), CliError> {
    let points = problem.omega.grid(grid_per_axis(problem));
    let mut named = vec![("V0".to_string(), values[0].polynomial())];
    if values.len() > 1 {
        named.push((format!("V{}", values.len() - 1), values[values.len() - 1].polynomial()));
    }
    let cols = value_columns(problem, &points, &named)?;
    let (h, rows) = artifacts::grid_table(&points, &cols);
    out.csv("value_grid.csv", &h, &rows)
}

fn write_trajectory(out: &OutDir, name: &str, traj: &Trajectory) -> Result<(), CliError> {
    let file = std::fs::File::create(out.path(name))?;
    traj.write_csv(std::io::BufWriter::new(file)).map_err(sim_error)
}

fn certificate_log<'a>(blocks: impl Iterator<Item = (String, &'a [gadp::soscomp::GramCertificate])>) -> String {
    let mut s = String::new();
    for (title, certs) in blocks {
        s.push_str(&format!("# {title}\n"));
        s.push_str(&artifacts::certificates_text(certs));
    }
    s
}

pub fn run_feasible(problem: &Problem) -> Result<FeasibleOutcome, CliError> {
    robust_feasible_v0(
        &problem.feasibility_family(),
        &problem.cost,
        &problem.u1,
        problem.r,
        &problem.feasible_options(),
        &InteriorPointSolver,
    )
    .map_err(pi_error)
}

pub struct OfflineResult {
    /// Present when `V0` was searched for.
    pub feasible: Option<FeasibleOutcome>,
    pub trace: IterationTrace,
}

pub fn run_offline(problem: &Problem) -> Result<OfflineResult, CliError> {
    let (v0, feasible) = match &problem.v0 {
        Some(v) => (v.clone(), None),
        None => {
            let f = run_feasible(problem)?;
            (f.value.clone(), Some(f))
        }
    };
    let trace = run_pi(&problem.sys, &problem.cost, &v0, &problem.u1, &problem.pi_config(), &InteriorPointSolver)
        .map_err(pi_error)?;
    Ok(OfflineResult { feasible, trace })
}

fn feasible_summary(f: &FeasibleOutcome) -> Value {
    json!({
        "status": f.status.to_string(),
        "objective": f.objective,
        "slack": f.slack,
        "vertices": f.vertices,
        "affine": f.affine,
        "retried": f.retried,
        "inexact": f.inexact,
        "v0": f.value.polynomial().to_string(),
    })
}

pub fn cmd_offline(problem: &Problem, original: &str, out: &Path) -> Result<(), CliError> {
    let dir = begin(problem, original, out)?;
    guarded(&dir, "offline", || {
        let res = run_offline(problem)?;
        let t = &res.trace;
        let (h, rows) = artifacts::offline_trace(&t.records);
        dir.csv("trace.csv", &h, &rows)?;
        dir.text("values.txt", &artifacts::values_text(&t.values))?;
        dir.text("policies.txt", &artifacts::policies_text(&t.policies))?;
        write_value_grid(&dir, problem, &t.values)?;
        let mut blocks: Vec<(String, &[gadp::soscomp::GramCertificate])> = Vec::new();
        if let Some(f) = &res.feasible {
            blocks.push(("initial value search".into(), &f.certificates));
        }
        for (i, c) in t.certificates.iter().enumerate() {
            blocks.push((format!("iteration {}", i + 1), c));
        }
        dir.text("certificates.log", &certificate_log(blocks.into_iter()))?;
        let status = match (&t.failure, t.converged) {
            (Some(_), _) => "failed",
            (None, true) => "converged",
            (None, false) => "max-iter",
        };
        dir.json(
            "summary.json",
            &json!({
                "command": "offline",
                "status": status,
                "exit_code": if t.failure.is_some() { 3 } else { 0 },
                "iterations": t.records.len(),
                "converged": t.converged,
                "failure": t.failure,
                "initial_objective": t.initial_objective,
                "final_objective": t.records.last().map(|r| r.objective),
                "final_value": t.final_value().polynomial().to_string(),
                "final_policy": t.final_policy().polynomials().iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                "feasible": res.feasible.as_ref().map(feasible_summary),
            }),
        )?;
        match &t.failure {
            Some(msg) => Err(CliError::Solver(msg.clone())),
            None => Ok(()),
        }
    })
}

/// Post-learning disturbance response under the learned and the initial
/// policy, both started from the disturbed state.
pub struct ImpulseComparison {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub learned: Trajectory,
    pub initial: Trajectory,
    pub cost_learned: f64,
    pub cost_initial: f64,
}

pub struct OnlineResult {
    pub trace: OnlineTrace,
    pub impulse: Option<ImpulseComparison>,
}

pub fn run_online_problem(problem: &Problem) -> Result<OnlineResult, CliError> {
    let l = problem
        .file
        .learning
        .as_ref()
        .ok_or_else(|| CliError::Validation("learning: block required for online runs".into()))?;
    let v0 = problem
        .v0
        .as_ref()
        .ok_or_else(|| CliError::Validation("initial.v0: online learning needs an explicit V0".into()))?;
    let step = problem.learning_step().expect("learning block present");
    let noise = problem.noise().expect("learning block present");
    let mut plant = SimulatedPlant::new(problem.sys.clone(), l.x0.clone(), step.clone()).map_err(sim_error)?;
    let mut cfg = OnlineConfig::new(problem.r, problem.d, problem.omega.clone(), l.window, l.interval, noise);
    cfg.epsilon = l.epsilon.unwrap_or(problem.file.design.epsilon);
    cfg.max_iter = l.max_iter.unwrap_or(problem.file.design.max_iter);
    cfg.max_extension = l.max_extension;
    cfg.options.eval = problem.eval.clone();
    cfg.options.data_tolerance = l.data_tolerance;
    cfg.post_learning = if l.impulse.is_some() { 0.0 } else { l.post_learning };
    let mut trace = run_online(&mut plant, &problem.cost, v0, &problem.u1, &cfg, &InteriorPointSolver)
        .map_err(adp_error)?;

    let mut impulse = None;
    if let (Some(imp), None) = (&l.impulse, &trace.failure) {
        let quiet = NoiseSpec::none(problem.sys.m());
        let policy = trace.final_policy().clone();
        if imp.after > 0.0 {
            let seg = plant.run(&policy, &quiet, imp.after, None).map_err(sim_error)?;
            trace.trajectory.extend(&seg).map_err(sim_error)?;
        }
        plant.kick(&imp.dx).map_err(sim_error)?;
        let (t0, x0) = (plant.time(), plant.state().to_vec());
        let branch = |u: &Policy| -> Result<(Trajectory, f64), CliError> {
            let tr = integrate(&problem.sys, u, &quiet, &x0, (t0, t0 + imp.duration), &step, None)
                .map_err(sim_error)?;
            let c = simulate_cost(&problem.sys, &problem.cost, u, &x0, imp.duration, &step).map_err(sim_error)?;
            Ok((tr, c))
        };
        let (learned, cost_learned) = branch(&policy)?;
        let (initial, cost_initial) = branch(&problem.u1)?;
        impulse = Some(ImpulseComparison {
            t0,
            x0,
            learned,
            initial,
            cost_learned,
            cost_initial,
        });
    }
    Ok(OnlineResult { trace, impulse })
}

fn comparison_table(c: &ImpulseComparison) -> (Vec<String>, Vec<Vec<String>>) {
    let n = c.x0.len();
    let m = c.learned.u.first().map_or(0, |u| u.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}_learned")));
    header.extend((1..=n).map(|i| format!("x{i}_initial")));
    header.extend((1..=m).map(|i| format!("u{i}_learned")));
    header.extend((1..=m).map(|i| format!("u{i}_initial")));
    let rows = (0..c.learned.len())
        .map(|k| {
            let mut row = vec![format!("{}", c.learned.t[k])];
            for v in c.learned.x[k].iter().chain(&c.initial.x[k]).chain(&c.learned.u[k]).chain(&c.initial.u[k]) {
                row.push(format!("{v}"));
            }
            row
        })
        .collect();
    (header, rows)
}

pub fn cmd_online(problem: &Problem, original: &str, out: &Path) -> Result<(), CliError> {
    let dir = begin(problem, original, out)?;
    guarded(&dir, "online", || {
        let res = run_online_problem(problem)?;
        let t = &res.trace;
        let (h, rows) = artifacts::online_trace(&t.records);
        dir.csv("trace.csv", &h, &rows)?;
        dir.text("values.txt", &artifacts::values_text(&t.values))?;
        dir.text("policies.txt", &artifacts::policies_text(&t.policies))?;
        write_value_grid(&dir, problem, &t.values)?;
        let blocks = t.certificates.iter().enumerate().map(|(i, c)| (format!("iteration {}", i + 1), c.as_slice()));
        dir.text("certificates.log", &certificate_log(blocks))?;
        if !t.trajectory.is_empty() {
            write_trajectory(&dir, "trajectory.csv", &t.trajectory)?;
        }
        if let Some(c) = &res.impulse {
            let (h, rows) = comparison_table(c);
            dir.csv("comparison.csv", &h, &rows)?;
        }
        let err = t.failure.as_ref().map(|f| match f {
            OnlineFailure::RankTimeout(_) => CliError::Timeout(f.to_string()),
            _ => CliError::Solver(f.to_string()),
        });
        let status = match (&err, t.converged) {
            (Some(e), _) => status_of(e),
            (None, true) => "converged",
            (None, false) => "max-iter",
        };
        dir.json(
            "summary.json",
            &json!({
                "command": "online",
                "status": status,
                "exit_code": err.as_ref().map_or(0, |e| e.exit_code()),
                "iterations": t.records.len(),
                "converged": t.converged,
                "failure": t.failure.as_ref().map(|f| f.to_string()),
                "initial_objective": t.initial_objective,
                "final_objective": t.records.last().map(|r| r.objective),
                "t_learning_end": t.t_learning_end,
                "final_value": t.final_value().polynomial().to_string(),
                "final_policy": t.final_policy().polynomials().iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                "impulse": res.impulse.as_ref().map(|c| json!({
                    "t": c.t0,
                    "x": c.x0,
                    "cost_learned": c.cost_learned,
                    "cost_initial": c.cost_initial,
                })),
            }),
        )?;
        err.map_or(Ok(()), Err)
    })
}

pub fn cmd_simulate(problem: &Problem, original: &str, out: &Path) -> Result<(), CliError> {
    let dir = begin(problem, original, out)?;
    guarded(&dir, "simulate", || {
        let sb = problem
            .file
            .simulate
            .as_ref()
            .ok_or_else(|| CliError::Validation("simulate: block required".into()))?;
        let policy = problem.simulate_policy()?;
        let step = StepControl { h: sb.h, guard: sb.guard };
        let quiet = NoiseSpec::none(problem.sys.m());
        let traj = integrate(&problem.sys, &policy, &quiet, &sb.x0, (0.0, sb.horizon), &step, None)
            .map_err(sim_error)?;
        write_trajectory(&dir, "trajectory.csv", &traj)?;
        let cost = simulate_cost(&problem.sys, &problem.cost, &policy, &sb.x0, sb.horizon, &step)
            .map_err(sim_error)?;
        dir.json(
            "summary.json",
            &json!({
                "command": "simulate",
                "status": "ok",
                "exit_code": 0,
                "cost": cost,
                "final_state": traj.final_state(),
                "policy": policy.polynomials().iter().map(|p| p.to_string()).collect::<Vec<_>>(),
            }),
        )
    })
}

/// Reads value functions for `compare`: polynomial text, or `@file` holding
/// one function per line, optionally as `name = polynomial`.
pub fn read_value_args(args: &[String], n: usize) -> Result<Vec<(String, Polynomial)>, CliError> {
    let mut out = Vec::new();
    for (k, arg) in args.iter().enumerate() {
        if let Some(path) = arg.strip_prefix('@') {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read {path}: {e}")))?;
            for (line_no, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (name, src) = match line.split_once('=') {
                    Some((a, b)) => (a.trim().to_string(), b.trim()),
                    None => (format!("{path}:{}", line_no + 1), line),
                };
                let p = parse_polynomial(src, n)
                    .map_err(|e| CliError::Validation(format!("{path}:{}: {e}", line_no + 1)))?;
                out.push((name, p));
            }
        } else {
            let p = parse_polynomial(arg, n).map_err(|e| CliError::Validation(format!("value {}: {e}", k + 1)))?;
            out.push((format!("f{}", k + 1), p));
        }
    }
    if out.is_empty() {
        return Err(CliError::Validation("compare: no value functions given".into()));
    }
    Ok(out)
}

pub fn cmd_compare(problem: &Problem, original: &str, out: &Path, values: &[String]) -> Result<(), CliError> {
    let dir = begin(problem, original, out)?;
    guarded(&dir, "compare", || {
        let named = read_value_args(values, problem.sys.n())?;
        let points = problem.omega.grid(grid_per_axis(problem));
        let cols = value_columns(problem, &points, &named)?;
        let (h, rows) = artifacts::grid_table(&points, &cols);
        dir.csv("comparison.csv", &h, &rows)?;
        let stats: Vec<Value> = cols
            .iter()
            .map(|(name, v)| {
                json!({
                    "name": name,
                    "min": v.iter().copied().fold(f64::INFINITY, f64::min),
                    "max": v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                })
            })
            .collect();
        // Pairwise ordering: fraction of samples where column a <= column b.
        let mut order = Vec::new();
        for a in 0..cols.len() {
            for b in 0..cols.len() {
                if a != b {
                    let below = cols[a].1.iter().zip(&cols[b].1).filter(|(x, y)| x <= y).count();
                    order.push(json!({
                        "below": cols[a].0,
                        "above": cols[b].0,
                        "fraction": below as f64 / points.len() as f64,
                        "max_excess": cols[a].1.iter().zip(&cols[b].1).map(|(x, y)| x - y).fold(f64::NEG_INFINITY, f64::max),
                    }));
                }
            }
        }
        dir.json(
            "summary.json",
            &json!({
                "command": "compare",
                "status": "ok",
                "exit_code": 0,
                "samples": points.len(),
                "columns": stats,
                "order": order,
            }),
        )
    })
}

pub fn cmd_feasible(problem: &Problem, original: &str, out: &Path) -> Result<(), CliError> {
    let dir = begin(problem, original, out)?;
    guarded(&dir, "feasible", || match run_feasible(problem) {
        Ok(f) => {
            dir.text("v0.txt", &format!("{}\n", f.value.polynomial()))?;
            dir.text("certificates.log", &certificate_log(std::iter::once(("initial value search".to_string(), f.certificates.as_slice()))))?;
            let mut s = feasible_summary(&f);
            s["command"] = json!("feasible");
            s["exit_code"] = json!(0);
            dir.json("summary.json", &s)
        }
        Err(e) => {
            dir.text("certificates.log", &format!("# initial value search\nno certificate: {e}\n"))?;
            Err(e)
        }
    })
}
