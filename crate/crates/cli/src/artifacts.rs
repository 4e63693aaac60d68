//! Output files. Every writer is deterministic given its inputs.

use std::fs;
use std::path::{Path, PathBuf};

use gadp::adp_online::OnlineRecord;
use gadp::gadp_pi::{IterationRecord, Policy, ValueFn};
use gadp::polyalg::Hyperbox;
use gadp::soscomp::GramCertificate;
use serde::Serialize;

use crate::CliError;

/// Output directory handle.
pub struct OutDir {
    root: PathBuf,
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn text(&self, name: &str, content: &str) -> Result<(), CliError> {
        fs::write(self.path(name), content)?;
        Ok(())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        self.text(name, &(s + "\n"))
    }

    pub fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name)).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// The file as given and the configuration actually used.
    pub fn echo(&self, original: &str, effective: &str) -> Result<(), CliError> {
        self.text("problem.toml", original)?;
        self.text("effective.toml", effective)
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn coefficient_header(prefix: &str, len: usize) -> Vec<String> {
    (0..len).map(|j| format!("{prefix}{j}")).collect()
}

/// Offline trace: one row per iteration.
pub fn offline_trace(records: &[IterationRecord]) -> (Vec<String>, Vec<Vec<String>>) {
    let np = records.first().map_or(0, |r| r.p.len());
    let nk = records.first().map_or(0, |r| r.k_next.iter().map(|k| k.len()).sum());
    let mut header: Vec<String> = [
        "iter",
        "objective",
        "step_norm",
        "status",
        "hamiltonian_max",
        "identity_residual",
        "primal_residual",
        "gap",
        "retried",
        "inexact",
        "solver_iterations",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(coefficient_header("p", np));
    header.extend(coefficient_header("k", nk));
    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.iter.to_string(),
                num(r.objective),
                num(r.step_norm),
                r.status.to_string(),
                num(r.hamiltonian_max),
                num(r.identity_residual),
                num(r.primal_residual),
                num(r.gap),
                r.retried.to_string(),
                r.inexact.to_string(),
                r.solver_iterations.to_string(),
            ];
            row.extend(r.p.iter().map(|v| num(*v)));
            row.extend(r.k_next.iter().flatten().map(|v| num(*v)));
            row
        })
        .collect();
    (header, rows)
}

/// Online trace: the offline columns (model-dependent ones left empty) plus
/// least-squares residual, rank and data size.
pub fn online_trace(records: &[OnlineRecord]) -> (Vec<String>, Vec<Vec<String>>) {
    let np = records.first().map_or(0, |r| r.p.len());
    let nk = records.first().map_or(0, |r| r.k_next.iter().map(|k| k.len()).sum());
    let mut header: Vec<String> = [
        "iter",
        "objective",
        "step_norm",
        "status",
        "hamiltonian_max",
        "identity_residual",
        "primal_residual",
        "gap",
        "retried",
        "inexact",
        "solver_iterations",
        "ls_residual",
        "rank",
        "rows",
        "t_update",
        "warning",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(coefficient_header("p", np));
    header.extend(coefficient_header("k", nk));
    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.iter.to_string(),
                num(r.objective),
                num(r.step_norm),
                r.status.to_string(),
                String::new(),
                String::new(),
                num(r.primal_residual),
                num(r.gap),
                r.retried.to_string(),
                r.inexact.to_string(),
                r.solver_iterations.to_string(),
                num(r.ls_residual),
                r.rank.to_string(),
                r.rows.to_string(),
                num(r.t_update),
                r.warning.clone().unwrap_or_default(),
            ];
            row.extend(r.p.iter().map(|v| num(*v)));
            row.extend(r.k_next.iter().flatten().map(|v| num(*v)));
            row
        })
        .collect();
    (header, rows)
}

/// `V0 = ...` lines.
pub fn values_text(values: &[ValueFn]) -> String {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| format!("V{i} = {}\n", v.polynomial()))
        .collect()
}

/// `u1 = [..., ...]` lines, numbered from 1.
pub fn policies_text(policies: &[Policy]) -> String {
    policies
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let parts: Vec<String> = u.polynomials().iter().map(|p| p.to_string()).collect();
            format!("u{} = [{}]\n", i + 1, parts.join("; "))
        })
        .collect()
}

pub fn certificates_text(certs: &[GramCertificate]) -> String {
    certs
        .iter()
        .map(|c| {
            format!(
                "{}: basis {}, residual {:.3e}, min eigenvalue {:.3e}, valid {}\n",
                c.name,
                c.basis.len(),
                c.residual,
                c.min_eigenvalue,
                c.is_valid()
            )
        })
        .collect()
}

/// Sample points for value grids: `per_axis` points per coordinate.
pub fn grid_points(omega: &Hyperbox, per_axis: usize) -> Vec<Vec<f64>> {
    omega.grid(per_axis)
}

/// Grid CSV with one column per named function.
pub fn grid_table(
    points: &[Vec<f64>],
    columns: &[(String, Vec<f64>)],
) -> (Vec<String>, Vec<Vec<String>>) {
    let n = points.first().map_or(0, |p| p.len());
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend(columns.iter().map(|(name, _)| name.clone()));
    let rows = points
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
            row.extend(columns.iter().map(|(_, vals)| num(vals[k])));
            row
        })
        .collect();
    (header, rows)
}
