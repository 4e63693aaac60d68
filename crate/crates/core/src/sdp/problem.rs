use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::SdpError;

/// One stored entry of a symmetric matrix: `value` sits at `(row, col)` and
/// `(col, row)`. Only the upper triangle (`row <= col`) is stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl SymEntry {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        SymEntry { row, col, value }
    }
}

/// A linear equality `<A, X_block> + sum_j b_j y_j = rhs`.
///
/// `<A, X>` is the trace inner product with the symmetric matrix assembled
/// from `entries`, so an off-diagonal entry contributes `2 * value * X[r][c]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Constraint {
    pub block: Option<usize>,
    pub entries: Vec<SymEntry>,
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `min sum_k <C_k, X_k> + c^T y  s.t.  equality rows,  X_k PSD,  y free`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub n_free: usize,
    pub constraints: Vec<Constraint>,
    /// Objective coefficients of the free variables (length `n_free`).
    pub objective_free: Vec<f64>,
    /// Objective matrix entries `(block, entry)`.
    pub objective_blocks: Vec<(usize, SymEntry)>,
}

/// Dense symmetric matrix from stored upper-triangle entries.
pub fn assemble_symmetric(dim: usize, entries: &[SymEntry]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for e in entries {
        m[(e.row, e.col)] += e.value;
        if e.row != e.col {
            m[(e.col, e.row)] += e.value;
        }
    }
    m
}

impl SdpProblem {
    pub fn new(block_dims: Vec<usize>, n_free: usize) -> Self {
        SdpProblem {
            block_dims,
            n_free,
            constraints: Vec::new(),
            objective_free: vec![0.0; n_free],
            objective_blocks: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let bad = |msg: String| Err(SdpError::Invalid(msg));
        if self.objective_free.len() != self.n_free {
            return bad(format!(
                "objective has {} free coefficients, expected {}",
                self.objective_free.len(),
                self.n_free
            ));
        }
        let check_entry = |k: usize, e: &SymEntry| -> Result<(), SdpError> {
            let dim = *self
                .block_dims
                .get(k)
                .ok_or_else(|| SdpError::Invalid(format!("block {k} does not exist")))?;
            if e.row > e.col || e.col >= dim || !e.value.is_finite() {
                return Err(SdpError::Invalid(format!(
                    "entry ({}, {}) = {} invalid for block {k} of size {dim}",
                    e.row, e.col, e.value
                )));
            }
            Ok(())
        };
        for (k, e) in &self.objective_blocks {
            check_entry(*k, e)?;
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return bad(format!("row {i} has non-finite rhs"));
            }
            match c.block {
                Some(k) => {
                    for e in &c.entries {
                        check_entry(k, e)?;
                    }
                }
                None if !c.entries.is_empty() => {
                    return bad(format!("row {i} has block entries but no block"))
                }
                None => {}
            }
            for &(j, v) in &c.free {
                if j >= self.n_free || !v.is_finite() {
                    return bad(format!("row {i} references free variable {j} = {v}"));
                }
            }
        }
        Ok(())
    }

    /// Serializes to the line-oriented `SDPF 1` text format:
    ///
    /// ```text
    /// SDPF 1
    /// blocks <K> <n_1> ... <n_K>
    /// free <N>
    /// constraints <M>
    /// c <j> <value>              objective coefficient of free variable j
    /// C <k> <r> <c> <value>      objective entry of block k (upper triangle)
    /// row <i> <k|-> <rhs>        constraint i acting on block k (or none)
    /// A <i> <r> <c> <value>      entry of constraint i's block matrix
    /// B <i> <j> <value>          coefficient of free variable j in row i
    /// end
    /// ```
    ///
    /// Indices are zero-based; values are printed in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("SDPF 1\n");
        write!(s, "blocks {}", self.block_dims.len()).unwrap();
        for d in &self.block_dims {
            write!(s, " {d}").unwrap();
        }
        s.push('\n');
        writeln!(s, "free {}", self.n_free).unwrap();
        writeln!(s, "constraints {}", self.constraints.len()).unwrap();
        for (j, v) in self.objective_free.iter().enumerate() {
            if *v != 0.0 {
                writeln!(s, "c {j} {v:?}").unwrap();
            }
        }
        for (k, e) in &self.objective_blocks {
            writeln!(s, "C {k} {} {} {:?}", e.row, e.col, e.value).unwrap();
        }
        for (i, c) in self.constraints.iter().enumerate() {
            match c.block {
                Some(k) => writeln!(s, "row {i} {k} {:?}", c.rhs).unwrap(),
                None => writeln!(s, "row {i} - {:?}", c.rhs).unwrap(),
            }
            for e in &c.entries {
                writeln!(s, "A {i} {} {} {:?}", e.row, e.col, e.value).unwrap();
            }
            for (j, v) in &c.free {
                writeln!(s, "B {i} {j} {v:?}").unwrap();
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<SdpProblem, SdpError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, msg: &str| SdpError::Format {
            line,
            msg: msg.to_string(),
        };
        fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T, SdpError> {
            tok.and_then(|t| t.parse().ok()).ok_or(SdpError::Format {
                line,
                msg: "missing or malformed number".into(),
            })
        }
        let (ln, head) = lines.next().ok_or_else(|| err(0, "empty input"))?;
        if head != "SDPF 1" {
            return Err(err(ln, "expected header `SDPF 1`"));
        }
        let (ln, l) = lines.next().ok_or_else(|| err(ln, "missing blocks line"))?;
        let mut t = l.split_whitespace();
        if t.next() != Some("blocks") {
            return Err(err(ln, "expected `blocks`"));
        }
        let nb: usize = num(t.next(), ln)?;
        let block_dims = (0..nb)
            .map(|_| num(t.next(), ln))
            .collect::<Result<Vec<usize>, _>>()?;
        let (ln, l) = lines.next().ok_or_else(|| err(ln, "missing free line"))?;
        let mut t = l.split_whitespace();
        if t.next() != Some("free") {
            return Err(err(ln, "expected `free`"));
        }
        let n_free: usize = num(t.next(), ln)?;
        let (ln, l) = lines.next().ok_or_else(|| err(ln, "missing constraints line"))?;
        let mut t = l.split_whitespace();
        if t.next() != Some("constraints") {
            return Err(err(ln, "expected `constraints`"));
        }
        let m: usize = num(t.next(), ln)?;
        let mut p = SdpProblem::new(block_dims, n_free);
        p.constraints = vec![Constraint::default(); m];
        let mut ended = false;
        for (ln, l) in lines {
            let mut t = l.split_whitespace();
            let kind = t.next().unwrap();
            let row_of = |v: usize| -> Result<usize, SdpError> {
                if v < m {
                    Ok(v)
                } else {
                    Err(err(ln, "constraint index out of range"))
                }
            };
            match kind {
                "c" => {
                    let j: usize = num(t.next(), ln)?;
                    let v: f64 = num(t.next(), ln)?;
                    *p.objective_free
                        .get_mut(j)
                        .ok_or_else(|| err(ln, "free index out of range"))? = v;
                }
                "C" => {
                    let k = num(t.next(), ln)?;
                    let r = num(t.next(), ln)?;
                    let c = num(t.next(), ln)?;
                    let v = num(t.next(), ln)?;
                    p.objective_blocks.push((k, SymEntry { row: r, col: c, value: v }));
                }
                "row" => {
                    let i = row_of(num(t.next(), ln)?)?;
                    let blk = t.next().ok_or_else(|| err(ln, "missing block"))?;
                    p.constraints[i].block = if blk == "-" {
                        None
                    } else {
                        Some(blk.parse().map_err(|_| err(ln, "bad block index"))?)
                    };
                    p.constraints[i].rhs = num(t.next(), ln)?;
                }
                "A" => {
                    let i = row_of(num(t.next(), ln)?)?;
                    let r = num(t.next(), ln)?;
                    let c = num(t.next(), ln)?;
                    let v = num(t.next(), ln)?;
                    p.constraints[i].entries.push(SymEntry { row: r, col: c, value: v });
                }
                "B" => {
                    let i = row_of(num(t.next(), ln)?)?;
                    let j = num(t.next(), ln)?;
                    let v = num(t.next(), ln)?;
                    p.constraints[i].free.push((j, v));
                }
                "end" => {
                    ended = true;
                    break;
                }
                _ => return Err(err(ln, "unknown record")),
            }
        }
        if !ended {
            return Err(err(0, "missing `end`"));
        }
        p.validate()?;
        Ok(p)
    }
}
