use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};

use super::{
    assemble_symmetric, row_activity, ConicSolver, SdpProblem, SdpSolution, SdpStatus,
    SolverOptions,
};

/// Infeasible-start primal-dual path-following method with the HKM search
/// direction and Mehrotra predictor-corrector steps.
///
/// Rows without block entries are eliminated up front through a null-space
/// parametrization of the free variables. The remaining rows are equilibrated
/// and the Schur complement is assembled block by block; free variables enter
/// through the reduced saddle system `B^T M^{-1} B`.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPointSolver;

impl ConicSolver for InteriorPointSolver {
    fn name(&self) -> &str {
        "hkm-ipm"
    }

    fn solve(&self, problem: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
        if let Err(e) = problem.validate() {
            return trivial_solution(problem, SdpStatus::NumericalFailure, e.to_string());
        }
        match presolve(problem) {
            Err(sol) => *sol,
            Ok((reduced, recover)) => {
                let run = interior_point(&reduced, opts);
                recover.finish(problem, run)
            }
        }
    }
}

/// Nonzero pattern of one symmetric constraint matrix, grouped by row. Both
/// triangles are stored so `<A, G> = sum a_pq G_pq` also holds for
/// non-symmetric `G`.
struct Row {
    block: usize,
    grouped: Vec<(usize, Vec<(usize, f64)>)>,
}

/// Equilibrated problem handed to the interior-point loop. Rows are sorted by
/// block, so block `k` owns rows `offsets[k]..offsets[k + 1]`.
struct Reduced {
    dims: Vec<usize>,
    c: Vec<DMatrix<f64>>,
    rows: Vec<Row>,
    offsets: Vec<usize>,
    b: DVector<f64>,
    bm: DMatrix<f64>,
    cf: DVector<f64>,
}

/// Everything needed to map a reduced iterate back to the original problem.
struct Recover {
    orig_rows: Vec<usize>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    kept_cols: Vec<usize>,
    y_p: DVector<f64>,
    t: DMatrix<f64>,
    omega: f64,
    pure_rows: Vec<usize>,
    pure_matrix: DMatrix<f64>,
}

struct Run {
    status: SdpStatus,
    x: Vec<DMatrix<f64>>,
    w: DVector<f64>,
    lam: DVector<f64>,
    s: Vec<DMatrix<f64>>,
    iterations: usize,
    message: String,
}

fn trivial_solution(problem: &SdpProblem, status: SdpStatus, message: String) -> SdpSolution {
    SdpSolution {
        status,
        blocks: problem
            .block_dims
            .iter()
            .map(|&n| DMatrix::zeros(n, n))
            .collect(),
        free: vec![0.0; problem.n_free],
        dual: vec![0.0; problem.constraints.len()],
        dual_slack: problem
            .block_dims
            .iter()
            .map(|&n| DMatrix::zeros(n, n))
            .collect(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        gap: f64::NAN,
        iterations: 0,
        message,
    }
}

fn inf_norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn presolve(p: &SdpProblem) -> Result<(Reduced, Recover), Box<SdpSolution>> {
    let nf = p.n_free;
    let mut block_rows: Vec<(usize, usize, BTreeMap<(usize, usize), f64>)> = Vec::new();
    let mut pure_rows = Vec::new();
    for (i, c) in p.constraints.iter().enumerate() {
        let mut full = BTreeMap::new();
        if let Some(k) = c.block {
            for e in &c.entries {
                *full.entry((e.row, e.col)).or_insert(0.0) += e.value;
                if e.row != e.col {
                    *full.entry((e.col, e.row)).or_insert(0.0) += e.value;
                }
            }
            full.retain(|_, v| *v != 0.0);
            if !full.is_empty() {
                block_rows.push((k, i, full));
                continue;
            }
        }
        pure_rows.push(i);
    }
    block_rows.sort_by_key(|(k, i, _)| (*k, *i));

    let free_row = |i: usize| {
        let mut r = DVector::zeros(nf);
        for &(j, v) in &p.constraints[i].free {
            r[j] += v;
        }
        r
    };

    // Eliminate rows that only involve free variables: y = y_p + T z.
    let np = pure_rows.len();
    let mut pure_matrix = DMatrix::<f64>::zeros(np, nf);
    let mut l = DVector::<f64>::zeros(np);
    for (r, &i) in pure_rows.iter().enumerate() {
        pure_matrix.set_row(r, &free_row(i).transpose());
        l[r] = p.constraints[i].rhs;
    }
    let rhs_scale = 1.0 + inf_norm(p.constraints.iter().map(|c| c.rhs));
    let (y_p, t) = if np == 0 {
        (DVector::zeros(nf), DMatrix::identity(nf, nf))
    } else if nf == 0 {
        if inf_norm(l.iter().copied()) > 1e-9 * rhs_scale {
            return Err(Box::new(trivial_solution(
                p,
                SdpStatus::Infeasible,
                "row with no variables has nonzero right-hand side".into(),
            )));
        }
        (DVector::zeros(0), DMatrix::zeros(0, 0))
    } else {
        let rows = np.max(nf);
        let mut padded = DMatrix::<f64>::zeros(rows, nf);
        padded.rows_mut(0, np).copy_from(&pure_matrix);
        let svd = SVD::new(padded.clone(), true, true);
        let smax = svd.singular_values.max();
        let tol = 1e-10 * smax.max(1e-300);
        let mut rhs = DVector::zeros(rows);
        rhs.rows_mut(0, np).copy_from(&l);
        let y_p = svd.solve(&rhs, tol).expect("svd vectors requested");
        let resid = &pure_matrix * &y_p - &l;
        if inf_norm(resid.iter().copied()) > 1e-9 * rhs_scale.max(inf_norm(y_p.iter().copied())) {
            return Err(Box::new(trivial_solution(
                p,
                SdpStatus::Infeasible,
                "inconsistent equalities among free variables".into(),
            )));
        }
        let vt = svd.v_t.expect("svd vectors requested");
        let null: Vec<usize> = (0..nf)
            .filter(|&j| svd.singular_values[j] <= tol)
            .collect();
        let mut t = DMatrix::zeros(nf, null.len());
        for (c, &j) in null.iter().enumerate() {
            t.set_column(c, &vt.row(j).transpose());
        }
        (y_p, t)
    };
    let nz_all = t.ncols();

    let m = block_rows.len();
    let mut b = DVector::zeros(m);
    let mut bm = DMatrix::zeros(m, nz_all);
    for (r, (_, i, _)) in block_rows.iter().enumerate() {
        let fr = free_row(*i);
        b[r] = p.constraints[*i].rhs - fr.dot(&y_p);
        if nz_all > 0 {
            bm.set_row(r, &(fr.transpose() * &t));
        }
    }
    let mut cfree = DVector::from_vec(p.objective_free.clone());
    if nf > 0 {
        cfree = t.transpose() * cfree;
    }

    // Free directions that no row sees: harmless if costless, else unbounded.
    let bmax = inf_norm(bm.iter().copied());
    let cmax = inf_norm(cfree.iter().copied());
    let mut kept_cols = Vec::new();
    for j in 0..nz_all {
        let colmax = inf_norm(bm.column(j).iter().copied());
        if colmax > 1e-12 * bmax.max(1e-300) {
            kept_cols.push(j);
        } else if cfree[j].abs() > 1e-12 * cmax.max(1.0) {
            return Err(Box::new(trivial_solution(
                p,
                SdpStatus::Unbounded,
                "objective decreases along an unconstrained free direction".into(),
            )));
        }
    }
    let bm = bm.select_columns(&kept_cols);
    let cfree = cfree.select_rows(&kept_cols);

    // Equilibrate rows, free columns and the objective.
    let mut row_scale = vec![1.0; m];
    for (r, (_, _, full)) in block_rows.iter().enumerate() {
        let a = inf_norm(full.values().copied());
        let f = inf_norm(bm.row(r).iter().copied());
        let s = a.max(f);
        row_scale[r] = if s > 0.0 { 1.0 / s } else { 1.0 };
    }
    let mut bm = bm;
    for r in 0..m {
        bm.row_mut(r).scale_mut(row_scale[r]);
    }
    let mut col_scale = vec![1.0; kept_cols.len()];
    for j in 0..kept_cols.len() {
        let cmax = inf_norm(bm.column(j).iter().copied());
        col_scale[j] = if cmax > 0.0 { 1.0 / cmax } else { 1.0 };
        bm.column_mut(j).scale_mut(col_scale[j]);
    }
    let mut c: Vec<DMatrix<f64>> = p.block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for (k, e) in &p.objective_blocks {
        c[*k][(e.row, e.col)] += e.value;
        if e.row != e.col {
            c[*k][(e.col, e.row)] += e.value;
        }
    }
    let mut cf = DVector::from_iterator(
        kept_cols.len(),
        cfree.iter().zip(&col_scale).map(|(v, d)| v * d),
    );
    let obj_max = inf_norm(c.iter().flat_map(|m| m.iter().copied()))
        .max(inf_norm(cf.iter().copied()));
    let omega = 1.0 / obj_max.max(1.0);
    for ck in &mut c {
        ck.scale_mut(omega);
    }
    cf.scale_mut(omega);

    let mut rows = Vec::with_capacity(m);
    let mut orig_rows = Vec::with_capacity(m);
    let nblocks = p.block_dims.len();
    let mut offsets = vec![0usize; nblocks + 1];
    for (r, (k, i, full)) in block_rows.into_iter().enumerate() {
        b[r] *= row_scale[r];
        let mut grouped: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        for ((pp, q), v) in full {
            let v = v * row_scale[r];
            match grouped.last_mut() {
                Some((last, list)) if *last == pp => list.push((q, v)),
                _ => grouped.push((pp, vec![(q, v)])),
            }
        }
        rows.push(Row { block: k, grouped });
        orig_rows.push(i);
        offsets[k + 1] += 1;
    }
    for k in 0..nblocks {
        offsets[k + 1] += offsets[k];
    }

    Ok((
        Reduced {
            dims: p.block_dims.clone(),
            c,
            rows,
            offsets,
            b,
            bm,
            cf,
        },
        Recover {
            orig_rows,
            row_scale,
            col_scale,
            kept_cols,
            y_p,
            t,
            omega,
            pure_rows,
            pure_matrix,
        },
    ))
}

impl Reduced {
    fn a_op(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|row| {
                let xk = &x[row.block];
                row.grouped
                    .iter()
                    .map(|(p, list)| list.iter().map(|&(q, a)| a * xk[(*p, q)]).sum::<f64>())
                    .sum()
            }),
        )
    }

    fn at_op(&self, lam: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (r, row) in self.rows.iter().enumerate() {
            let l = lam[r];
            if l == 0.0 {
                continue;
            }
            let y = &mut out[row.block];
            for (p, list) in &row.grouped {
                for &(q, a) in list {
                    y[(*p, q)] += a * l;
                }
            }
        }
        out
    }

    /// `M_ij = tr(A_i X A_j S^{-1})` for the rows of block `k`.
    fn schur_block(&self, k: usize, x: &DMatrix<f64>, sinv: &DMatrix<f64>) -> DMatrix<f64> {
        let range = self.offsets[k]..self.offsets[k + 1];
        let mk = range.len();
        let n = self.dims[k];
        let times = |mat: &DMatrix<f64>| -> Vec<Vec<(usize, Vec<f64>)>> {
            self.rows[range.clone()]
                .iter()
                .map(|row| {
                    row.grouped
                        .iter()
                        .map(|(p, list)| {
                            let mut acc = vec![0.0; n];
                            for &(q, a) in list {
                                for (t, v) in acc.iter_mut().zip(mat.column(q).iter()) {
                                    *t += a * v;
                                }
                            }
                            (*p, acc)
                        })
                        .collect()
                })
                .collect()
        };
        let u = times(x);
        let w = times(sinv);
        let mut m = DMatrix::zeros(mk, mk);
        for i in 0..mk {
            for j in i..mk {
                let mut s = 0.0;
                for (p, up) in &u[i] {
                    for (q, wq) in &w[j] {
                        s += up[*q] * wq[*p];
                    }
                }
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        m
    }
}

fn cholesky_regularized(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let dmax = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut delta = 1e-14 * dmax;
    for _ in 0..8 {
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += delta;
        }
        if let Some(c) = Cholesky::new(reg) {
            return Some(c);
        }
        delta *= 100.0;
    }
    None
}

struct Factor {
    m: Vec<DMatrix<f64>>,
    chol: Vec<Option<Cholesky<f64, Dyn>>>,
    f: Vec<DMatrix<f64>>,
    sy: Option<Cholesky<f64, Dyn>>,
}

impl Factor {
    fn new(red: &Reduced, m_blocks: &[DMatrix<f64>]) -> Option<Factor> {
        let nz = red.bm.ncols();
        let mut chol = Vec::with_capacity(m_blocks.len());
        let mut f = Vec::with_capacity(m_blocks.len());
        let mut sy = DMatrix::zeros(nz, nz);
        for (k, mk) in m_blocks.iter().enumerate() {
            if mk.nrows() == 0 {
                chol.push(None);
                f.push(DMatrix::zeros(0, nz));
                continue;
            }
            let c = cholesky_regularized(mk)?;
            if nz > 0 {
                let bk = red
                    .bm
                    .rows(red.offsets[k], red.offsets[k + 1] - red.offsets[k])
                    .into_owned();
                let fk = c.solve(&bk);
                sy += bk.transpose() * &fk;
                f.push(fk);
            } else {
                f.push(DMatrix::zeros(mk.nrows(), 0));
            }
            chol.push(Some(c));
        }
        let sy = if nz > 0 {
            Some(cholesky_regularized(&sy)?)
        } else {
            None
        };
        Some(Factor {
            m: m_blocks.to_vec(),
            chol,
            f,
            sy,
        })
    }

    /// Residuals `(h - M dl - B dy, rc - B^T dl)`.
    fn residual(
        &self,
        red: &Reduced,
        h: &DVector<f64>,
        rc: &DVector<f64>,
        dl: &DVector<f64>,
        dy: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let mut r1 = h - &red.bm * dy;
        for (k, mk) in self.m.iter().enumerate() {
            if mk.nrows() == 0 {
                continue;
            }
            let a = red.offsets[k];
            let prod = mk * dl.rows(a, mk.nrows());
            let mut seg = r1.rows_mut(a, mk.nrows());
            seg -= prod;
        }
        let r2 = rc - red.bm.transpose() * dl;
        (r1, r2)
    }

    /// [`Factor::solve_once`] followed by a few rounds of iterative refinement.
    fn solve(&self, red: &Reduced, h: &DVector<f64>, rc: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut dl, mut dy) = self.solve_once(red, h, rc);
        let scale = h.norm() + rc.norm();
        let (mut r1, mut r2) = self.residual(red, h, rc, &dl, &dy);
        let mut err = r1.norm() + r2.norm();
        for _ in 0..4 {
            if err <= 1e-15 * scale {
                break;
            }
            let (cl, cy) = self.solve_once(red, &r1, &r2);
            let (nl, ny) = (&dl + cl, &dy + cy);
            let (n1, n2) = self.residual(red, h, rc, &nl, &ny);
            let nerr = n1.norm() + n2.norm();
            if nerr >= err {
                break;
            }
            (dl, dy, r1, r2, err) = (nl, ny, n1, n2, nerr);
        }
        (dl, dy)
    }

    /// Solves `M dl + B dy = h`, `B^T dl = rc`.
    fn solve_once(&self, red: &Reduced, h: &DVector<f64>, rc: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let m = h.len();
        let nz = rc.len();
        let mut u = DVector::zeros(m);
        for (k, c) in self.chol.iter().enumerate() {
            if let Some(c) = c {
                let (a, len) = (red.offsets[k], red.offsets[k + 1] - red.offsets[k]);
                let hk = h.rows(a, len).into_owned();
                u.rows_mut(a, len).copy_from(&c.solve(&hk));
            }
        }
        if nz == 0 {
            return (u, DVector::zeros(0));
        }
        let rhs = red.bm.transpose() * &u - rc;
        let dy = self.sy.as_ref().expect("free block factored").solve(&rhs);
        for (k, fk) in self.f.iter().enumerate() {
            if fk.nrows() == 0 {
                continue;
            }
            let a = red.offsets[k];
            let corr = fk * &dy;
            let mut seg = u.rows_mut(a, fk.nrows());
            seg -= corr;
        }
        (u, dy)
    }
}

fn dot(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Largest `alpha` keeping `X + alpha dX` PSD (infinite when unbounded).
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    if x.nrows() == 0 {
        return f64::INFINITY;
    }
    let Some(ch) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = ch.l();
    let Some(t) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(t2) = l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let lmin = SymmetricEigen::new(sym(t2)).eigenvalues.min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_step_all(x: &[DMatrix<f64>], dx: &[DMatrix<f64>]) -> f64 {
    x.iter()
        .zip(dx)
        .map(|(a, b)| max_step(a, b))
        .fold(f64::INFINITY, f64::min)
}

fn interior_point(red: &Reduced, opts: &SolverOptions) -> Run {
    let nblocks = red.dims.len();
    let m = red.rows.len();
    let nz = red.bm.ncols();
    let nn: f64 = red.dims.iter().sum::<usize>() as f64;

    let b_norm = red.b.norm();
    let c_norm = frob(&red.c) + red.cf.norm();

    let mut x = Vec::with_capacity(nblocks);
    let mut s = Vec::with_capacity(nblocks);
    for k in 0..nblocks {
        let n = red.dims[k] as f64;
        let mut xi: f64 = 10.0f64.max(n.sqrt());
        for r in red.offsets[k]..red.offsets[k + 1] {
            let an: f64 = red.rows[r]
                .grouped
                .iter()
                .flat_map(|(_, l)| l.iter().map(|(_, a)| a * a))
                .sum::<f64>()
                .sqrt();
            xi = xi.max(n.sqrt() * (1.0 + red.b[r].abs()) / (1.0 + an));
        }
        let eta = 10.0f64.max(n.sqrt()).max(1.0 + red.c[k].norm());
        x.push(DMatrix::identity(red.dims[k], red.dims[k]) * xi);
        s.push(DMatrix::identity(red.dims[k], red.dims[k]) * eta);
    }
    let mut w = DVector::zeros(nz);
    let mut lam = DVector::zeros(m);
    let mut stalls = 0;
    let mut last_steps = (0.0, 0.0);

    // Most primal-feasible iterate so far; returned on numerical failure.
    let mut best: Option<(f64, Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>)> = None;

    let finish = |status, x, w, lam, s, iterations, message: String| Run {
        status,
        x,
        w,
        lam,
        s,
        iterations,
        message,
    };
    let fail = |best: Option<(f64, Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>)>,
                x,
                w,
                lam,
                s,
                iterations,
                message: String| match best {
        Some((_, bx, bw, bl, bs)) => finish(SdpStatus::NumericalFailure, bx, bw, bl, bs, iterations, message),
        None => finish(SdpStatus::NumericalFailure, x, w, lam, s, iterations, message),
    };

    if nn == 0.0 {
        return finish(SdpStatus::Optimal, x, w, lam, s, 0, "no conic variables".into());
    }

    for it in 0..=opts.max_iter {
        let ax = red.a_op(&x);
        let bw = &red.bm * &w;
        let rp = &red.b - &ax - &bw;
        let ats = red.at_op(&lam);
        let rd: Vec<DMatrix<f64>> = (0..nblocks).map(|k| &red.c[k] - &ats[k] - &s[k]).collect();
        let rc = &red.cf - red.bm.transpose() * &lam;
        let pobj = dot(&red.c, &x) + red.cf.dot(&w);
        let dobj = red.b.dot(&lam);
        let xs = dot(&x, &s);
        let mu = xs / nn;

        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = (frob(&rd) + rc.norm()) / (1.0 + c_norm);
        let scale = 1.0 + pobj.abs() + dobj.abs();
        let gap = ((pobj - dobj).abs() / scale).max(xs.max(0.0) / scale);
        if opts.verbose {
            eprintln!(
                "it {it:3} pobj {pobj:+.6e} dobj {dobj:+.6e} pinf {pinf:.2e} dinf {dinf:.2e} gap {gap:.2e} mu {mu:.2e} ap {:.2e} ad {:.2e}",
                last_steps.0, last_steps.1
            );
        }
        if !(pobj.is_finite() && dobj.is_finite() && xs.is_finite()) {
            return fail(best, x, w, lam, s, it, "non-finite iterate".into());
        }
        if best.as_ref().is_none_or(|b| pinf < b.0) {
            best = Some((pinf, x.clone(), w.clone(), lam.clone(), s.clone()));
        }
        if pinf <= opts.feas_tol && dinf <= opts.feas_tol && gap <= opts.gap_tol {
            return finish(SdpStatus::Optimal, x, w, lam, s, it, "converged".into());
        }
        if it > 0 && dobj > 0.0 {
            let ats_s: Vec<DMatrix<f64>> = (0..nblocks).map(|k| &ats[k] + &s[k]).collect();
            let cert = (frob(&ats_s) + (red.bm.transpose() * &lam).norm()) / dobj;
            if cert < opts.infeas_tol {
                return finish(
                    SdpStatus::Infeasible,
                    x,
                    w,
                    lam,
                    s,
                    it,
                    format!("primal infeasible (Farkas residual {cert:.2e})"),
                );
            }
        }
        if it > 0 && pobj < 0.0 {
            let cert = (&ax + &bw).norm() / (-pobj);
            if cert < opts.infeas_tol {
                return finish(
                    SdpStatus::Unbounded,
                    x,
                    w,
                    lam,
                    s,
                    it,
                    format!("dual infeasible (ray residual {cert:.2e})"),
                );
            }
        }
        if it == opts.max_iter {
            return fail(
                best,
                x,
                w,
                lam,
                s,
                it,
                format!("iteration limit reached (pinf {pinf:.2e}, dinf {dinf:.2e}, gap {gap:.2e})"),
            );
        }

        let mut sinv = Vec::with_capacity(nblocks);
        for sk in &s {
            match Cholesky::new(sk.clone()) {
                Some(c) => sinv.push(sym(c.inverse())),
                None => {
                    return fail(
                        best,
                        x,
                        w,
                        lam,
                        s,
                        it,
                        "dual slack lost definiteness".into(),
                    )
                }
            }
        }
        let m_blocks: Vec<DMatrix<f64>> = (0..nblocks)
            .map(|k| red.schur_block(k, &x[k], &sinv[k]))
            .collect();
        let Some(factor) = Factor::new(red, &m_blocks) else {
            return fail(
                best,
                x,
                w,
                lam,
                s,
                it,
                "Schur complement factorization failed".into(),
            );
        };

        let xrs: Vec<DMatrix<f64>> = (0..nblocks).map(|k| &x[k] * &rd[k] * &sinv[k]).collect();
        let direction = |g: Vec<DMatrix<f64>>| {
            let h = &rp - red.a_op(&g);
            let (dl, dw) = factor.solve(red, &h, &rc);
            let atdl = red.at_op(&dl);
            let ds: Vec<DMatrix<f64>> = (0..nblocks).map(|k| &rd[k] - &atdl[k]).collect();
            let dx: Vec<DMatrix<f64>> = g
                .into_iter()
                .enumerate()
                .map(|(k, gk)| sym(gk + &x[k] * &atdl[k] * &sinv[k]))
                .collect();
            (dx, dw, dl, ds)
        };

        // Predictor.
        let g: Vec<DMatrix<f64>> = (0..nblocks).map(|k| -&x[k] - &xrs[k]).collect();
        let (dxa, _, _, dsa) = direction(g);
        let ap = max_step_all(&x, &dxa).min(1.0);
        let ad = max_step_all(&s, &dsa).min(1.0);
        let mut mu_aff = 0.0;
        for k in 0..nblocks {
            let xa = &x[k] + &dxa[k] * ap;
            let sa = &s[k] + &dsa[k] * ad;
            mu_aff += xa.dot(&sa);
        }
        mu_aff /= nn;
        let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
        let sigma = (mu_aff.max(0.0) / mu).powf(expon).clamp(0.0, 1.0);

        // Corrector.
        let g: Vec<DMatrix<f64>> = (0..nblocks)
            .map(|k| &sinv[k] * (sigma * mu) - &x[k] - &xrs[k] - &dxa[k] * &dsa[k] * &sinv[k])
            .collect();
        let (dx, dw, dl, ds) = direction(g);
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = (gamma * max_step_all(&x, &dx)).min(1.0);
        let ad = (gamma * max_step_all(&s, &ds)).min(1.0);

        for k in 0..nblocks {
            x[k] = sym(&x[k] + &dx[k] * ap);
            s[k] = sym(&s[k] + &ds[k] * ad);
        }
        w += &dw * ap;
        lam += &dl * ad;
        last_steps = (ap, ad);

        if ap < 1e-8 && ad < 1e-8 {
            stalls += 1;
            if stalls >= 3 {
                return fail(
                    best,
                    x,
                    w,
                    lam,
                    s,
                    it + 1,
                    format!("step lengths collapsed (pinf {pinf:.2e}, dinf {dinf:.2e}, gap {gap:.2e})"),
                );
            }
        } else {
            stalls = 0;
        }
    }
    unreachable!("loop returns at the iteration limit")
}

impl Recover {
    fn finish(&self, p: &SdpProblem, run: Run) -> SdpSolution {
        let nf = p.n_free;
        let m = p.constraints.len();

        let mut z = DVector::zeros(self.t.ncols());
        for (c, &j) in self.kept_cols.iter().enumerate() {
            z[j] = run.w[c] * self.col_scale[c];
        }
        let y = if nf > 0 { &self.y_p + &self.t * z } else { DVector::zeros(0) };

        let mut dual = vec![0.0; m];
        let blocks = run.x;
        if run.status == SdpStatus::Infeasible {
            // Farkas ray normalized so that rhs^T dual = 1.
            for (r, &i) in self.orig_rows.iter().enumerate() {
                dual[i] = run.lam[r] * self.row_scale[r];
            }
            let bt: f64 = p.constraints.iter().zip(&dual).map(|(c, d)| c.rhs * d).sum();
            if bt > 0.0 {
                for d in &mut dual {
                    *d /= bt;
                }
            }
        } else {
            for (r, &i) in self.orig_rows.iter().enumerate() {
                dual[i] = run.lam[r] * self.row_scale[r] / self.omega;
            }
            if !self.pure_rows.is_empty() && nf > 0 {
                // Multipliers of eliminated rows: least squares on B^T dual = c.
                let mut resid = DVector::from_vec(p.objective_free.clone());
                for (i, c) in p.constraints.iter().enumerate() {
                    for &(j, v) in &c.free {
                        resid[j] -= v * dual[i];
                    }
                }
                let lt = self.pure_matrix.transpose();
                let svd = SVD::new(lt, true, true);
                let tol = 1e-10 * svd.singular_values.max().max(1e-300);
                if let Ok(sol) = svd.solve(&resid, tol) {
                    for (r, &i) in self.pure_rows.iter().enumerate() {
                        dual[i] = sol[r];
                    }
                }
            }
        }
        let dual_slack: Vec<DMatrix<f64>> = run.s.iter().map(|sk| sk / self.omega).collect();

        let mut c_full: Vec<DMatrix<f64>> =
            p.block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (k, e) in &p.objective_blocks {
            c_full[*k] += assemble_symmetric(p.block_dims[*k], std::slice::from_ref(e));
        }
        let yv: Vec<f64> = y.iter().copied().collect();
        let pobj = dot(&c_full, &blocks)
            + p.objective_free.iter().zip(&yv).map(|(a, b)| a * b).sum::<f64>();
        let dobj: f64 = p.constraints.iter().zip(&dual).map(|(c, d)| c.rhs * d).sum();
        let act = row_activity(p, &blocks, &yv);
        let rhs_max = inf_norm(p.constraints.iter().map(|c| c.rhs));
        let primal_residual = inf_norm(
            p.constraints
                .iter()
                .zip(&act)
                .map(|(c, a)| c.rhs - a),
        ) / (1.0 + rhs_max);

        let mut rd = c_full.clone();
        for (k, sk) in dual_slack.iter().enumerate() {
            rd[k] -= sk;
        }
        let mut rc = DVector::from_vec(p.objective_free.clone());
        for (i, c) in p.constraints.iter().enumerate() {
            if let Some(k) = c.block {
                rd[k] -= assemble_symmetric(p.block_dims[k], &c.entries) * dual[i];
            }
            for &(j, v) in &c.free {
                rc[j] -= v * dual[i];
            }
        }
        let c_norm = frob(&c_full) + p.objective_free.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dual_residual = (frob(&rd) + rc.norm()) / (1.0 + c_norm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

        SdpSolution {
            status: run.status,
            blocks,
            free: yv,
            dual,
            dual_slack,
            primal_objective: pobj,
            dual_objective: dobj,
            primal_residual,
            dual_residual,
            gap,
            iterations: run.iterations,
            message: run.message,
        }
    }
}
