use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix};

use crate::polyalg::{Expr, Polynomial};

use super::PiError;

/// `x' = f(x) + g(x) u` with polynomial `f` (n entries, `f(0) = 0`) and
/// polynomial `g` (n x m).
#[derive(Debug, Clone, PartialEq)]
pub struct PolySystem {
    n: usize,
    m: usize,
    f: Vec<Polynomial>,
    g: Vec<Vec<Polynomial>>,
}

fn max_degree<'a>(ps: impl IntoIterator<Item = &'a Polynomial>) -> u32 {
    ps.into_iter().filter_map(|p| p.degree()).max().unwrap_or(0)
}

impl PolySystem {
    pub fn new(f: Vec<Polynomial>, g: Vec<Vec<Polynomial>>) -> Result<Self, PiError> {
        let n = f.len();
        if n == 0 {
            return Err(PiError::InvalidSystem("f is empty".into()));
        }
        if g.len() != n {
            return Err(PiError::InvalidSystem(format!("g has {} rows, expected {n}", g.len())));
        }
        let m = g[0].len();
        if m == 0 {
            return Err(PiError::InvalidSystem("g has no input columns".into()));
        }
        for (i, row) in g.iter().enumerate() {
            if row.len() != m {
                return Err(PiError::InvalidSystem(format!(
                    "g row {} has {} columns, expected {m}",
                    i + 1,
                    row.len()
                )));
            }
        }
        for p in f.iter().chain(g.iter().flatten()) {
            if p.nvars() != n {
                return Err(PiError::InvalidSystem(format!(
                    "polynomial in {} variables inside a system of dimension {n}",
                    p.nvars()
                )));
            }
        }
        for (i, fi) in f.iter().enumerate() {
            if !fi.vanishes_at_origin() {
                return Err(PiError::InvalidSystem(format!("f{} has a constant term", i + 1)));
            }
        }
        Ok(PolySystem { n, m, f, g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn f(&self) -> &[Polynomial] {
        &self.f
    }

    pub fn g(&self) -> &[Vec<Polynomial>] {
        &self.g
    }

    pub fn deg_f(&self) -> u32 {
        max_degree(&self.f)
    }

    pub fn deg_g(&self) -> u32 {
        max_degree(self.g.iter().flatten())
    }

    /// `f + g u` for polynomial inputs `u`.
    pub fn closed_loop(&self, u: &[Polynomial]) -> Result<Vec<Polynomial>, PiError> {
        if u.len() != self.m {
            return Err(PiError::Dimension(format!(
                "input has {} channels, system has {}",
                u.len(),
                self.m
            )));
        }
        Ok((0..self.n)
            .map(|i| {
                let mut fi = self.f[i].clone();
                for (gij, uj) in self.g[i].iter().zip(u) {
                    fi = &fi + &(gij * uj);
                }
                fi
            })
            .collect())
    }

    /// `f(x)` and `g(x)` at a point.
    pub fn eval(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let f = self.f.iter().map(|p| p.eval_unchecked(x)).collect();
        let g = self
            .g
            .iter()
            .map(|row| row.iter().map(|p| p.eval_unchecked(x)).collect())
            .collect();
        (f, g)
    }
}

/// Running cost `q(x) + u^T R u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    q: Polynomial,
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
}

impl CostSpec {
    pub fn new(q: Polynomial, r: DMatrix<f64>) -> Result<Self, PiError> {
        if let Some(d) = q.min_degree() {
            if d < 2 {
                return Err(PiError::InvalidCost(
                    "q must not have constant or linear terms".into(),
                ));
            }
        }
        if r.nrows() != r.ncols() || r.nrows() == 0 {
            return Err(PiError::InvalidCost("R must be a nonempty square matrix".into()));
        }
        let scale = r.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        if (&r - r.transpose()).iter().any(|v| v.abs() > 1e-12 * scale) {
            return Err(PiError::InvalidCost("R is not symmetric".into()));
        }
        let Some(ch) = Cholesky::new(r.clone()) else {
            return Err(PiError::InvalidCost("R is not positive definite".into()));
        };
        let r_inv = ch.inverse();
        Ok(CostSpec { q, r, r_inv })
    }

    pub fn q(&self) -> &Polynomial {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn r_inv(&self) -> &DMatrix<f64> {
        &self.r_inv
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    /// `u^T R u` for polynomial inputs.
    pub fn input_quadratic(&self, u: &[Polynomial]) -> Polynomial {
        let n = u.first().map(|p| p.nvars()).unwrap_or(1);
        let mut acc = Polynomial::zero(n);
        for a in 0..u.len() {
            for b in 0..u.len() {
                let w = self.r[(a, b)];
                if w != 0.0 {
                    acc = &acc + &(&u[a] * &u[b]).scale(w);
                }
            }
        }
        acc
    }

    /// `q(x) + u^T R u` at a point.
    pub fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let mut s = self.q.eval_unchecked(x);
        for a in 0..u.len() {
            for b in 0..u.len() {
                s += self.r[(a, b)] * u[a] * u[b];
            }
        }
        s
    }
}

/// An uncertain parameter with its nominal value and interval.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub nominal: f64,
    pub lo: f64,
    pub hi: f64,
}

/// A family of polynomial systems whose coefficients are expressions in
/// named parameters ranging over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricSystem {
    n: usize,
    m: usize,
    f: Vec<Expr>,
    g: Vec<Vec<Expr>>,
    params: Vec<ParamSpec>,
}

impl ParametricSystem {
    pub fn new(f: Vec<Expr>, g: Vec<Vec<Expr>>, params: Vec<ParamSpec>) -> Result<Self, PiError> {
        let n = f.len();
        let m = g.first().map(|r| r.len()).unwrap_or(0);
        for p in &params {
            if !(p.lo <= p.nominal && p.nominal <= p.hi) || !p.lo.is_finite() || !p.hi.is_finite() {
                return Err(PiError::InvalidSystem(format!(
                    "parameter `{}` needs lo <= nominal <= hi, got [{}, {}] with nominal {}",
                    p.name, p.lo, p.hi, p.nominal
                )));
            }
        }
        for e in f.iter().chain(g.iter().flatten()) {
            for name in e.params() {
                if !params.iter().any(|p| p.name == name) {
                    return Err(PiError::InvalidSystem(format!("undeclared parameter `{name}`")));
                }
            }
        }
        let fam = ParametricSystem { n, m, f, g, params };
        fam.nominal()?;
        Ok(fam)
    }

    /// A family with no uncertain parameters.
    pub fn fixed(sys: &PolySystem) -> Self {
        let lift = |p: &Polynomial| {
            Expr::parse(&p.to_string(), p.nvars()).expect("polynomial display parses back")
        };
        ParametricSystem {
            n: sys.n(),
            m: sys.m(),
            f: sys.f().iter().map(lift).collect(),
            g: sys.g().iter().map(|r| r.iter().map(lift).collect()).collect(),
            params: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn instantiate(&self, values: &[f64]) -> Result<PolySystem, PiError> {
        let map: HashMap<String, f64> = self
            .params
            .iter()
            .zip(values)
            .map(|(p, &v)| (p.name.clone(), v))
            .collect();
        let lower = |e: &Expr| e.to_polynomial(self.n, &map).map_err(PiError::from);
        let f = self.f.iter().map(lower).collect::<Result<Vec<_>, _>>()?;
        let g = self
            .g
            .iter()
            .map(|r| r.iter().map(lower).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        PolySystem::new(f, g)
    }

    pub fn nominal(&self) -> Result<PolySystem, PiError> {
        let v: Vec<f64> = self.params.iter().map(|p| p.nominal).collect();
        self.instantiate(&v)
    }

    /// All corners of the parameter box; degenerate intervals contribute a
    /// single value.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new()];
        for p in &self.params {
            let ends: Vec<f64> = if p.lo == p.hi { vec![p.lo] } else { vec![p.lo, p.hi] };
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    ends.iter().map(move |&e| {
                        let mut v = prefix.clone();
                        v.push(e);
                        v
                    })
                })
                .collect();
        }
        out
    }

    /// Checks numerically that every coefficient of `f` and `g` is affine in
    /// the parameters: second and mixed differences across the box vanish.
    pub fn check_affine(&self) -> Result<(), PiError> {
        let k = self.params.len();
        let base: Vec<f64> = self.params.iter().map(|p| p.lo).collect();
        let width: Vec<f64> = self.params.iter().map(|p| p.hi - p.lo).collect();
        let coeffs = |v: &[f64]| -> Result<Vec<Polynomial>, PiError> {
            let s = self.instantiate(v)?;
            Ok(s.f().iter().chain(s.g().iter().flatten()).cloned().collect())
        };
        let at = |steps: &[(usize, f64)]| {
            let mut v = base.clone();
            for &(i, t) in steps {
                v[i] += t * width[i];
            }
            coeffs(&v)
        };
        let p0 = at(&[])?;
        let scale = p0.iter().map(|p| p.max_abs_coeff()).fold(1.0f64, f64::max);
        let combine = |terms: &[(f64, &Vec<Polynomial>)]| -> f64 {
            (0..p0.len())
                .map(|e| {
                    let mut acc = Polynomial::zero(self.n);
                    for (w, ps) in terms {
                        acc = &acc + &ps[e].scale(*w);
                    }
                    acc.max_abs_coeff()
                })
                .fold(0.0, f64::max)
        };
        for i in 0..k {
            if width[i] == 0.0 {
                continue;
            }
            let ph = at(&[(i, 0.5)])?;
            let p1 = at(&[(i, 1.0)])?;
            if combine(&[(1.0, &p1), (-2.0, &ph), (1.0, &p0)]) > 1e-9 * scale {
                return Err(PiError::NonAffine(self.params[i].name.clone()));
            }
            for j in i + 1..k {
                if width[j] == 0.0 {
                    continue;
                }
                let pj = at(&[(j, 1.0)])?;
                let pij = at(&[(i, 1.0), (j, 1.0)])?;
                if combine(&[(1.0, &pij), (-1.0, &p1), (-1.0, &pj), (1.0, &p0)]) > 1e-9 * scale {
                    return Err(PiError::NonAffine(format!(
                        "{} x {}",
                        self.params[i].name, self.params[j].name
                    )));
                }
            }
        }
        Ok(())
    }
}
