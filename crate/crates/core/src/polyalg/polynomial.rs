use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::{Monomial, PolyError};

/// Coefficients below this magnitude are dropped after floating-point
/// arithmetic so round-off does not inflate the term count.
pub const PRUNE_TOL: f64 = 1e-12;

/// A sparse multivariate polynomial with real coefficients.
///
/// Terms are kept in a map ordered by [`Monomial`]'s degree-major order and
/// never contain a zero coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::from_terms(n, [(Monomial::one(n), c)])
    }

    /// The coordinate polynomial `x_i` (zero-based).
    pub fn var(n: usize, i: usize) -> Self {
        Self::from_terms(n, [(Monomial::var(n, i), 1.0)])
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        let n = m.nvars();
        Self::from_terms(n, [(m, c)])
    }

    /// Builds a polynomial from explicit terms. Repeated monomials are summed;
    /// exact zeros are dropped, every other coefficient is kept as given.
    ///
    /// Panics if a monomial has the wrong number of variables.
    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (m, c) in terms {
            assert_eq!(m.nvars(), n, "monomial variable count mismatch");
            *map.entry(m).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        Polynomial { n, terms: map }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Total degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    /// Smallest degree among the stored terms.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).min()
    }

    /// Largest coefficient magnitude (0 for the zero polynomial).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    fn pruned(mut self) -> Self {
        self.terms.retain(|_, c| c.abs() >= PRUNE_TOL);
        self
    }

    fn check(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.n != other.n {
            return Err(PolyError::VarCountMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check(other)?;
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            *terms.entry(m.clone()).or_insert(0.0) += c;
        }
        Ok(Polynomial { n: self.n, terms }.pruned())
    }

    pub fn checked_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check(other)?;
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            *terms.entry(m.clone()).or_insert(0.0) -= c;
        }
        Ok(Polynomial { n: self.n, terms }.pruned())
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check(other)?;
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *terms.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        Ok(Polynomial { n: self.n, terms }.pruned())
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero(self.n);
        }
        Polynomial {
            n: self.n,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
        .pruned()
    }

    pub fn powi(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.n, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    pub fn partial(&self, i: usize) -> Polynomial {
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m, c) in &self.terms {
            if let Some((k, dm)) = m.derivative(i) {
                *terms.entry(dm).or_insert(0.0) += k * c;
            }
        }
        Polynomial { n: self.n, terms }.pruned()
    }

    /// `[dV/dx1, ..., dV/dxn]`.
    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.n).map(|i| self.partial(i)).collect()
    }

    /// `sum_i dV/dx_i * field_i`.
    pub fn lie_derivative(&self, field: &[Polynomial]) -> Result<Polynomial, PolyError> {
        if field.len() != self.n {
            return Err(PolyError::DimensionMismatch {
                expected: self.n,
                got: field.len(),
            });
        }
        let mut out = Polynomial::zero(self.n);
        for (i, fi) in field.iter().enumerate() {
            let di = self.partial(i);
            out = out.checked_add(&di.checked_mul(fi)?)?;
        }
        Ok(out)
    }

    /// Direct term summation at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.n {
            return Err(PolyError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(x)).sum()
    }

    /// Largest coefficient-wise difference between two polynomials.
    pub fn max_coeff_diff(&self, other: &Polynomial) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, c) in &self.terms {
            worst = worst.max((c - other.coeff(m)).abs());
        }
        for (m, c) in &other.terms {
            if !self.terms.contains_key(m) {
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    /// Drops coefficients with magnitude below `tol`.
    pub fn truncate(&self, tol: f64) -> Polynomial {
        let mut out = self.clone();
        out.terms.retain(|_, c| c.abs() >= tol);
        out
    }

    /// True when there is no degree-0 term.
    pub fn vanishes_at_origin(&self) -> bool {
        !self.terms.keys().any(Monomial::is_one)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(rhs).expect("polynomial variable count mismatch")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.checked_sub(rhs).expect("polynomial variable count mismatch")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.checked_mul(rhs).expect("polynomial variable count mismatch")
    }
}

impl Mul<f64> for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: f64) -> Polynomial {
        self.scale(rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Text form `c*x1^a1*...` with terms in ascending monomial order, e.g.
/// `-0.1*x1 - 0.1*x1^3`. Coefficients use Rust's shortest round-trip
/// formatting so parsing the output reproduces the polynomial exactly.
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (m, &c)) in self.terms.iter().enumerate() {
            let mag = c.abs();
            if k == 0 {
                if c < 0.0 {
                    f.write_str("-")?;
                }
            } else if c < 0.0 {
                f.write_str(" - ")?;
            } else {
                f.write_str(" + ")?;
            }
            if m.is_one() {
                write!(f, "{mag:?}")?;
            } else {
                write!(f, "{mag:?}*{m}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(n: usize, i: usize) -> Polynomial {
        Polynomial::var(n, i)
    }

    #[test]
    fn add_cancels_to_canonical_form() {
        let p = &(&x(1, 0) * &x(1, 0)) + &x(1, 0);
        let q = &p + &(-&x(1, 0));
        assert_eq!(q, &x(1, 0) * &x(1, 0));
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn difference_of_squares() {
        let a = &x(2, 0) + &x(2, 1);
        let b = &x(2, 0) - &x(2, 1);
        let expect = &(&x(2, 0) * &x(2, 0)) - &(&x(2, 1) * &x(2, 1));
        assert_eq!(&a * &b, expect);
    }

    #[test]
    fn zero_scale_gives_zero() {
        let p = &x(2, 0) + &Polynomial::constant(2, 3.0);
        assert!(p.scale(0.0).is_zero());
        assert_eq!(p.scale(0.0).degree(), None);
    }

    #[test]
    fn mismatched_variable_counts_are_rejected() {
        assert!(matches!(
            x(1, 0).checked_add(&x(2, 0)),
            Err(PolyError::VarCountMismatch { left: 1, right: 2 })
        ));
        assert!(x(2, 0).eval(&[1.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let v = &(&x(1, 0) * &x(1, 0)) + &x(1, 0).powi(4);
        let g = v.gradient();
        let expect = &x(1, 0).scale(2.0) + &x(1, 0).powi(3).scale(4.0);
        assert_eq!(g, vec![expect]);

        let w = &(&x(2, 0) * &x(2, 0)) * &x(2, 1);
        let g = w.gradient();
        assert_eq!(g[0], (&x(2, 0) * &x(2, 1)).scale(2.0));
        assert_eq!(g[1], &x(2, 0) * &x(2, 0));

        let c = Polynomial::constant(3, 5.0);
        assert!(c.gradient().iter().all(Polynomial::is_zero));
    }

    #[test]
    fn lie_derivative_examples() {
        let v = &x(1, 0) * &x(1, 0);
        assert_eq!(v.lie_derivative(&[x(1, 0)]).unwrap(), v.scale(2.0));

        let v = &(&x(2, 0) * &x(2, 0)) + &(&x(2, 1) * &x(2, 1));
        let field = [x(2, 1), -&x(2, 0)];
        assert!(v.lie_derivative(&field).unwrap().is_zero());
        assert!(v.lie_derivative(&field[..1]).is_err());
    }

    #[test]
    fn eval_examples() {
        let p = &x(1, 0).powi(2) + &x(1, 0).powi(4);
        assert_eq!(p.eval(&[2.0]).unwrap(), 20.0);
        assert_eq!(Polynomial::zero(3).eval(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn display_format() {
        let p = &x(1, 0).scale(-0.1) - &x(1, 0).powi(3).scale(0.1);
        assert_eq!(p.to_string(), "-0.1*x1 - 0.1*x1^3");
        assert_eq!(Polynomial::zero(2).to_string(), "0");
        let q = &Polynomial::constant(2, 1.5) + &(&x(2, 0) * &x(2, 1));
        assert_eq!(q.to_string(), "1.5 + 1.0*x1*x2");
    }
}
