use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Monomial, PolyError, Polynomial};

/// `C(n, k)` in exact integer arithmetic.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of monomials in `n` variables with degree in `[d1, d2]`.
pub fn basis_len(n: usize, d1: u32, d2: u32) -> usize {
    let n = n as u64;
    let upper = binomial(n + d2 as u64, d2 as u64);
    let lower = if d1 == 0 {
        0
    } else {
        binomial(n + d1 as u64 - 1, d1 as u64 - 1)
    };
    (upper - lower) as usize
}

/// All monomials of exact degree `deg`, in descending lexicographic order.
fn monomials_of_degree(n: usize, deg: u32, out: &mut Vec<Monomial>) {
    fn rec(prefix: &mut Vec<u32>, remaining: u32, slots: usize, out: &mut Vec<Monomial>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(Monomial::new(prefix.clone()));
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            rec(prefix, remaining - e, slots - 1, out);
            prefix.pop();
        }
    }
    rec(&mut Vec::with_capacity(n), deg, n, out);
}

/// The ordered vector `m_{d1,d2}(x)` of all monic monomials with degree
/// between `d1` and `d2`.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    n: usize,
    d1: u32,
    d2: u32,
    entries: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
}

impl PartialEq for MonomialBasis {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.d1 == other.d1 && self.d2 == other.d2
    }
}

impl MonomialBasis {
    /// Basis with `1 <= d1 <= d2`, `n >= 1`.
    pub fn new(n: usize, d1: u32, d2: u32) -> Result<Self, PolyError> {
        if d1 < 1 {
            return Err(PolyError::InvalidDegreeBounds { n, d1, d2 });
        }
        Self::spanning(n, d1, d2)
    }

    /// Like [`MonomialBasis::new`] but also admits `d1 = 0`, i.e. a basis
    /// containing the constant monomial.
    pub fn spanning(n: usize, d1: u32, d2: u32) -> Result<Self, PolyError> {
        if n < 1 || d1 > d2 {
            return Err(PolyError::InvalidDegreeBounds { n, d1, d2 });
        }
        let mut entries = Vec::with_capacity(basis_len(n, d1, d2));
        for deg in d1..=d2 {
            monomials_of_degree(n, deg, &mut entries);
        }
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Ok(MonomialBasis {
            n,
            d1,
            d2,
            entries,
            index,
        })
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn degree_range(&self) -> (u32, u32) {
        (self.d1, self.d2)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Monomial] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> &Monomial {
        &self.entries[i]
    }

    pub fn position(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }

    /// `m(x)` as a numeric vector.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|m| m.eval(x)).collect()
    }

    /// `coeffs^T m(x)` as a polynomial.
    pub fn polynomial(&self, coeffs: &[f64]) -> Polynomial {
        assert_eq!(coeffs.len(), self.len(), "coefficient length mismatch");
        Polynomial::from_terms(
            self.n,
            self.entries.iter().cloned().zip(coeffs.iter().copied()),
        )
    }

    /// Coefficient vector of `p` over this basis; fails when `p` has a term
    /// outside the basis.
    pub fn coefficients(&self, p: &Polynomial) -> Result<Vec<f64>, PolyError> {
        if p.nvars() != self.n {
            return Err(PolyError::VarCountMismatch {
                left: self.n,
                right: p.nvars(),
            });
        }
        let mut out = vec![0.0; self.len()];
        for (m, c) in p.terms() {
            match self.position(m) {
                Some(i) => out[i] = c,
                None => {
                    return Err(PolyError::OutsideBasis {
                        monomial: m.to_string(),
                        d1: self.d1,
                        d2: self.d2,
                    })
                }
            }
        }
        Ok(out)
    }
}

/// An axis-aligned box `[lo_1, hi_1] x ... x [lo_n, hi_n]` containing the
/// origin in its interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperbox {
    bounds: Vec<(f64, f64)>,
}

impl Hyperbox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, PolyError> {
        if bounds.is_empty() {
            return Err(PolyError::InvalidBox("box has no dimensions".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(PolyError::InvalidBox(format!(
                    "interval {} = [{lo}, {hi}] is not a finite closed interval",
                    i + 1
                )));
            }
            if !(lo < 0.0 && hi > 0.0) {
                return Err(PolyError::InvalidBox(format!(
                    "interval {} = [{lo}, {hi}] does not contain 0 in its interior",
                    i + 1
                )));
            }
        }
        Ok(Hyperbox { bounds })
    }

    /// `[-h, h]^n`.
    pub fn symmetric(n: usize, h: f64) -> Result<Self, PolyError> {
        Self::new(vec![(-h, h); n])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// `∫ m(x) dx` over the box as a product of one-dimensional integrals.
    pub fn integrate_monomial(&self, m: &Monomial) -> f64 {
        m.exponents()
            .iter()
            .zip(&self.bounds)
            .map(|(&e, &(lo, hi))| {
                let k = e as i32 + 1;
                (hi.powi(k) - lo.powi(k)) / k as f64
            })
            .product()
    }

    pub fn integrate(&self, p: &Polynomial) -> f64 {
        p.terms().map(|(m, c)| c * self.integrate_monomial(m)).sum()
    }

    /// Regular grid with `per_axis` points per coordinate (endpoints included).
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let axes: Vec<Vec<f64>> = self
            .bounds
            .iter()
            .map(|&(lo, hi)| {
                (0..per_axis)
                    .map(|k| lo + (hi - lo) * k as f64 / (per_axis - 1) as f64)
                    .collect()
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for prefix in &out {
                for &v in axis {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }
}

/// Entry `j` is the integral of basis monomial `j` over the box.
pub fn box_integral(basis: &MonomialBasis, domain: &Hyperbox) -> Result<Vec<f64>, PolyError> {
    if basis.nvars() != domain.dim() {
        return Err(PolyError::DimensionMismatch {
            expected: basis.nvars(),
            got: domain.dim(),
        });
    }
    Ok(basis
        .entries()
        .iter()
        .map(|m| domain.integrate_monomial(m))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_quartic_basis() {
        let b = MonomialBasis::new(1, 2, 4).unwrap();
        let names: Vec<_> = b.entries().iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["x1^2", "x1^3", "x1^4"]);
    }

    #[test]
    fn linear_basis_in_two_variables() {
        let b = MonomialBasis::new(2, 1, 1).unwrap();
        let names: Vec<_> = b.entries().iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["x1", "x2"]);
    }

    #[test]
    fn four_state_quartic_basis_has_65_terms() {
        assert_eq!(MonomialBasis::new(4, 2, 4).unwrap().len(), 65);
        assert_eq!(basis_len(4, 2, 4), 65);
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(MonomialBasis::new(1, 0, 2).is_err());
        assert!(MonomialBasis::new(2, 3, 2).is_err());
        assert!(MonomialBasis::new(0, 1, 2).is_err());
        assert_eq!(MonomialBasis::spanning(2, 0, 1).unwrap().len(), 3);
    }

    #[test]
    fn box_integral_examples() {
        let b = MonomialBasis::new(1, 2, 4).unwrap();
        let c = box_integral(&b, &Hyperbox::symmetric(1, 1.0).unwrap()).unwrap();
        assert!((c[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c[1], 0.0);
        assert!((c[2] - 2.0 / 5.0).abs() < 1e-15);

        let sq = Hyperbox::symmetric(2, 1.0).unwrap();
        let m = Monomial::new(vec![2, 2]);
        assert!((sq.integrate_monomial(&m) - 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(sq.integrate_monomial(&Monomial::new(vec![3, 2])), 0.0);
    }

    #[test]
    fn box_must_contain_origin() {
        assert!(Hyperbox::new(vec![(0.0, 1.0)]).is_err());
        assert!(Hyperbox::new(vec![(1.0, -1.0)]).is_err());
    }

    #[test]
    fn coefficients_outside_basis_fail() {
        let b = MonomialBasis::new(1, 1, 2).unwrap();
        let p = Polynomial::var(1, 0).powi(3);
        assert!(matches!(b.coefficients(&p), Err(PolyError::OutsideBasis { .. })));
    }
}
