use serde::{Deserialize, Serialize};

use crate::polyalg::{MonomialBasis, PolyError, Polynomial};

use super::PiError;

/// `V(x) = p^T m_{2,2r}(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFn {
    pub n: usize,
    pub r: u32,
    pub p: Vec<f64>,
}

impl ValueFn {
    pub fn new(n: usize, r: u32, p: Vec<f64>) -> Result<Self, PiError> {
        let b = Self::basis_for(n, r)?;
        if p.len() != b.len() {
            return Err(PiError::Dimension(format!(
                "value function needs {} coefficients, got {}",
                b.len(),
                p.len()
            )));
        }
        Ok(ValueFn { n, r, p })
    }

    pub fn basis_for(n: usize, r: u32) -> Result<MonomialBasis, PiError> {
        if r < 1 {
            return Err(PiError::Dimension("half-degree r must be at least 1".into()));
        }
        Ok(MonomialBasis::new(n, 2, 2 * r)?)
    }

    pub fn zero(n: usize, r: u32) -> Result<Self, PiError> {
        let len = Self::basis_for(n, r)?.len();
        Self::new(n, r, vec![0.0; len])
    }

    /// Coefficients of `poly` over `m_{2,2r}`; fails on terms outside it.
    pub fn from_polynomial(poly: &Polynomial, r: u32) -> Result<Self, PiError> {
        let b = Self::basis_for(poly.nvars(), r)?;
        let p = b.coefficients(poly)?;
        Ok(ValueFn { n: poly.nvars(), r, p })
    }

    pub fn basis(&self) -> MonomialBasis {
        MonomialBasis::new(self.n, 2, 2 * self.r).expect("validated at construction")
    }

    pub fn polynomial(&self) -> Polynomial {
        self.basis().polynomial(&self.p)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.polynomial().eval_unchecked(x)
    }

    /// `c^T p`.
    pub fn objective(&self, c: &[f64]) -> f64 {
        self.p.iter().zip(c).map(|(a, b)| a * b).sum()
    }

    /// Euclidean distance between coefficient vectors.
    pub fn distance(&self, other: &ValueFn) -> f64 {
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `u(x) = K m_{1,d}(x)` with `K` stored row-wise (`m` rows of `|m_{1,d}|`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub n: usize,
    pub d: u32,
    pub k: Vec<Vec<f64>>,
}

impl Policy {
    pub fn basis_for(n: usize, d: u32) -> Result<MonomialBasis, PiError> {
        if d < 1 {
            return Err(PiError::Dimension("policy degree d must be at least 1".into()));
        }
        Ok(MonomialBasis::new(n, 1, d)?)
    }

    pub fn new(n: usize, d: u32, k: Vec<Vec<f64>>) -> Result<Self, PiError> {
        let len = Self::basis_for(n, d)?.len();
        if k.is_empty() || k.iter().any(|row| row.len() != len) {
            return Err(PiError::Dimension(format!(
                "policy gain rows must have {len} entries"
            )));
        }
        Ok(Policy { n, d, k })
    }

    pub fn zero(n: usize, m: usize, d: u32) -> Result<Self, PiError> {
        let len = Self::basis_for(n, d)?.len();
        Self::new(n, d, vec![vec![0.0; len]; m])
    }

    /// Gain matrix of the given input polynomials; a term outside `m_{1,d}`
    /// is a degree overflow.
    pub fn from_polynomials(u: &[Polynomial], d: u32) -> Result<Self, PiError> {
        let n = u.first().map(|p| p.nvars()).ok_or_else(|| {
            PiError::Dimension("policy needs at least one input channel".into())
        })?;
        let b = Self::basis_for(n, d)?;
        let k = u
            .iter()
            .map(|p| match b.coefficients(p) {
                Ok(row) => Ok(row),
                Err(PolyError::OutsideBasis { monomial, .. }) => {
                    Err(PiError::DegreeOverflow { monomial, d })
                }
                Err(e) => Err(e.into()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Policy { n, d, k })
    }

    pub fn m(&self) -> usize {
        self.k.len()
    }

    pub fn basis(&self) -> MonomialBasis {
        MonomialBasis::new(self.n, 1, self.d).expect("validated at construction")
    }

    pub fn polynomials(&self) -> Vec<Polynomial> {
        let b = self.basis();
        self.k.iter().map(|row| b.polynomial(row)).collect()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mx = self.basis().eval(x);
        self.k
            .iter()
            .map(|row| row.iter().zip(&mx).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `vec(K)` with column stacking: entry `j * m + a` is `K[a][j]`.
    pub fn vec(&self) -> Vec<f64> {
        let m = self.m();
        let nd = self.k[0].len();
        let mut out = vec![0.0; m * nd];
        for (a, row) in self.k.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[j * m + a] = v;
            }
        }
        out
    }

    /// Inverse of [`Policy::vec`].
    pub fn from_vec(n: usize, d: u32, m: usize, v: &[f64]) -> Result<Self, PiError> {
        let nd = Self::basis_for(n, d)?.len();
        if v.len() != m * nd {
            return Err(PiError::Dimension(format!(
                "vec(K) needs {} entries, got {}",
                m * nd,
                v.len()
            )));
        }
        let k = (0..m)
            .map(|a| (0..nd).map(|j| v[j * m + a]).collect())
            .collect();
        Ok(Policy { n, d, k })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::parse_polynomial;

    #[test]
    fn value_round_trip() {
        let v = ValueFn::from_polynomial(&parse_polynomial("10*x^2 + 10*x^4", 1).unwrap(), 2).unwrap();
        assert_eq!(v.p, vec![10.0, 0.0, 10.0]);
        assert_eq!(v.eval(&[1.0]), 20.0);
        assert!(ValueFn::from_polynomial(&parse_polynomial("x^6", 1).unwrap(), 2).is_err());
    }

    #[test]
    fn policy_vec_is_column_stacked() {
        let pol = Policy::new(1, 2, vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(pol.vec(), vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(Policy::from_vec(1, 2, 2, &pol.vec()).unwrap(), pol);
    }

    #[test]
    fn policy_overflow_names_monomial() {
        let u = [parse_polynomial("x^4", 1).unwrap()];
        match Policy::from_polynomials(&u, 3) {
            Err(PiError::DegreeOverflow { monomial, d }) => {
                assert_eq!(monomial, "x1^4");
                assert_eq!(d, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
