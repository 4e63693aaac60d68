use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::polyalg::{Monomial, Polynomial};

use super::SosError;

/// Named scalar decision variables, indexed `0..len`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionVector {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl DecisionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>) -> Result<usize, SosError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(SosError::DuplicateName(name));
        }
        let i = self.names.len();
        self.index.insert(name.clone(), i);
        self.names.push(name);
        Ok(i)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

/// `a_0(x) + sum_j a_j(x) y_j`: a polynomial in `x` that depends affinely on
/// the decision variables `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolynomial {
    n: usize,
    constant: Polynomial,
    sensitivities: BTreeMap<usize, Polynomial>,
}

impl AffinePolynomial {
    pub fn zero(n: usize) -> Self {
        AffinePolynomial {
            n,
            constant: Polynomial::zero(n),
            sensitivities: BTreeMap::new(),
        }
    }

    pub fn from_constant(p: Polynomial) -> Self {
        AffinePolynomial {
            n: p.nvars(),
            constant: p,
            sensitivities: BTreeMap::new(),
        }
    }

    /// `p(x) * y_j`.
    pub fn from_term(var: usize, p: Polynomial) -> Self {
        let mut a = Self::zero(p.nvars());
        a.sensitivities.insert(var, p);
        a.prune();
        a
    }

    /// `sum_j coeffs_j * y_{vars_j} * basis_j(x)`.
    pub fn linear_combination(n: usize, vars: &[usize], polys: &[Polynomial]) -> Result<Self, SosError> {
        let mut a = Self::zero(n);
        for (&v, p) in vars.iter().zip(polys) {
            a.add_term(v, p)?;
        }
        Ok(a)
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn constant(&self) -> &Polynomial {
        &self.constant
    }

    pub fn sensitivities(&self) -> &BTreeMap<usize, Polynomial> {
        &self.sensitivities
    }

    fn check(&self, p: &Polynomial) -> Result<(), SosError> {
        if p.nvars() != self.n {
            return Err(SosError::VarCountMismatch {
                expected: self.n,
                got: p.nvars(),
            });
        }
        Ok(())
    }

    fn prune(&mut self) {
        self.sensitivities.retain(|_, p| !p.is_zero());
    }

    /// Adds `p(x) * y_var`.
    pub fn add_term(&mut self, var: usize, p: &Polynomial) -> Result<(), SosError> {
        self.check(p)?;
        let entry = self
            .sensitivities
            .entry(var)
            .or_insert_with(|| Polynomial::zero(p.nvars()));
        *entry = &*entry + p;
        self.prune();
        Ok(())
    }

    /// Adds the `y`-independent polynomial `p`.
    pub fn add_constant(&mut self, p: &Polynomial) -> Result<(), SosError> {
        self.check(p)?;
        self.constant = &self.constant + p;
        Ok(())
    }

    pub fn add(&self, other: &AffinePolynomial) -> Result<AffinePolynomial, SosError> {
        let mut out = self.clone();
        out.add_constant(&other.constant)?;
        for (&j, p) in &other.sensitivities {
            out.add_term(j, p)?;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &AffinePolynomial) -> Result<AffinePolynomial, SosError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> AffinePolynomial {
        let mut out = AffinePolynomial {
            n: self.n,
            constant: self.constant.scale(s),
            sensitivities: self
                .sensitivities
                .iter()
                .map(|(&j, p)| (j, p.scale(s)))
                .collect(),
        };
        out.prune();
        out
    }

    /// The polynomial obtained by fixing `y = values`.
    pub fn evaluate(&self, values: &[f64]) -> Polynomial {
        let mut out = self.constant.clone();
        for (&j, p) in &self.sensitivities {
            out = &out + &p.scale(values[j]);
        }
        out
    }

    /// Every monomial with a nonzero coefficient in some component.
    pub fn support(&self) -> BTreeSet<Monomial> {
        let mut s: BTreeSet<Monomial> = self.constant.terms().map(|(m, _)| m.clone()).collect();
        for p in self.sensitivities.values() {
            s.extend(p.terms().map(|(m, _)| m.clone()));
        }
        s
    }

    /// `(min degree, max degree)` over the support, or `None` if identically zero.
    pub fn degree_range(&self) -> Option<(u32, u32)> {
        let s = self.support();
        let lo = s.iter().map(|m| m.degree()).min()?;
        let hi = s.iter().map(|m| m.degree()).max()?;
        Some((lo, hi))
    }

    pub fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.sensitivities.is_empty()
    }

    pub fn max_var(&self) -> Option<usize> {
        self.sensitivities.keys().next_back().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosConstraint {
    pub name: String,
    pub poly: AffinePolynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquality {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `min b^T y` subject to SOS constraints on affine polynomials, linear
/// equalities and optional interval bounds on `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SosProgram {
    n: usize,
    decisions: DecisionVector,
    objective: Vec<f64>,
    sos: Vec<SosConstraint>,
    linear_eq: Vec<LinearEquality>,
    bounds: Vec<(f64, f64)>,
}

impl SosProgram {
    /// An empty program over polynomials in `n` indeterminates.
    pub fn new(n: usize) -> Self {
        SosProgram {
            n,
            decisions: DecisionVector::new(),
            objective: Vec::new(),
            sos: Vec::new(),
            linear_eq: Vec::new(),
            bounds: Vec::new(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn decisions(&self) -> &DecisionVector {
        &self.decisions
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn sos_constraints(&self) -> &[SosConstraint] {
        &self.sos
    }

    pub fn linear_equalities(&self) -> &[LinearEquality] {
        &self.linear_eq
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn add_variable(&mut self, name: impl Into<String>) -> Result<usize, SosError> {
        let i = self.decisions.push(name)?;
        self.objective.push(0.0);
        self.bounds.push((f64::NEG_INFINITY, f64::INFINITY));
        Ok(i)
    }

    /// Adds `count` variables named `prefix[0]`, `prefix[1]`, ...
    pub fn add_variables(&mut self, prefix: &str, count: usize) -> Result<Vec<usize>, SosError> {
        (0..count)
            .map(|i| self.add_variable(format!("{prefix}[{i}]")))
            .collect()
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) -> Result<(), SosError> {
        let slot = self
            .objective
            .get_mut(var)
            .ok_or(SosError::UnknownVariable(var))?;
        *slot = coeff;
        Ok(())
    }

    pub fn add_sos(&mut self, name: impl Into<String>, poly: AffinePolynomial) -> Result<usize, SosError> {
        let name = name.into();
        if poly.nvars() != self.n {
            return Err(SosError::VarCountMismatch {
                expected: self.n,
                got: poly.nvars(),
            });
        }
        if let Some(j) = poly.max_var() {
            if j >= self.decisions.len() {
                return Err(SosError::UnknownVariable(j));
            }
        }
        if let Some((_, hi)) = poly.degree_range() {
            if hi % 2 == 1 {
                return Err(SosError::OddDegree { constraint: name, degree: hi });
            }
        }
        self.sos.push(SosConstraint { name, poly });
        Ok(self.sos.len() - 1)
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) -> Result<(), SosError> {
        for &(j, _) in &coeffs {
            if j >= self.decisions.len() {
                return Err(SosError::UnknownVariable(j));
            }
        }
        self.linear_eq.push(LinearEquality { coeffs, rhs });
        Ok(())
    }

    /// Restricts `y_var` to `[lo, hi]`; infinite ends are allowed.
    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> Result<(), SosError> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(SosError::InvalidBounds { var, lo, hi });
        }
        let slot = self.bounds.get_mut(var).ok_or(SosError::UnknownVariable(var))?;
        *slot = (lo, hi);
        Ok(())
    }

    /// `b^T y`.
    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_evaluation() {
        let x = Polynomial::var(1, 0);
        let mut a = AffinePolynomial::from_constant(x.powi(2));
        a.add_term(0, &x.powi(4)).unwrap();
        let p = a.evaluate(&[3.0]);
        assert_eq!(p.to_string(), "1.0*x1^2 + 3.0*x1^4");
        assert_eq!(a.degree_range(), Some((2, 4)));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut sp = SosProgram::new(1);
        sp.add_variable("a").unwrap();
        assert!(matches!(sp.add_variable("a"), Err(SosError::DuplicateName(_))));
    }

    #[test]
    fn odd_degree_rejected() {
        let mut sp = SosProgram::new(1);
        let p = Polynomial::var(1, 0).powi(3);
        assert!(matches!(
            sp.add_sos("odd", AffinePolynomial::from_constant(p)),
            Err(SosError::OddDegree { .. })
        ));
    }

    #[test]
    fn cancellation_prunes_sensitivity() {
        let x = Polynomial::var(1, 0);
        let mut a = AffinePolynomial::from_term(0, x.clone());
        a.add_term(0, &x.scale(-1.0)).unwrap();
        assert!(a.is_zero());
    }
}
