use crate::polyalg::{MonomialBasis, Polynomial};
use crate::soscomp::AffinePolynomial;

use super::{CostSpec, PiError, Policy, PolySystem, ValueFn};

fn check_dims(sys: &PolySystem, cost: &CostSpec, n: usize) -> Result<(), PiError> {
    if sys.n() != n {
        return Err(PiError::Dimension(format!(
            "value function in {n} variables, system has {}",
            sys.n()
        )));
    }
    if sys.m() != cost.m() {
        return Err(PiError::Dimension(format!(
            "system has {} inputs, R is {}x{}",
            sys.m(),
            cost.m(),
            cost.m()
        )));
    }
    Ok(())
}

/// `L(V, u) = -grad V^T (f + g u) - q - u^T R u` for a polynomial `V`.
pub fn l_operator_poly(
    v: &Polynomial,
    u: &[Polynomial],
    sys: &PolySystem,
    cost: &CostSpec,
) -> Result<Polynomial, PiError> {
    check_dims(sys, cost, v.nvars())?;
    let field = sys.closed_loop(u)?;
    let lie = v.lie_derivative(&field)?;
    Ok(&(&(-&lie) - cost.q()) - &cost.input_quadratic(u))
}

pub fn l_operator(v: &ValueFn, u: &Policy, sys: &PolySystem, cost: &CostSpec) -> Result<Polynomial, PiError> {
    l_operator_poly(&v.polynomial(), &u.polynomials(), sys, cost)
}

/// `L(V, u)` with `V = sum_j y_j basis_j` left symbolic in the decision
/// variables `vars[j]`.
pub fn l_operator_affine(
    basis: &MonomialBasis,
    vars: &[usize],
    u: &[Polynomial],
    sys: &PolySystem,
    cost: &CostSpec,
) -> Result<AffinePolynomial, PiError> {
    check_dims(sys, cost, basis.nvars())?;
    let field = sys.closed_loop(u)?;
    let constant = &(-cost.q()) - &cost.input_quadratic(u);
    let mut out = AffinePolynomial::from_constant(constant);
    for (m, &j) in basis.entries().iter().zip(vars) {
        let mj = Polynomial::monomial(m.clone(), 1.0);
        out.add_term(j, &(-&mj.lie_derivative(&field)?))?;
    }
    Ok(out)
}

/// `g^T grad V`, one polynomial per input.
fn gt_grad(v: &Polynomial, sys: &PolySystem) -> Vec<Polynomial> {
    let grad = v.gradient();
    (0..sys.m())
        .map(|j| {
            let mut acc = Polynomial::zero(sys.n());
            for i in 0..sys.n() {
                acc = &acc + &(&sys.g()[i][j] * &grad[i]);
            }
            acc
        })
        .collect()
}

/// `H(V) = grad V^T f + q - 1/4 grad V^T g R^{-1} g^T grad V`.
pub fn hamiltonian_poly(v: &Polynomial, sys: &PolySystem, cost: &CostSpec) -> Result<Polynomial, PiError> {
    check_dims(sys, cost, v.nvars())?;
    let drift = v.lie_derivative(sys.f())?;
    let w = gt_grad(v, sys);
    let rinv = cost.r_inv();
    let mut quad = Polynomial::zero(sys.n());
    for a in 0..w.len() {
        for b in 0..w.len() {
            if rinv[(a, b)] != 0.0 {
                quad = &quad + &(&w[a] * &w[b]).scale(rinv[(a, b)]);
            }
        }
    }
    Ok(&(&drift + cost.q()) - &quad.scale(0.25))
}

pub fn hamiltonian(v: &ValueFn, sys: &PolySystem, cost: &CostSpec) -> Result<Polynomial, PiError> {
    hamiltonian_poly(&v.polynomial(), sys, cost)
}

/// `-1/2 R^{-1} g^T grad V` as polynomials.
pub fn improved_input(v: &Polynomial, sys: &PolySystem, cost: &CostSpec) -> Result<Vec<Polynomial>, PiError> {
    check_dims(sys, cost, v.nvars())?;
    let w = gt_grad(v, sys);
    let rinv = cost.r_inv();
    Ok((0..w.len())
        .map(|a| {
            let mut acc = Polynomial::zero(sys.n());
            for (b, wb) in w.iter().enumerate() {
                acc = &acc + &wb.scale(-0.5 * rinv[(a, b)]);
            }
            acc
        })
        .collect())
}

/// `u = -1/2 R^{-1} g^T grad V` expressed over `m_{1,d}`.
pub fn policy_improve(v: &ValueFn, sys: &PolySystem, cost: &CostSpec, d: u32) -> Result<Policy, PiError> {
    Policy::from_polynomials(&improved_input(&v.polynomial(), sys, cost)?, d)
}

/// `|a - b|_R^2 = (a - b)^T R (a - b)` as a polynomial.
pub fn input_gap(a: &[Polynomial], b: &[Polynomial], cost: &CostSpec) -> Polynomial {
    let diff: Vec<Polynomial> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    cost.input_quadratic(&diff)
}

/// Smallest `d` with `2d >= max{deg f + 2r - 1, deg g + 2(2r - 1), deg q,
/// 2(2r - 1) + 2 deg g}`.
pub fn degree_bound(sys: &PolySystem, cost: &CostSpec, r: u32) -> u32 {
    let (df, dg) = (sys.deg_f(), sys.deg_g());
    let dq = cost.q().degree().unwrap_or(0);
    let top = (df + 2 * r - 1)
        .max(dg + 2 * (2 * r - 1))
        .max(dq)
        .max(2 * (2 * r - 1) + 2 * dg);
    top.div_ceil(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::parse_polynomial;
    use nalgebra::DMatrix;

    fn poly(s: &str, n: usize) -> Polynomial {
        parse_polynomial(s, n).unwrap()
    }

    fn scalar(f: &str, g: &str, q: &str) -> (PolySystem, CostSpec) {
        (
            PolySystem::new(vec![poly(f, 1)], vec![vec![poly(g, 1)]]).unwrap(),
            CostSpec::new(poly(q, 1), DMatrix::from_element(1, 1, 1.0)).unwrap(),
        )
    }

    #[test]
    fn l_operator_example_a_at_one() {
        let (sys, cost) = scalar("0.01*x^2", "1", "0.01*x^2 + 0.01*x^4");
        let v = poly("10*x^2 + 10*x^4", 1);
        let u = [poly("-0.1*x - 0.1*x^3", 1)];
        let l = l_operator_poly(&v, &u, &sys, &cost).unwrap();
        assert_eq!(l.degree(), Some(6));
        assert!((l.eval(&[1.0]).unwrap() - 11.34).abs() < 1e-12);
    }

    #[test]
    fn l_operator_trivial_cases() {
        let (sys, cost) = scalar("-x", "1", "x^2");
        let l = l_operator_poly(&poly("x^2", 1), &[Polynomial::zero(1)], &sys, &cost).unwrap();
        assert!(l.max_coeff_diff(&poly("x^2", 1)) < 1e-15);
        let l = l_operator_poly(&Polynomial::zero(1), &[Polynomial::zero(1)], &sys, &cost).unwrap();
        assert!(l.max_coeff_diff(&poly("-x^2", 1)) < 1e-15);
    }

    #[test]
    fn hamiltonian_vanishes_on_exact_solutions() {
        let (sys, cost) = scalar("0", "1", "x^2");
        assert!(hamiltonian_poly(&poly("x^2", 1), &sys, &cost).unwrap().is_zero());
        let (sys, cost) = scalar("-x", "1", "x^2");
        let alpha = 2f64.sqrt() - 1.0;
        let h = hamiltonian_poly(&poly("x^2", 1).scale(alpha), &sys, &cost).unwrap();
        assert!(h.max_abs_coeff() < 1e-12);
    }

    #[test]
    fn improvement_examples() {
        let (sys, cost) = scalar("0", "1", "x^2");
        let v = ValueFn::from_polynomial(&poly("x^2", 1), 1).unwrap();
        let u = policy_improve(&v, &sys, &cost, 3).unwrap();
        assert_eq!(u.k, vec![vec![-1.0, 0.0, 0.0]]);

        let sys2 = PolySystem::new(
            vec![Polynomial::zero(2), Polynomial::zero(2)],
            vec![
                vec![poly("1", 2), Polynomial::zero(2)],
                vec![Polynomial::zero(2), poly("1", 2)],
            ],
        )
        .unwrap();
        let cost2 = CostSpec::new(poly("x1^2 + x2^2", 2), DMatrix::identity(2, 2)).unwrap();
        let v2 = ValueFn::from_polynomial(&poly("x1^2 + x2^2", 2), 1).unwrap();
        let u2 = policy_improve(&v2, &sys2, &cost2, 1).unwrap();
        assert_eq!(u2.k, vec![vec![-1.0, 0.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn improvement_from_reported_value() {
        let (sys, cost) = scalar("0.01*x^2", "1", "0.01*x^2 + 0.01*x^4");
        let v = ValueFn::new(1, 2, vec![0.1020, 0.007, 0.0210]).unwrap();
        let u = policy_improve(&v, &sys, &cost, 3).unwrap();
        let want = [-0.1020, -0.0105, -0.0420];
        for (a, b) in u.k[0].iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn improvement_overflow() {
        let (sys, cost) = scalar("0", "x^2", "x^2");
        let v = ValueFn::from_polynomial(&poly("x^4", 1), 2).unwrap();
        assert!(matches!(
            policy_improve(&v, &sys, &cost, 3),
            Err(PiError::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn degree_bounds() {
        let (a, ca) = scalar("0.01*x^2", "1", "0.01*x^2 + 0.01*x^4");
        assert_eq!(degree_bound(&a, &ca, 2), 3);
        let (l, cl) = scalar("-x", "1", "x^2");
        assert_eq!(degree_bound(&l, &cl, 1), 1);
        let b = PolySystem::new(
            vec![poly("-x1^3 - x1*x2^2 + x1*x2", 2), poly("x1 + 2*x2", 2)],
            vec![
                vec![Polynomial::zero(2), poly("0.7", 2)],
                vec![poly("0.6", 2), poly("0.7", 2)],
            ],
        )
        .unwrap();
        let cb = CostSpec::new(poly("x1^2 + x2^2", 2), DMatrix::identity(2, 2)).unwrap();
        assert_eq!(degree_bound(&b, &cb, 2), 3);
    }
}
