use super::*;
use crate::polyalg::{parse_polynomial, Polynomial};
use crate::sdp::InteriorPointSolver;

fn solve(sp: &SosProgram) -> SosSolution {
    sp.solve(&InteriorPointSolver, &SolverOptions::default()).unwrap()
}

fn feasibility(src: &str, n: usize) -> SosSolution {
    let mut sp = SosProgram::new(n);
    let p = parse_polynomial(src, n).unwrap();
    sp.add_sos("p", AffinePolynomial::from_constant(p)).unwrap();
    solve(&sp)
}

fn basis_names(dmin: u32, dmax: u32, n: usize) -> Vec<String> {
    gram_basis_for(dmin, dmax, n)
        .unwrap()
        .entries()
        .iter()
        .map(|m| m.to_string())
        .collect()
}

#[test]
fn gram_basis_examples() {
    assert_eq!(basis_names(2, 6, 1), ["x1", "x1^2", "x1^3"]);
    assert_eq!(basis_names(2, 4, 2), ["x1", "x2", "x1^2", "x1*x2", "x2^2"]);
    assert_eq!(gram_basis_for(2, 6, 4).unwrap().len(), 34);
    assert!(matches!(gram_basis_for(2, 5, 1), Err(SosError::OddDegree { .. })));
    assert_eq!(basis_names(0, 2, 1), ["1", "x1"]);
}

#[test]
fn square_is_certified() {
    let s = feasibility("x^2", 1);
    assert!(s.is_optimal());
    let c = &s.certificates[0];
    assert_eq!(c.gram.shape(), (1, 1));
    assert!((c.gram[(0, 0)] - 1.0).abs() < 1e-9);
}

#[test]
fn negative_leading_coefficient_is_infeasible() {
    assert_eq!(feasibility("x^2 - 2*x^4", 1).status, SdpStatus::Infeasible);
}

#[test]
fn motzkin_is_not_sos() {
    let s = feasibility("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", 2);
    assert_eq!(s.status, SdpStatus::Infeasible, "{}", s.sdp.message);
}

#[test]
fn diagonal_certificate_reconstructs() {
    let s = feasibility("x^2 + 2*x^4", 1);
    let c = &s.certificates[0];
    assert!(c.residual < 1e-8);
    assert!(c.raw_residual < 1e-6);
    assert!(c.min_eigenvalue >= -1e-7);
    assert!(c.gram[(0, 0)] > 0.0 && c.gram[(1, 1)] > 0.0);
}

#[test]
fn rank_one_square() {
    let s = feasibility("(x1 + x2)^2", 2);
    let c = &s.certificates[0];
    assert!(c.min_eigenvalue.abs() < 1e-6);
    assert!(c.reconstruct().max_coeff_diff(&c.target) < 1e-8);
}

#[test]
fn zero_polynomial_has_empty_certificate() {
    let mut sp = SosProgram::new(1);
    sp.add_sos("zero", AffinePolynomial::zero(1)).unwrap();
    let s = solve(&sp);
    assert!(s.is_optimal());
    assert_eq!(s.certificates[0].gram.len(), 0);
    assert!(s.certificates[0].reconstruct().is_zero());
}

/// min -g s.t. x^4 - 2x^2 + 2 - g is SOS; the global minimum is 1.
fn lower_bound_program() -> (SosProgram, usize) {
    let mut sp = SosProgram::new(1);
    let g = sp.add_variable("g").unwrap();
    sp.set_objective(g, -1.0).unwrap();
    let mut p = AffinePolynomial::from_constant(parse_polynomial("x^4 - 2*x^2 + 2", 1).unwrap());
    p.add_term(g, &Polynomial::constant(1, -1.0)).unwrap();
    sp.add_sos("shifted", p).unwrap();
    (sp, g)
}

#[test]
fn polynomial_lower_bound() {
    let (sp, g) = lower_bound_program();
    let s = solve(&sp);
    assert!(s.is_optimal(), "{}", s.sdp.message);
    assert!((s.values[g] - 1.0).abs() < 1e-6);
}

#[test]
fn extra_sos_constraint_never_lowers_minimum() {
    let (mut sp, g) = lower_bound_program();
    let base = solve(&sp).objective;
    // (0.5 - g) + x^2 SOS forces g <= 0.5.
    let mut p = AffinePolynomial::from_constant(parse_polynomial("0.5 + x^2", 1).unwrap());
    p.add_term(g, &Polynomial::constant(1, -1.0)).unwrap();
    sp.add_sos("cap", p).unwrap();
    let tighter = solve(&sp);
    assert!(tighter.objective >= base - 1e-7);
    assert!((tighter.values[g] - 0.5).abs() < 1e-6);
}

#[test]
fn bounded_variable() {
    let mut sp = SosProgram::new(1);
    let t = sp.add_variable("t").unwrap();
    sp.set_objective(t, 1.0).unwrap();
    sp.set_bounds(t, -3.0, 4.0).unwrap();
    let s = solve(&sp);
    assert!((s.values[t] + 3.0).abs() < 1e-6);
}

#[test]
fn compile_is_deterministic() {
    let (sp, _) = lower_bound_program();
    let a = compile(&sp, &CompileOptions::default()).unwrap().sdp.to_text();
    let b = compile(&sp.clone(), &CompileOptions::default()).unwrap().sdp.to_text();
    assert_eq!(a, b);
}
