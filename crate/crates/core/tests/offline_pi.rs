use gadp::gadp_pi::{
    robust_feasible_v0, run_pi, CostSpec, FeasibleObjective, FeasibleOptions, ParamSpec,
    ParametricSystem, PiConfig, Policy, PolySystem, ValueFn,
};
use gadp::polyalg::{parse_polynomial, Expr, Hyperbox};
use gadp::sdp::InteriorPointSolver;
use nalgebra::DMatrix;

fn poly(s: &str, n: usize) -> gadp::Polynomial {
    parse_polynomial(s, n).unwrap()
}

/// Closed-form optimal value of the scalar example, written independently of
/// the library.
fn v_opt(x: f64) -> f64 {
    x.powi(3) / 150.0 + (101.0 * x * x + 100.0).sqrt().powi(3) / 15150.0 - 20.0 / 303.0
}

#[test]
fn scalar_example_converges_to_analytic_value() {
    let sys = PolySystem::new(vec![poly("0.01*x^2", 1)], vec![vec![poly("1", 1)]]).unwrap();
    let cost = CostSpec::new(poly("0.01*x^2 + 0.01*x^4", 1), DMatrix::from_element(1, 1, 1.0)).unwrap();
    let v0 = ValueFn::from_polynomial(&poly("10*x^2 + 10*x^4", 1), 2).unwrap();
    let u1 = Policy::from_polynomials(&[poly("-0.1*x - 0.1*x^3", 1)], 3).unwrap();
    let cfg = PiConfig::new(2, Hyperbox::symmetric(1, 1.0).unwrap());
    let trace = run_pi(&sys, &cost, &v0, &u1, &cfg, &InteriorPointSolver).unwrap();
    assert!(trace.failure.is_none(), "{:?}", trace.failure);
    assert!(trace.converged);
    let mut prev = trace.initial_objective;
    for r in &trace.records {
        assert!(r.objective <= prev + 1e-6 * (1.0 + prev.abs()));
        assert!(r.hamiltonian_max <= 1e-6);
        assert!(r.identity_residual <= 1e-9);
        prev = r.objective;
    }
    let v = trace.final_value();
    let err = (0..=100)
        .map(|i| -1.0 + 0.02 * i as f64)
        .map(|x| (v.eval(&[x]) - v_opt(x)).abs())
        .fold(0.0, f64::max);
    assert!(err <= 0.01, "sup error {err:.3e}");
}

fn fault_tolerant_family() -> ParametricSystem {
    let e = |s: &str| Expr::parse(s, 2).unwrap();
    ParametricSystem::new(
        vec![e("-x1^3 - x1*x2^2 + x1*x2"), e("x1 + 2*x2")],
        vec![vec![e("0"), e("b1")], vec![e("b2"), e("b1")]],
        vec![
            ParamSpec { name: "b1".into(), nominal: 0.7, lo: 0.5, hi: 1.0 },
            ParamSpec { name: "b2".into(), nominal: 0.6, lo: 0.5, hi: 1.0 },
        ],
    )
    .unwrap()
}

#[test]
fn fault_tolerant_example_feasible_and_monotone() {
    let fam = fault_tolerant_family();
    let cost = CostSpec::new(poly("x1^2 + x2^2", 2), DMatrix::identity(2, 2)).unwrap();
    let u1 = Policy::from_polynomials(
        &[poly("10.283*x1 - 13.769*x2", 2), poly("-10.7*x1 - 3.805*x2", 2)],
        3,
    )
    .unwrap();
    for objective in [FeasibleObjective::Slack, FeasibleObjective::Integral(Hyperbox::symmetric(2, 1.0).unwrap())] {
        let opts = FeasibleOptions { objective, ..FeasibleOptions::default() };
        let fo = robust_feasible_v0(&fam, &cost, &u1, 2, &opts, &InteriorPointSolver).unwrap();
        assert_eq!(fo.vertices, 4);
        assert!(fo.affine);
        assert_eq!(fo.certificates.len(), 5);
        for c in &fo.certificates {
            c.verify().unwrap();
        }
    }
    let fo = robust_feasible_v0(&fam, &cost, &u1, 2, &FeasibleOptions::default(), &InteriorPointSolver).unwrap();
    assert!(fo.slack.unwrap() < 1e-6);

    let sys = fam.nominal().unwrap();
    let cfg = PiConfig::new(2, Hyperbox::symmetric(2, 1.0).unwrap());
    let trace = run_pi(&sys, &cost, &fo.value, &u1, &cfg, &InteriorPointSolver).unwrap();
    assert!(trace.failure.is_none(), "{:?}", trace.failure);
    assert!(!trace.records.is_empty());
    let mut prev = trace.initial_objective;
    for r in &trace.records {
        assert!(r.objective <= prev + 1e-6 * (1.0 + prev.abs()), "objective rose at {}", r.iter);
        assert!(r.hamiltonian_max <= 1e-6);
        prev = r.objective;
    }
}

#[test]
fn nonaffine_family_rejected_unless_allowed() {
    let e = |s: &str| Expr::parse(s, 1).unwrap();
    let fam = ParametricSystem::new(
        vec![e("-x/m")],
        vec![vec![e("1")]],
        vec![ParamSpec { name: "m".into(), nominal: 1.0, lo: 1.0, hi: 2.0 }],
    )
    .unwrap();
    let cost = CostSpec::new(poly("x^2", 1), DMatrix::identity(1, 1)).unwrap();
    let u1 = Policy::zero(1, 1, 1).unwrap();
    let strict = FeasibleOptions::default();
    assert!(robust_feasible_v0(&fam, &cost, &u1, 1, &strict, &InteriorPointSolver).is_err());
    let loose = FeasibleOptions { require_affine: false, ..FeasibleOptions::default() };
    let fo = robust_feasible_v0(&fam, &cost, &u1, 1, &loose, &InteriorPointSolver).unwrap();
    assert!(!fo.affine);
    assert_eq!(fo.vertices, 2);
}

#[test]
fn suspension_nominal_feasible() {
    let e = |s: &str| Expr::parse(s, 4).unwrap();
    let fixed = |name: &str, v: f64| ParamSpec { name: name.into(), nominal: v, lo: v, hi: v };
    let fam = ParametricSystem::new(
        vec![
            e("x2"),
            e("-(ks*(x1 - x3) + 0.1*ks*(x1 - x3)^3 + bs*(x2 - x4))/mb"),
            e("x4"),
            e("(ks*(x1 - x3) + 0.1*ks*(x1 - x3)^3 + bs*(x2 - x4) - kt*x3)/mw"),
        ],
        vec![vec![e("0")], vec![e("1/mb")], vec![e("0")], vec![e("-1/mw")]],
        vec![
            fixed("mb", 300.0),
            fixed("mw", 60.0),
            fixed("bs", 1000.0),
            fixed("ks", 16000.0),
            fixed("kt", 190000.0),
        ],
    )
    .unwrap();
    let cost = CostSpec::new(poly("x1^2 + x2^2 + x3^2 + x4^2 ", 4), DMatrix::identity(1, 1)).unwrap();
    let u1 = Policy::zero(4, 1, 3).unwrap();
    let omega = Hyperbox::new(vec![(-0.05, 0.05), (-10.0, 10.0), (-0.05, 0.05), (-10.0, 10.0)]).unwrap();
    let opts = FeasibleOptions {
        objective: FeasibleObjective::Integral(omega),
        require_affine: false,
        ..FeasibleOptions::default()
    };
    let fo = robust_feasible_v0(&fam, &cost, &u1, 2, &opts, &InteriorPointSolver).unwrap();
    assert_eq!(fo.vertices, 1);
    for c in &fo.certificates {
        c.verify().unwrap();
    }
    assert!(fo.value.eval(&[0.01, 0.1, -0.01, 0.2]) > 0.0);
}
