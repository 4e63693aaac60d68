use super::*;

fn solve(p: &SdpProblem) -> SdpSolution {
    InteriorPointSolver.solve(p, &SolverOptions::default())
}

fn row(block: Option<usize>, entries: Vec<SymEntry>, free: Vec<(usize, f64)>, rhs: f64) -> Constraint {
    Constraint {
        block,
        entries,
        free,
        rhs,
    }
}

#[test]
fn nonnegative_scalar_minimum_is_zero() {
    // min y  s.t.  y - X = 0, X >= 0
    let mut p = SdpProblem::new(vec![1], 1);
    p.objective_free[0] = 1.0;
    p.constraints.push(row(Some(0), vec![SymEntry::new(0, 0, -1.0)], vec![(0, 1.0)], 0.0));
    let s = solve(&p);
    assert_eq!(s.status, SdpStatus::Optimal, "{}", s.message);
    assert!(s.free[0].abs() < 1e-6);
    assert!(s.primal_residual <= 1e-7);
}

#[test]
fn negative_scalar_is_infeasible() {
    let mut p = SdpProblem::new(vec![1], 0);
    p.constraints.push(row(Some(0), vec![SymEntry::new(0, 0, 1.0)], vec![], -1.0));
    let s = solve(&p);
    assert_eq!(s.status, SdpStatus::Infeasible, "{}", s.message);
    // Farkas ray: A^T d <= 0 and rhs^T d = 1.
    assert!(s.dual[0] < 0.0);
}

#[test]
fn contradictory_constant_row_is_infeasible() {
    let mut p = SdpProblem::new(vec![1], 0);
    p.constraints.push(row(Some(0), vec![], vec![], 1.0));
    assert_eq!(solve(&p).status, SdpStatus::Infeasible);
}

#[test]
fn trace_constrained_eigenvalue() {
    // min <C, X> s.t. tr X = 1 has value lambda_min(C) = 1.
    let mut p = SdpProblem::new(vec![2], 0);
    p.objective_blocks = vec![
        (0, SymEntry::new(0, 0, 2.0)),
        (0, SymEntry::new(0, 1, 1.0)),
        (0, SymEntry::new(1, 1, 2.0)),
    ];
    p.constraints.push(row(
        Some(0),
        vec![SymEntry::new(0, 0, 1.0), SymEntry::new(1, 1, 1.0)],
        vec![],
        1.0,
    ));
    let s = solve(&p);
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.primal_objective - 1.0).abs() < 1e-6);
    assert!((s.dual_objective - 1.0).abs() < 1e-6);
    assert!(s.gap < 1e-7);
}

#[test]
fn growing_ray_is_unbounded() {
    // min -X11 s.t. X11 - X22 = 0.
    let mut p = SdpProblem::new(vec![2], 0);
    p.objective_blocks = vec![(0, SymEntry::new(0, 0, -1.0))];
    p.constraints.push(row(
        Some(0),
        vec![SymEntry::new(0, 0, 1.0), SymEntry::new(1, 1, -1.0)],
        vec![],
        0.0,
    ));
    assert_eq!(solve(&p).status, SdpStatus::Unbounded);
}

#[test]
fn costly_unconstrained_free_variable_is_unbounded() {
    let mut p = SdpProblem::new(vec![1], 1);
    p.objective_free[0] = 1.0;
    assert_eq!(solve(&p).status, SdpStatus::Unbounded);
}

#[test]
fn free_only_rows_are_eliminated() {
    // min -y2 s.t. y1 + y2 = 1, y1 - X = 0, X >= 0  ->  y = (0, 1).
    let mut p = SdpProblem::new(vec![1], 2);
    p.objective_free = vec![0.0, -1.0];
    p.constraints.push(row(None, vec![], vec![(0, 1.0), (1, 1.0)], 1.0));
    p.constraints.push(row(Some(0), vec![SymEntry::new(0, 0, -1.0)], vec![(0, 1.0)], 0.0));
    let s = solve(&p);
    assert_eq!(s.status, SdpStatus::Optimal, "{}", s.message);
    assert!(s.free[0].abs() < 1e-6 && (s.free[1] - 1.0).abs() < 1e-6);
    assert!((s.dual_objective + 1.0).abs() < 1e-6);
    assert!(s.dual_residual < 1e-6);
}

#[test]
fn inconsistent_free_rows_are_infeasible() {
    let mut p = SdpProblem::new(vec![1], 1);
    p.constraints.push(row(None, vec![], vec![(0, 1.0)], 1.0));
    p.constraints.push(row(None, vec![], vec![(0, 2.0)], 1.0));
    assert_eq!(solve(&p).status, SdpStatus::Infeasible);
}

#[test]
fn two_blocks_with_shared_free_variables() {
    // min y1 + y2 s.t. y1 - X = 1, y2 - Z = 2.
    let mut p = SdpProblem::new(vec![1, 1], 2);
    p.objective_free = vec![1.0, 1.0];
    p.constraints.push(row(Some(0), vec![SymEntry::new(0, 0, -1.0)], vec![(0, 1.0)], 1.0));
    p.constraints.push(row(Some(1), vec![SymEntry::new(0, 0, -1.0)], vec![(1, 1.0)], 2.0));
    let s = solve(&p);
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.primal_objective - 3.0).abs() < 1e-6);
}
