mod common;

use common::{fixture, p};
use mpclo::cones::ConeSpec;
use mpclo::model::{assemble, Family, StandardProblem};
use mpclo::solver::{check_feasibility, optimal_face_support, solve, Feasibility, SolverOptions, Status, SupportValue};
use nalgebra::{DMatrix, DVector};

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn pentagon_primal_vertex() {
    let inst = fixture("ex3");
    let prob = assemble(&inst, Family::Primal, &p(&[0.5])).unwrap();
    let r = solve(&prob, &opts()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    let want = [2.5, 0.5, 0.0, 1.5, 0.0];
    for (a, b) in r.x.iter().zip(want) {
        assert!((a - b).abs() < 1e-7, "{:?}", r.x);
    }
    assert!((r.objective + 3.875).abs() < 1e-7);
}

#[test]
fn sqrt_value_curve() {
    let inst = fixture("ex2");
    for u in [0.25, 1.0, 4.0] {
        let prob = assemble(&inst, Family::Primal, &p(&[u])).unwrap();
        let r = solve(&prob, &opts()).unwrap();
        assert_eq!(r.status, Status::Optimal, "u={u}");
        assert!((r.objective - 2.0 * f64::sqrt(u)).abs() < 1e-6, "u={u} obj={}", r.objective);
    }
}

#[test]
fn sqrt_value_unattained_at_zero() {
    let inst = fixture("ex2");
    let prob = assemble(&inst, Family::Primal, &p(&[0.0])).unwrap();
    let r = solve(&prob, &opts()).unwrap();
    assert_ne!(r.status, Status::Optimal);
}

#[test]
fn negative_orthant_is_infeasible() {
    let prob = StandardProblem::plain(
        p(&[1.0]),
        DMatrix::from_element(1, 1, 1.0),
        p(&[-1.0]),
        ConeSpec::orthant(1).unwrap(),
    );
    let r = solve(&prob, &opts()).unwrap();
    assert_eq!(r.status, Status::Infeasible);
    // certificate normalized to bᵀy = 1 with −Aᵀy ∈ K*
    assert!((-1.0 * r.mult[0] - 1.0).abs() < 1e-9);
    assert!(-r.mult[0] >= 0.0);
}

#[test]
fn unbounded_ray() {
    // min -x1 s.t. x1 - x2 = 0
    let prob = StandardProblem::plain(
        p(&[-1.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
        p(&[0.0]),
        ConeSpec::orthant(2).unwrap(),
    );
    let r = solve(&prob, &opts()).unwrap();
    assert_eq!(r.status, Status::Unbounded);
    assert!(r.x[0] > 0.0 && (r.x[0] - r.x[1]).abs() < 1e-6);
}

#[test]
fn feasibility_classes() {
    let k = ConeSpec::orthant(2).unwrap();
    let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let f = check_feasibility(&a, &p(&[2.0]), &k, &opts()).unwrap();
    assert!(matches!(f, Feasibility::Feasible { .. }), "{f:?}");
    assert!((f.margin() - 1.0).abs() < 1e-6);
    let f = check_feasibility(&a, &p(&[0.0]), &k, &opts()).unwrap();
    assert!(matches!(f, Feasibility::Marginal { .. }), "{f:?}");
    let f = check_feasibility(&a, &p(&[-1.0]), &k, &opts()).unwrap();
    match f {
        Feasibility::Infeasible { certificate: Some(y), .. } => {
            assert!(-y[0] > 0.0, "{y}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn face_support_on_a_segment() {
    // min x3 s.t. x1 + x2 = 1: the face is the segment {x3 = 0}
    let prob = StandardProblem::plain(
        p(&[0.0, 0.0, 1.0]),
        DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]),
        p(&[1.0]),
        ConeSpec::orthant(3).unwrap(),
    );
    let o = opts();
    let base = solve(&prob, &o).unwrap();
    assert!(base.is_optimal());
    let s = optimal_face_support(&prob, &base, &p(&[1.0, 0.0, 0.0]), &o).unwrap();
    assert!((s.value.as_f64() - 1.0).abs() < 1e-5, "{s:?}");
    // min 0 over x1 = 1: face unbounded in x2
    let prob = StandardProblem::plain(
        p(&[0.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        p(&[1.0]),
        ConeSpec::orthant(2).unwrap(),
    );
    let base = solve(&prob, &o).unwrap();
    let s = optimal_face_support(&prob, &base, &p(&[0.0, 1.0]), &o).unwrap();
    assert_eq!(s.value, SupportValue::Unbounded);
}

#[test]
fn dual_family_on_pentagon() {
    let inst = fixture("ex3");
    let prob = assemble(&inst, Family::Dual, &p(&[0.0])).unwrap();
    let r = solve(&prob, &opts()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    let kkt = &prob.eq_matrix * &r.x - &prob.eq_rhs;
    assert!(kkt.amax() < 1e-7);
    assert!(r.x.iter().all(|&v| v > -1e-9));
    let _ = DVector::<f64>::zeros(0);
}
