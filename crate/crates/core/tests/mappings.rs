mod common;

use common::{fixture, p};
use mpclo::cones::Membership;
use mpclo::duality::{duality_identity_residual, mpkkt_residuals, value, weak_duality_gaps, ValueVariant};
use mpclo::mappings::{
    directional_derivative, map_eval, map_membership, recession_direction, theta_membership, DerivativeValue,
    MapOptions, MapStatus, Side,
};
use mpclo::solver::SolverOptions;

fn so() -> SolverOptions {
    SolverOptions::default()
}

fn mo() -> MapOptions {
    MapOptions::default()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn sqrt_example_values() {
    let inst = fixture("ex2");
    let v = value(&inst, ValueVariant::PStar, &p(&[1.0]), &so()).unwrap();
    assert!(close(v.value, 2.0, 1e-7), "{}", v.value);
    let v = value(&inst, ValueVariant::DBarStar, &p(&[1.0]), &so()).unwrap();
    assert!(close(v.value, 2.0, 1e-7), "{}", v.value);
}

#[test]
fn pentagon_value_at_zero() {
    let inst = fixture("ex3");
    let v = value(&inst, ValueVariant::PStar, &p(&[0.0]), &so()).unwrap();
    assert!(close(v.value, -3.0, 1e-7));
}

#[test]
fn identity_examples() {
    let ex2 = fixture("ex2");
    let r = duality_identity_residual(&ex2, &p(&[1.0]), &p(&[-1.0]), &so()).unwrap();
    assert!(r.residual.abs() < 1e-6, "{r:?}");
    let r = duality_identity_residual(&ex2, &p(&[1.0]), &p(&[0.0]), &so()).unwrap();
    assert!(close(r.residual, -0.5, 1e-6), "{r:?}");
    let ex3 = fixture("ex3");
    let r = duality_identity_residual(&ex3, &p(&[0.5]), &p(&[-2.0]), &so()).unwrap();
    assert!(r.residual.abs() < 1e-7, "{r:?}");
    assert!(close(r.pairing, -2.875, 1e-12));
}

#[test]
fn weak_gaps_on_sqrt_example() {
    let inst = fixture("ex2");
    let s2 = std::f64::consts::SQRT_2;
    // x*(1) = [[1,1],[1,1]], y*(−1) = [[1,−1],[−1,1]]
    let x = p(&[1.0, s2, 1.0]);
    let y = p(&[1.0, -s2, 1.0]);
    let g = weak_duality_gaps(&inst, &p(&[1.0]), &p(&[-1.0]), &x, &y).unwrap();
    assert!(g.gap.abs() < 1e-12 && g.gap_bar.abs() < 1e-12, "{g:?}");
    let g = weak_duality_gaps(&inst, &p(&[1.0]), &p(&[-1.0]), &x, &p(&[1.0, 0.0, 1.0])).unwrap();
    assert!(close(g.gap, 2.0, 1e-12), "{g:?}");
}

#[test]
fn mpkkt_pentagon() {
    let inst = fixture("ex3");
    let x = p(&[2.5, 0.5, 0.0, 1.5, 0.0]);
    let y = p(&[0.0, 0.0, 0.5, 0.0, 1.0]);
    let r = mpkkt_residuals(&inst, &x, &y, &p(&[0.5]), &p(&[-2.0])).unwrap();
    assert!(r.pass && r.max() <= 1e-12, "{r:?}");
    let mut x2 = x.clone();
    x2[4] += 0.1;
    let r = mpkkt_residuals(&inst, &x2, &y, &p(&[0.5]), &p(&[-2.0])).unwrap();
    assert!(close(r.get("complementarity").unwrap(), 0.1, 1e-12));
}

#[test]
fn theta_examples() {
    let ex1 = fixture("ex1");
    assert!(theta_membership(&ex1, Side::Dual, &p(&[2.0]), &so()).unwrap().is_member());
    let ex2 = fixture("ex2");
    let t = theta_membership(&ex2, Side::Primal, &p(&[0.0]), &so()).unwrap();
    assert!(matches!(t.status, Membership::Interior { .. }), "{t:?}");
    let t = theta_membership(&ex2, Side::Primal, &p(&[-2.0]), &so()).unwrap();
    assert!(matches!(t.status, Membership::Outside { .. }), "{t:?}");
}

#[test]
fn map_examples() {
    let ex2 = fixture("ex2");
    let s = map_eval(&ex2, Side::Dual, &p(&[1.0]), &mo()).unwrap();
    assert_eq!(s.status, MapStatus::Point);
    assert!(close(s.point.unwrap()[0], -1.0, 1e-6));
    let s = map_eval(&ex2, Side::Dual, &p(&[0.0]), &mo()).unwrap();
    assert_eq!(s.status, MapStatus::Undefined);
    let ex3 = fixture("ex3");
    let s = map_eval(&ex3, Side::Dual, &p(&[0.0]), &mo()).unwrap();
    assert_eq!(s.status, MapStatus::Set, "{s:?}");
    assert!(close(s.support[0].value.as_f64(), 1.0, 1e-6), "{s:?}");
    assert!(close(s.support[1].value.as_f64(), 2.0, 1e-6), "{s:?}");
}

#[test]
fn hyperbola_branch_image() {
    let ex4 = fixture("ex4");
    let s = map_eval(&ex4, Side::Primal, &p(&[1.0, 1.0]), &mo()).unwrap();
    assert_eq!(s.status, MapStatus::Set);
    assert!(s.is_unbounded());
    for probe in &s.support {
        let Some(w) = &probe.witness else { continue };
        if probe.value.finite().is_some() {
            assert!(w[0] <= -1.0 + 1e-5 && w[1] <= -1.0 + 1e-5, "{w} {:?} {s:?}", probe.direction);
            assert!(w[0] + w[1] + w[0] * w[1] >= -1e-5, "{w}");
        }
    }
}

#[test]
fn membership_examples() {
    let ex3 = fixture("ex3");
    let m = map_membership(&ex3, Side::Dual, &p(&[0.5]), &p(&[-2.0]), &mo()).unwrap();
    assert!(m.member);
    let m = map_membership(&ex3, Side::Dual, &p(&[0.5]), &p(&[1.0]), &mo()).unwrap();
    assert!(!m.member && close(m.residual, 1.5, 1e-6), "{m:?}");
    let ex4 = fixture("ex4");
    let m = map_membership(&ex4, Side::Primal, &p(&[1.0, 1.0]), &p(&[-2.0, -2.0]), &mo()).unwrap();
    assert!(m.member, "{m:?}");
}

#[test]
fn recession_examples() {
    let ex3 = fixture("ex3");
    assert!(recession_direction(&ex3, Side::Dual, &p(&[1.0]), &so()).unwrap().recedes);
    assert!(!recession_direction(&ex3, Side::Primal, &p(&[1.0]), &so()).unwrap().recedes);
    let ex2 = fixture("ex2");
    assert!(recession_direction(&ex2, Side::Dual, &p(&[1.0]), &so()).unwrap().recedes);
}

#[test]
fn sqrt_derivative() {
    let ex2 = fixture("ex2");
    let d = directional_derivative(&ex2, Side::Dual, &p(&[1.0]), &p(&[1.0]), &mo()).unwrap();
    assert!(close(d.value.as_f64(), 1.0, 1e-6), "{d:?}");
    assert!(close(d.fd_check.unwrap(), 1.0, 1e-3));
}

#[test]
fn elliptope_derivatives() {
    let ex4 = fixture("ex4");
    // true values of the value-function derivatives
    let d = directional_derivative(&ex4, Side::Dual, &p(&[0.0, 0.0]), &p(&[1.0, -1.0]), &mo()).unwrap();
    assert!(close(d.value.as_f64(), -4.0, 1e-5), "{d:?}");
    let d = directional_derivative(&ex4, Side::Primal, &p(&[1.0, 1.0]), &p(&[-1.0, -1.0]), &mo()).unwrap();
    assert!(close(d.value.as_f64(), 8.0, 1e-5), "{d:?}");
    let d = directional_derivative(&ex4, Side::Primal, &p(&[1.0, 1.0]), &p(&[1.0, 0.0]), &mo()).unwrap();
    assert_eq!(d.value, DerivativeValue::NegInfinity, "{d:?}");
}
