//! Property tests across the modules.  Case counts are kept small: most
//! properties run an interior-point solve per case.

mod common;

use common::{fixture, p};
use mpclo::cones::{cone_membership, project_cone, smat, svec, Block, ConeSpec, Membership};
use mpclo::duality::{duality_identity_residual, value, weak_duality_gaps, ValueVariant};
use mpclo::io::{emit_problem, parse_problem, read_problem};
use mpclo::mappings::{directional_derivative, map_eval, map_membership, DerivativeValue, MapOptions, MapStatus, Side};
use mpclo::model::{assemble, complete_basis, Family, StandardProblem};
use mpclo::partition::{decompose, PartitionOptions, RegionKind, Window};
use mpclo::solver::{optimal_face_support, solve, SolverOptions, Status, SupportValue};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn so() -> SolverOptions {
    SolverOptions::default()
}

fn mo() -> MapOptions {
    MapOptions::default()
}

fn sym(n: usize, vals: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |i, j| vals[(i * n + j) % vals.len()]);
    (&m + m.transpose()) * 0.5
}

fn spec_strategy() -> impl Strategy<Value = ConeSpec> {
    prop::collection::vec(prop_oneof![(1usize..4).prop_map(Block::Orthant), (1usize..4).prop_map(Block::Psd)], 1..3)
        .prop_map(|b| ConeSpec::new(b).unwrap())
}

fn vec_in(spec: &ConeSpec, seed: &[f64]) -> DVector<f64> {
    DVector::from_fn(spec.total_dim(), |i, _| seed[i % seed.len()] * (1.0 + 0.37 * i as f64).sin())
}

/// Random feasible and bounded LP: `b = A·x0`, `c = Aᵀ·y0 + s0` with `x0 > 0`, `s0 ≥ 0`.
fn lp_strategy() -> impl Strategy<Value = StandardProblem> {
    (2usize..7)
        .prop_flat_map(|q| (Just(q), 1..q))
        .prop_flat_map(|(q, m)| {
            (
                prop::collection::vec(-2.0..2.0f64, m * q),
                prop::collection::vec(0.1..2.0f64, q),
                prop::collection::vec(-1.0..1.0f64, m),
                prop::collection::vec(0.0..2.0f64, q),
            )
                .prop_map(move |(a, x0, y0, s0)| {
                    let a = DMatrix::from_row_slice(m, q, &a);
                    let b = &a * DVector::from_vec(x0);
                    let c = a.transpose() * DVector::from_vec(y0) + DVector::from_vec(s0);
                    StandardProblem::plain(c, a, b, ConeSpec::orthant(q).unwrap())
                })
        })
}

// ------------------------------------------------------------------ cones

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn svec_is_an_isometry(n in 1usize..6, xs in prop::collection::vec(-10.0..10.0f64, 36), ys in prop::collection::vec(-10.0..10.0f64, 36)) {
        let x = sym(n, &xs);
        let y = sym(n, &ys);
        let tr = (&x * &y).trace();
        let sx = svec(&x).unwrap();
        prop_assert!((sx.dot(&svec(&y).unwrap()) - tr).abs() <= 1e-12 * (1.0 + tr.abs()) * 10.0);
        let back = smat(sx.as_slice(), n).unwrap();
        prop_assert!((back - x).amax() <= 1e-12);
    }

    #[test]
    fn projection_satisfies_the_variational_inequality(
        spec in spec_strategy(),
        z in prop::collection::vec(-5.0..5.0f64, 1..8),
        k in prop::collection::vec(-5.0..5.0f64, 1..8),
    ) {
        let z = vec_in(&spec, &z);
        let pz = project_cone(&z, &spec).unwrap();
        let kk = project_cone(&vec_in(&spec, &k), &spec).unwrap();
        let vi = (&z - &pz).dot(&(&kk - &pz));
        prop_assert!(vi <= 1e-9 * (1.0 + z.norm_squared()), "{vi}");
    }

    #[test]
    fn interior_points_pair_positively(
        spec in spec_strategy(),
        z in prop::collection::vec(-5.0..5.0f64, 1..8),
        s in prop::collection::vec(-5.0..5.0f64, 1..8),
        tz in 1e-3..1.0f64,
        ts in 1e-3..1.0f64,
    ) {
        let z = project_cone(&vec_in(&spec, &z), &spec).unwrap() + spec.identity() * tz;
        let s = project_cone(&vec_in(&spec, &s), &spec).unwrap() + spec.identity() * ts;
        let interior = |v: &DVector<f64>| matches!(cone_membership(v, &spec, 1e-12).unwrap(), Membership::Interior { .. });
        prop_assert!(interior(&z) && interior(&s));
        prop_assert!(z.dot(&s) > 0.0);
        prop_assert_eq!(spec.dual(), spec.clone());
    }
}

// ------------------------------------------------------------------ model

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parameter_shift_is_orthogonal_to_a_and_b(k in 0usize..4, u in prop::collection::vec(-10.0..10.0f64, 2)) {
        let inst = fixture(["ex1", "ex2", "ex3", "ex4"][k]);
        let u = DVector::from_column_slice(&u[..inst.r()]);
        let shift = inst.m().transpose() * &u;
        let tol = 1e-8 * (1.0 + inst.a().amax().max(inst.m().amax())) * (1.0 + u.amax());
        prop_assert!((inst.a() * &shift).amax() <= tol);
        prop_assert!((inst.b() * &shift).amax() <= tol);
    }

    #[test]
    fn assemble_is_deterministic(k in 0usize..4, fam in 0usize..4, u in prop::collection::vec(-3.0..3.0f64, 2)) {
        let inst = fixture(["ex1", "ex2", "ex3", "ex4"][k]);
        let family = [Family::Primal, Family::Dual, Family::NsDualOfPrimal, Family::NsDualOfDual][fam];
        let u = DVector::from_column_slice(&u[..inst.r()]);
        prop_assert_eq!(assemble(&inst, family, &u).unwrap(), assemble(&inst, family, &u).unwrap());
    }

    #[test]
    fn completed_basis_is_orthonormal(q in 2usize..8, seed in prop::collection::vec(-1.0..1.0f64, 64), ma in 0usize..8, mm in 1usize..8) {
        let raw = DMatrix::from_fn(q, q, |i, j| seed[(i * q + j) % seed.len()] + if i == j { 3.0 } else { 0.0 });
        let qm = raw.qr().q();
        let na = ma.min(q - 1);
        let nm = mm.min(q - na);
        let a = qm.columns(0, na).transpose() * 2.0;
        let m = qm.columns(na, nm).transpose() * 0.5;
        let b = complete_basis(&a, Some(&m)).unwrap();
        prop_assert_eq!(b.nrows(), q - na - nm);
        if b.nrows() > 0 {
            prop_assert!((&b * b.transpose() - DMatrix::identity(b.nrows(), b.nrows())).amax() <= 1e-10);
            prop_assert!((&a * b.transpose()).amax() <= 1e-10);
            prop_assert!((&m * b.transpose()).amax() <= 1e-10);
        }
    }
}

// ------------------------------------------------------------------ solver

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_results_satisfy_kkt(prob in lp_strategy()) {
        let opts = so();
        let r = solve(&prob, &opts).unwrap();
        prop_assert_eq!(r.status, Status::Optimal);
        prop_assert!(r.primal_res <= opts.feas_tol && r.dual_res <= opts.feas_tol, "{r:?}");
        prop_assert!(r.x.dot(&r.s).abs() <= opts.gap_tol * (1.0 + r.objective.abs()) * 10.0, "{r:?}");
        prop_assert!(r.x.min() >= -1e-9 && r.s.min() >= -1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn face_support_grows_with_relaxation(u in -2.5..2.5f64, g in prop::collection::vec(-1.0..1.0f64, 5)) {
        let inst = fixture("ex3");
        let prob = assemble(&inst, Family::Primal, &p(&[u])).unwrap();
        let base = solve(&prob, &so()).unwrap();
        prop_assume!(base.status == Status::Optimal);
        let g = DVector::from_vec(g);
        let mut last = f64::NEG_INFINITY;
        for eps in [1e-8, 1e-6, 1e-4, 1e-2] {
            let opts = SolverOptions { face_eps: eps, ..so() };
            let s = optimal_face_support(&prob, &base, &g, &opts).unwrap();
            let v = match s.value {
                SupportValue::Finite(v) => v,
                SupportValue::Unbounded => f64::INFINITY,
            };
            prop_assert!(v >= last - 1e-7, "eps {eps}: {v} < {last}");
            last = v;
        }
    }
}

// ------------------------------------------------------------------ duality

fn interior_u(name: &str, t: f64, t2: f64) -> DVector<f64> {
    match name {
        "ex2" => p(&[0.05 + 4.95 * t]),
        "ex3" => p(&[-3.0 + 6.0 * t]),
        _ => p(&[-3.0 + 6.0 * t, -3.0 + 6.0 * t2]),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn no_gap_between_the_standard_and_nonstandard_duals(k in 0usize..3, t in 0.0..1.0f64, t2 in 0.0..1.0f64) {
        let name = ["ex2", "ex3", "ex4"][k];
        let inst = fixture(name);
        let u = interior_u(name, t, t2);
        let ps = value(&inst, ValueVariant::PStar, &u, &so()).unwrap().value;
        let db = value(&inst, ValueVariant::DBarStar, &u, &so()).unwrap().value;
        prop_assert!((ps - db).abs() <= 1e-6 * (1.0 + ps.abs()), "{name} {u:?}: {ps} vs {db}");
    }

    #[test]
    fn identity_and_slackness_under_coupling(t in 0.0..1.0f64) {
        let inst = fixture("ex3");
        let u = interior_u("ex3", t, 0.0);
        let s = map_eval(&inst, Side::Dual, &u, &mo()).unwrap();
        let v = s.point.unwrap();
        let r = duality_identity_residual(&inst, &u, &v, &so()).unwrap();
        prop_assert!(r.residual.abs() <= 1e-6 * (1.0 + r.p_star.abs()));
        let w = |variant, at: &DVector<f64>| value(&inst, variant, at, &so()).unwrap().witness.x;
        prop_assert!(w(ValueVariant::PStar, &u).dot(&w(ValueVariant::DStar, &v)).abs() <= 1e-6);
        prop_assert!(w(ValueVariant::PBarStar, &v).dot(&w(ValueVariant::DBarStar, &u)).abs() <= 1e-6);
    }

    #[test]
    fn gaps_vanish_exactly_on_coupled_pairs(t in 0.0..1.0f64, sv in 0.0..1.0f64) {
        let inst = fixture("ex3");
        let u = interior_u("ex3", t, 0.0);
        let v = p(&[-2.4 + 4.3 * sv]);
        let x = value(&inst, ValueVariant::PBarStar, &v, &so()).unwrap().witness.x;
        let y = value(&inst, ValueVariant::DBarStar, &u, &so()).unwrap().witness.x;
        let g = weak_duality_gaps(&inst, &u, &v, &x, &y).unwrap();
        prop_assert!(g.gap >= -1e-6 && g.gap_bar >= -1e-6, "{g:?}");
        prop_assert!((g.gap - g.gap_bar).abs() <= 1e-6, "{g:?}");
        let coupled = map_membership(&inst, Side::Dual, &u, &v, &mo()).unwrap();
        // stay clear of the tolerance band on either side
        prop_assume!(coupled.member || coupled.residual > 1e-4);
        prop_assert_eq!(coupled.member, g.gap <= 1e-6, "{:?} {:?} {:?}", u, v, g);
    }
}

// ------------------------------------------------------------------ mappings

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn maps_invert_each_other(k in 0usize..3, t in 0.0..1.0f64, t2 in 0.0..1.0f64) {
        let name = ["ex2", "ex3", "ex4"][k];
        let inst = fixture(name);
        let u = interior_u(name, t, t2);
        let s = map_eval(&inst, Side::Dual, &u, &mo()).unwrap();
        let v = s.point.unwrap();
        prop_assert!(map_membership(&inst, Side::Primal, &v, &u, &mo()).unwrap().member);
    }

    #[test]
    fn every_primal_parameter_is_covered(k in 0usize..3, t in 0.02..0.98f64, t2 in 0.02..0.98f64) {
        let name = ["ex2", "ex3", "ex4"][k];
        let inst = fixture(name);
        let v = match name {
            "ex2" => p(&[-1.9 + 4.9 * t]),
            "ex3" => p(&[-2.5 + 4.5 * t]),
            _ => p(&[-1.0 + 2.0 * t, -1.0 + 2.0 * t2]),
        };
        let s = map_eval(&inst, Side::Primal, &v, &mo()).unwrap();
        let u = s.point.unwrap();
        prop_assert!(map_membership(&inst, Side::Dual, &u, &v, &mo()).unwrap().member);
    }

    #[test]
    fn set_values_are_convex(pick in 0usize..3, i in 0usize..16, j in 0usize..16) {
        let (name, side, at) = [("ex3", Side::Dual, p(&[0.0])), ("ex3", Side::Primal, p(&[1.0])), ("ex4", Side::Dual, p(&[0.0, 0.0]))][pick].clone();
        let inst = fixture(name);
        let s = map_eval(&inst, side, &at, &mo()).unwrap();
        prop_assert_eq!(s.status, MapStatus::Set);
        let w: Vec<_> = s.support.iter().filter(|pr| pr.value.finite().is_some()).filter_map(|pr| pr.witness.clone()).collect();
        prop_assume!(!w.is_empty());
        let mid = (&w[i % w.len()] + &w[j % w.len()]) * 0.5;
        prop_assert!(map_membership(&inst, side, &at, &mid, &mo()).unwrap().member);
        for pr in &s.support {
            if let SupportValue::Finite(h) = pr.value {
                prop_assert!(pr.direction.dot(s.point.as_ref().unwrap()) <= h + mo().set_tol);
            }
        }
    }

    #[test]
    fn derivative_matches_difference_quotient(u in 0.2..4.0f64, up in any::<bool>()) {
        let inst = fixture("ex2");
        let h = p(&[if up { 1.0 } else { -1.0 }]);
        let d = directional_derivative(&inst, Side::Dual, &p(&[u]), &h, &mo()).unwrap();
        let DerivativeValue::Finite(val) = d.value else { return Err(TestCaseError::fail("infinite")) };
        let fd = d.fd_check.unwrap();
        prop_assert!((val - fd).abs() <= 1e-3 * (1.0 + val.abs()), "{val} vs {fd}");
        // the closed form: p*(u) = 2√u
        prop_assert!((val - h[0] / u.sqrt()).abs() <= 1e-5);
    }

    #[test]
    fn solvable_exactly_on_images(v in -4.0..4.0f64) {
        let inst = fixture("ex3");
        prop_assume!((v + 2.5).abs() > 1e-3 && (v - 2.0).abs() > 1e-3);
        let prob = assemble(&inst, Family::NsDualOfDual, &p(&[v])).unwrap();
        let solvable = solve(&prob, &so()).unwrap().status == Status::Optimal;
        let covered = match map_eval(&inst, Side::Primal, &p(&[v]), &mo()) {
            Ok(s) => {
                let u = s.point.unwrap();
                map_membership(&inst, Side::Dual, &u, &p(&[v]), &mo()).unwrap().member
            }
            Err(_) => false,
        };
        prop_assert_eq!(solvable, covered);
    }
}

// ------------------------------------------------------------------ partition

#[test]
fn decomposition_is_deterministic() {
    let inst = fixture("ex4");
    let w = Window::rect((-2.0, 2.0), (-2.0, 2.0));
    let seq = PartitionOptions { jobs: 1, ..PartitionOptions::default() };
    let par = PartitionOptions { jobs: 0, ..PartitionOptions::default() };
    let a = decompose(&inst, Side::Dual, &w, &[15, 15], &seq).unwrap();
    let b = decompose(&inst, Side::Dual, &w, &[15, 15], &par).unwrap();
    let c = decompose(&inst, Side::Dual, &w, &[15, 15], &par).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(serde_json::to_string(&b).unwrap(), serde_json::to_string(&c).unwrap());
}

#[test]
fn nonlinearity_regions_hold_no_set_values() {
    let opts = PartitionOptions::default();
    let cases = [
        ("ex2", Window::interval(-0.5, 3.0), vec![71]),
        ("ex4", Window::rect((-1.3, 1.3), (-1.3, 1.3)), vec![25, 25]),
    ];
    for (name, w, grid) in cases {
        let inst = fixture(name);
        let side = if name == "ex4" { Side::Primal } else { Side::Dual };
        let dec = decompose(&inst, side, &w, &grid, &opts).unwrap();
        let regions: Vec<_> = dec.regions_of(RegionKind::Nonlinearity).collect();
        assert!(!regions.is_empty(), "{name}");
        for r in regions {
            for &i in &r.samples {
                let s = &dec.samples[i];
                assert_eq!(s.map.as_ref().map(|m| m.status), Some(MapStatus::Point), "{name} sample {:?}", s.point);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn refinement_keeps_the_transitions(n in 21usize..120) {
        let inst = fixture("ex3");
        let w = Window::interval(-3.0, 3.0);
        let opts = PartitionOptions::default();
        let coarse = decompose(&inst, Side::Dual, &w, &[n], &opts).unwrap();
        let fine = decompose(&inst, Side::Dual, &w, &[2 * n - 1], &opts).unwrap();
        // bracketed or hit by a grid sample, every locus is listed once
        let loci = |d: &mpclo::partition::RegionDecomposition| d.transitions.iter().map(|t| t.point[0]).collect::<Vec<_>>();
        let open = |d: &mpclo::partition::RegionDecomposition| {
            d.regions.iter().map(|r| r.kind).filter(|k| *k != RegionKind::TransitionFace(0)).collect::<Vec<_>>()
        };
        prop_assert_eq!(open(&coarse), open(&fine));
        let spacing = 6.0 / (n - 1) as f64;
        let (a, b) = (loci(&coarse), loci(&fine));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= spacing, "{x} vs {y}");
        }
    }
}

// ------------------------------------------------------------------ io

#[test]
fn fixtures_survive_emit_and_parse() {
    for name in ["ex1", "ex2", "ex3", "ex4"] {
        let raw = read_problem(&common::fixture_path(name)).unwrap();
        let again = parse_problem(&emit_problem(&raw)).unwrap();
        assert_eq!(raw, again, "{name}");
        assert_eq!(emit_problem(&raw), emit_problem(&again));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emitted_problems_parse_back(prob in lp_strategy(), dseed in prop::collection::vec(-5.0..5.0f64, 8)) {
        let q = prob.space.total_dim();
        let raw = mpclo::model::RawInstance {
            space: prob.space.clone(),
            a: prob.eq_matrix.clone(),
            b: None,
            m: DMatrix::from_fn(1, q, |_, j| dseed[j % 8]),
            c: prob.objective.clone(),
            d: DVector::from_fn(q, |i, _| dseed[(i + 3) % 8]),
            labels: Default::default(),
        };
        let once = parse_problem(&emit_problem(&raw)).unwrap();
        let twice = parse_problem(&emit_problem(&once)).unwrap();
        prop_assert_eq!(&once, &raw);
        prop_assert_eq!(once, twice);
    }
}
