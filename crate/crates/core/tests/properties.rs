use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;

use pvdyn::baseline::{kkt_oracle, soft_joint_space_solve};
use pvdyn::generators::{self, Family};
use pvdyn::linalg::rel_err;
use pvdyn::model::{load_constraints, load_model, save_constraints, save_model};
use pvdyn::solvers::{aba, pv_early_solve, pv_soft_solve, pv_solve};
use pvdyn::spatial::{SpatialForce, SpatialInertia, SpatialMotion, SpatialTransform, Vec6};
use pvdyn::ConstraintSet;

fn vec3() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-2.0..2.0f64).prop_map(Vector3::from)
}

fn vec6() -> impl Strategy<Value = Vec6> {
    prop::array::uniform6(-2.0..2.0f64).prop_map(|a| Vec6::from_column_slice(&a))
}

fn transform() -> impl Strategy<Value = SpatialTransform> {
    (vec3(), vec3()).prop_map(|(rv, r)| SpatialTransform::new(Rotation3::new(rv).into_inner(), r))
}

fn inertia() -> impl Strategy<Value = SpatialInertia> {
    (0.1..5.0f64, vec3(), prop::array::uniform3(0.01..1.0f64), vec3()).prop_map(|(m, c, d, rv)| {
        let r = Rotation3::new(rv).into_inner();
        SpatialInertia::from_com(m, c * 0.3, r * Matrix3::from_diagonal(&Vector3::from(d)) * r.transpose())
    })
}

fn family() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::ALL.to_vec())
}

fn close(a: &Vec6, b: &Vec6, tol: f64) -> bool {
    (a - b).amax() <= tol * (1.0 + b.amax())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn transform_inverse_round_trips(x in transform(), v in vec6()) {
        prop_assert!(close(&x.inv_motion_vec(&x.motion_vec(&v)), &v, 1e-12));
        prop_assert!(close(&x.inverse().motion_vec(&x.motion_vec(&v)), &v, 1e-12));
        prop_assert!(close(&x.inv_force_vec(&x.force_vec(&v)), &v, 1e-12));
    }

    #[test]
    fn composition_matches_matrix_product(a in transform(), b in transform(), v in vec6()) {
        let ab = a.compose(&b);
        prop_assert!((ab.matrix() - a.matrix() * b.matrix()).amax() <= 1e-12 * (1.0 + ab.matrix().amax()));
        prop_assert!(close(&ab.motion_vec(&v), &a.motion_vec(&b.motion_vec(&v)), 1e-12));
    }

    #[test]
    fn force_transform_is_dual(x in transform()) {
        let dual = x.matrix().try_inverse().unwrap().transpose();
        prop_assert!((x.force_matrix() - dual).amax() <= 1e-10 * (1.0 + dual.amax()));
    }

    #[test]
    fn power_is_frame_invariant(x in transform(), v in vec6(), f in vec6()) {
        let before = v.dot(&f);
        let after = x.motion_vec(&v).dot(&x.force_vec(&f));
        prop_assert!((before - after).abs() <= 1e-12 * (1.0 + v.norm() * f.norm()));
    }

    #[test]
    fn cross_products_are_dual(v in vec6(), m in vec6(), f in vec6()) {
        let (vm, fm) = (SpatialMotion::from_vec6(&v), SpatialMotion::from_vec6(&m));
        let ff = SpatialForce::from_vec6(&f);
        let lhs = vm.cross_motion(&fm).dot(&ff);
        let rhs = -fm.dot(&vm.cross_force(&ff));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + v.norm() * m.norm() * f.norm()));
        prop_assert!(vm.cross_motion(&vm).norm() <= 1e-14 * (1.0 + v.norm_squared()));
    }

    #[test]
    fn kinetic_energy_is_frame_invariant(h in inertia(), x in transform(), v in vec6()) {
        let vm = SpatialMotion::from_vec6(&v);
        let moved = x.apply_inertia(&h);
        let e0 = h.kinetic_energy(&vm);
        let e1 = moved.kinetic_energy(&x.apply_motion(&vm));
        prop_assert!(e0 >= 0.0);
        prop_assert!((e0 - e1).abs() <= 1e-11 * (1.0 + e0));
        let mat = h.matrix();
        prop_assert!((mat - mat.transpose()).amax() <= 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hard_solvers_match_the_dense_oracle(seed in any::<u64>(), fam in family()) {
        let inst = generators::random_instance(&mut generators::rng(seed), fam);
        let (qdd, lambda) = kkt_oracle(&inst.model, &inst.state, &inst.constraints).unwrap();
        for sol in [
            pv_solve(&inst.model, &inst.state, &inst.constraints).unwrap(),
            pv_early_solve(&inst.model, &inst.state, &inst.constraints).unwrap(),
        ] {
            prop_assert!(rel_err(sol.qdd.as_slice(), qdd.as_slice()) <= 1e-8);
            prop_assert!(rel_err(sol.lambda.as_slice(), lambda.as_slice()) <= 1e-8);
            prop_assert!(sol.residual <= 1e-8);
        }
    }

    #[test]
    fn unconstrained_solvers_reduce_to_aba(seed in any::<u64>(), fam in family()) {
        let inst = generators::random_instance(&mut generators::rng(seed), fam);
        let none = ConstraintSet::new();
        let reference = aba(&inst.model, &inst.state).unwrap();
        prop_assert_eq!(&pv_solve(&inst.model, &inst.state, &none).unwrap().qdd, &reference);
        let early = pv_early_solve(&inst.model, &inst.state, &none).unwrap().qdd;
        prop_assert!(rel_err(early.as_slice(), reference.as_slice()) <= 1e-12);
    }

    #[test]
    fn soft_solver_matches_dense_and_tightens(seed in any::<u64>()) {
        let inst = generators::soft_test_chain(seed);
        let mut last = f64::INFINITY;
        for w in [1e1, 1e3, 1e5] {
            let cs = inst.constraints.with_penalty(w).unwrap();
            let sol = pv_soft_solve(&inst.model, &inst.state, &cs).unwrap();
            let dense = soft_joint_space_solve(&inst.model, &inst.state, &cs).unwrap();
            prop_assert!(rel_err(sol.qdd.as_slice(), dense.as_slice()) <= 1e-9);
            prop_assert!(sol.residual <= last);
            last = sol.residual;
        }
    }

    #[test]
    fn json_round_trip_is_exact(seed in any::<u64>(), fam in family()) {
        let inst = generators::random_instance(&mut generators::rng(seed), fam);
        let model = load_model(&save_model(&inst.model)).unwrap();
        let cs = load_constraints(&model, &save_constraints(&inst.constraints)).unwrap();
        prop_assert_eq!(save_model(&model), save_model(&inst.model));
        let a = pv_solve(&inst.model, &inst.state, &inst.constraints).unwrap();
        let b = pv_solve(&model, &inst.state, &cs).unwrap();
        prop_assert_eq!(a.qdd, b.qdd);
        prop_assert_eq!(a.lambda, b.lambda);
    }
}
