use amctl::liegroup::{euler_to_rotation, so3_exp, so3_log};
use amctl::*;
use nalgebra::{DVector, Vector2, Vector3};
use proptest::prelude::*;

fn model() -> AmModel {
    AmModel::new(ModelParams::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mass_matrix_is_spd(e1 in -3.1..3.1f64, e2 in -3.1..3.1f64) {
        let blocks = model().mass_matrix(&Vector2::new(e1, e2));
        let m = blocks.full();
        prop_assert!((m - m.transpose()).amax() < 1e-12);
        prop_assert!(m.clone().cholesky().is_some());
    }

    #[test]
    fn momenta_and_velocities_roundtrip(
        e1 in -3.0..3.0f64, e2 in -3.0..3.0f64,
        p in prop::array::uniform3(-1.0..1.0f64),
        l in prop::array::uniform3(-0.1..0.1f64),
        w in prop::array::uniform4(0.0..800.0f64),
    ) {
        let m = model();
        let x = ReducedState {
            p: Vector3::from(p),
            l: Vector3::from(l),
            attitude: EulerAngles::new(0.1, 0.2, 0.3),
            eta: Vector2::new(e1, e2),
            eta_dot: Vector2::new(0.5, -0.3),
            omega: DVector::from_row_slice(&w),
        };
        let v = m.velocities(&x).unwrap();
        let (p2, l2) = m.momenta_from_velocity(&x.eta, &v.s_dot, &v.omega_b, &x.omega, &v.eta_dot);
        prop_assert!((p2 - x.p).amax() < 1e-10);
        prop_assert!((l2 - x.l).amax() < 1e-10);
    }

    #[test]
    fn exp_log_roundtrip(w in prop::array::uniform3(-1.5..1.5f64)) {
        let w = Vector3::from(w);
        let r = so3_exp(&w);
        prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).amax() < 1e-14);
        prop_assert!((so3_log(&r) - w).amax() < 1e-10);
    }

    #[test]
    fn gamma_matches_rotation(phi in -1.0..1.0f64, theta in -1.4..1.4f64, psi in -3.0..3.0f64) {
        let a = EulerAngles::new(phi, theta, psi);
        let g = liegroup::advected_gamma(&a);
        let r = euler_to_rotation(&a);
        prop_assert!((g - r.matrix().transpose() * Vector3::z()).amax() < 1e-14);
    }

    #[test]
    fn bracket_text_roundtrips(m in 1usize..5, k in 1usize..4) {
        for b in enumerate_brackets(m, k).unwrap() {
            let back = FormalBracket::parse(&b.to_string(), m).unwrap();
            prop_assert_eq!(&back, &b);
            let bad = b.counts()[0] % 2 == 1 && b.counts()[1..].iter().all(|c| c % 2 == 0);
            prop_assert_eq!(b.class() == BracketClass::Bad, bad);
        }
    }

    #[test]
    fn equilibrium_residual_small(e1 in -1.2..1.2f64, e2 in -1.2..1.2f64, psi in -3.0..3.0f64) {
        let m = model();
        let eq = m.find_equilibrium(&Vector2::new(e1, e2), psi, None).unwrap();
        prop_assert!(eq.residual < 1e-8);
        prop_assert!(eq.omega_star().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn json_floats_roundtrip(v in prop::collection::vec(prop::num::f64::NORMAL, 1..20)) {
        let text = json::to_string(&v).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, v);
    }
}
