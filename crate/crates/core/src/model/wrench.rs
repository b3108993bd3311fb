//! Gravity and rotor wrenches in the body frame.

use nalgebra::{DVector, Vector2, Vector3};
use serde::Serialize;

use super::arm::ArmKinematics;
use super::AmModel;
use crate::error::{Error, Result};

const GAMMA_NORM_TOL: f64 = 1e-6;

/// Generalized gravity forces for gravity direction `gamma = R^T e3`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GravityWrench {
    /// force on the body, N
    pub force: Vector3<f64>,
    /// torque about the body origin, N m
    pub torque: Vector3<f64>,
    /// joint torques, N m
    pub joints: Vector2<f64>,
}

impl AmModel {
    /// Mass-weighted sum of all off-origin body points, `sum m_i s_i`.
    pub fn first_moment(&self, eta: &Vector2<f64>) -> Vector3<f64> {
        let p = self.params();
        let rotors: Vector3<f64> = self.rotor_positions().iter().sum();
        ArmKinematics::new(eta, p).first_moment(p) + rotors * p.m_r
    }

    /// Shape-dependent part of the potential, `g gamma . sum m_i s_i`.
    pub fn shape_potential(&self, gamma: &Vector3<f64>, eta: &Vector2<f64>) -> f64 {
        self.params().g * gamma.dot(&self.first_moment(eta))
    }

    pub fn gravity_wrench(&self, gamma: &Vector3<f64>, eta: &Vector2<f64>) -> Result<GravityWrench> {
        let norm = gamma.norm();
        if (norm - 1.0).abs() > GAMMA_NORM_TOL {
            return Err(Error::NonUnitGamma(norm));
        }
        let p = self.params();
        let kin = ArmKinematics::new(eta, p);
        let moment = self.first_moment(eta);
        let joints = Vector2::from_fn(|k, _| {
            let d = kin.dcom[0][k] * p.m1 + kin.dcom[1][k] * p.m2;
            -p.g * gamma.dot(&d)
        });
        Ok(GravityWrench {
            force: -gamma * (p.g * p.total_mass()),
            torque: -moment.cross(gamma) * p.g,
            joints,
        })
    }

    /// Total thrust `c_T Omega . Omega` along `z_b` and torque `W Omega^2`.
    pub fn rotor_wrench(&self, omega: &DVector<f64>) -> (f64, Vector3<f64>) {
        let squares = omega.map(|w| w * w);
        let thrust = self.params().c_t * squares.sum();
        let t = self.mixing_matrix() * squares;
        (thrust, Vector3::new(t[0], t[1], t[2]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> AmModel {
        AmModel::new(ModelParams::default()).unwrap()
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            if v.norm() > 0.1 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn hanging_arm_has_no_torque() {
        let w = model().gravity_wrench(&Vector3::z(), &Vector2::zeros()).unwrap();
        assert!(w.torque.norm() < 1e-15);
        assert!(w.joints.norm() < 1e-15);
    }

    #[test]
    fn force_is_total_weight() {
        let model = model();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let gamma = random_unit(&mut rng);
            let w = model.gravity_wrench(&gamma, &Vector2::new(0.1, 0.2)).unwrap();
            assert!((w.force + gamma * 9.81 * 2.05).norm() < 1e-12);
        }
        assert!(matches!(
            model.gravity_wrench(&Vector3::new(0.0, 0.0, 1.1), &Vector2::zeros()),
            Err(Error::NonUnitGamma(_))
        ));
    }

    #[test]
    fn joint_torques_are_potential_gradient() {
        let model = model();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let gamma = random_unit(&mut rng);
            let eta = Vector2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let w = model.gravity_wrench(&gamma, &eta).unwrap();
            for k in 0..2 {
                let h = 1e-4;
                let mut plus = eta;
                let mut minus = eta;
                plus[k] += h;
                minus[k] -= h;
                let fd = -(model.shape_potential(&gamma, &plus) - model.shape_potential(&gamma, &minus)) / (2.0 * h);
                assert!((w.joints[k] - fd).abs() < 1e-8, "{} vs {fd}", w.joints[k]);
            }
        }
    }

    #[test]
    fn torque_is_rotational_potential_gradient() {
        // Rotating the body by a small angle a about axis e_i moves gamma by
        // -a e_i x gamma; the torque is minus the resulting potential slope.
        let model = model();
        let gamma = Vector3::new(0.3, -0.2, 0.9).normalize();
        let eta = Vector2::new(0.4, -0.7);
        let w = model.gravity_wrench(&gamma, &eta).unwrap();
        for i in 0..3 {
            let axis = Vector3::ith(i, 1.0);
            let h = 1e-5;
            let rot = |a: f64| crate::liegroup::so3_exp(&(axis * a)).transpose() * gamma;
            let fd = -(model.shape_potential(&rot(h), &eta) - model.shape_potential(&rot(-h), &eta)) / (2.0 * h);
            assert!((w.torque[i] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn rotor_wrench_examples() {
        let model = model();
        let (t, tau) = model.rotor_wrench(&DVector::zeros(4));
        assert_eq!((t, tau), (0.0, Vector3::zeros()));
        let (t, tau) = model.rotor_wrench(&DVector::from_element(4, 600.0));
        assert!((t - 4.0 * 1e-5 * 360000.0).abs() < 1e-12);
        assert!(tau.norm() < 1e-15);
    }
}
