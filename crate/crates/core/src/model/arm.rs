//! Planar two-link arm hanging below the body.

use nalgebra::{Matrix3, Matrix6x1, Matrix6x2, Vector2, Vector3};

use super::ModelParams;

/// Unit vector along a link whose absolute angle from `-z_b` is `phi`,
/// rotating about `+y_b`.
fn link_axis(phi: f64) -> Vector3<f64> {
    Vector3::new(-phi.sin(), 0.0, -phi.cos())
}

fn link_axis_prime(phi: f64) -> Vector3<f64> {
    Vector3::new(-phi.cos(), 0.0, phi.sin())
}

/// Rotation about `y` by `phi`; maps link-frame vectors into `B`.
pub(crate) fn rot_y(phi: f64) -> Matrix3<f64> {
    let (s, c) = phi.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Link positions and their shape derivatives at one `eta`.
#[derive(Debug, Clone)]
pub struct ArmKinematics {
    /// absolute link angles `[eta1, eta1 + eta2]`
    pub angles: [f64; 2],
    /// link centers of mass in `B`
    pub com: [Vector3<f64>; 2],
    /// `d com[i] / d eta_k`, indexed `[i][k]`
    pub dcom: [[Vector3<f64>; 2]; 2],
    /// `d^2 com[i] / d eta_k d eta_j`, indexed `[i][k][j]`
    pub ddcom: [[[Vector3<f64>; 2]; 2]; 2],
}

/// Joint-angle sensitivities of the two absolute link angles.
pub(crate) const ANGLE_MAP: [[f64; 2]; 2] = [[1.0, 0.0], [1.0, 1.0]];

impl ArmKinematics {
    pub fn new(eta: &Vector2<f64>, p: &ModelParams) -> Self {
        let phi = [eta[0], eta[0] + eta[1]];
        let mount = Vector3::new(0.0, 0.0, -p.d0);
        let (u1, u2) = (link_axis(phi[0]), link_axis(phi[1]));
        let (du1, du2) = (link_axis_prime(phi[0]), link_axis_prime(phi[1]));
        let com = [
            mount + u1 * (0.5 * p.d1),
            mount + u1 * p.d1 + u2 * (0.5 * p.d2),
        ];
        // s1 depends on eta1 only; s2 on eta1 through both links.
        let dcom = [
            [du1 * (0.5 * p.d1), Vector3::zeros()],
            [du1 * p.d1 + du2 * (0.5 * p.d2), du2 * (0.5 * p.d2)],
        ];
        // u'' = -u
        let s1_11 = -u1 * (0.5 * p.d1);
        let s2_22 = -u2 * (0.5 * p.d2);
        let s2_11 = -u1 * p.d1 + s2_22;
        let ddcom = [
            [[s1_11, Vector3::zeros()], [Vector3::zeros(), Vector3::zeros()]],
            [[s2_11, s2_22], [s2_22, s2_22]],
        ];
        Self {
            angles: phi,
            com,
            dcom,
            ddcom,
        }
    }

    /// Mass-weighted link COM sum `m1 s1 + m2 s2`.
    pub fn first_moment(&self, p: &ModelParams) -> Vector3<f64> {
        self.com[0] * p.m1 + self.com[1] * p.m2
    }
}

/// Stacked `[linear; angular]` Jacobians of the link centers of mass with
/// respect to `eta_dot`, expressed in `B`.
pub fn link_jacobians(eta: &Vector2<f64>, p: &ModelParams) -> (Matrix6x1<f64>, Matrix6x2<f64>) {
    let k = ArmKinematics::new(eta, p);
    let mut j1 = Matrix6x1::zeros();
    j1.fixed_view_mut::<3, 1>(0, 0).copy_from(&k.dcom[0][0]);
    j1[(4, 0)] = 1.0;
    let mut j2 = Matrix6x2::zeros();
    for c in 0..2 {
        j2.fixed_view_mut::<3, 1>(0, c).copy_from(&k.dcom[1][c]);
        j2[(4, c)] = 1.0;
    }
    (j1, j2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_com(link: usize, k: usize, eta: Vector2<f64>, p: &ModelParams) -> Vector3<f64> {
        let h = 1e-6;
        let mut plus = eta;
        let mut minus = eta;
        plus[k] += h;
        minus[k] -= h;
        (ArmKinematics::new(&plus, p).com[link] - ArmKinematics::new(&minus, p).com[link]) / (2.0 * h)
    }

    #[test]
    fn hanging_arm_jacobian() {
        let p = ModelParams::default();
        let (j1, j2) = link_jacobians(&Vector2::zeros(), &p);
        let lin1 = j1.fixed_view::<3, 1>(0, 0).into_owned();
        assert!((lin1.norm() - p.d1 / 2.0).abs() < 1e-14);
        // perpendicular to the link axis, which points along -z
        assert!(lin1.dot(&Vector3::new(0.0, 0.0, -1.0)).abs() < 1e-14);
        let lin2 = j2.fixed_view::<3, 1>(0, 1).into_owned();
        assert!((lin2.norm() - p.d2 / 2.0).abs() < 1e-14);
        assert!((lin1 - fd_com(0, 0, Vector2::zeros(), &p)).norm() < 1e-9);
    }

    #[test]
    fn angular_rows_are_joint_axis() {
        let p = ModelParams::default();
        for eta in [Vector2::new(0.3, -1.2), Vector2::new(2.0, 0.5)] {
            let (j1, j2) = link_jacobians(&eta, &p);
            assert_eq!(j1.fixed_view::<3, 1>(3, 0).into_owned(), Vector3::y());
            assert_eq!(j2.fixed_view::<3, 1>(3, 0).into_owned(), Vector3::y());
            assert_eq!(j2.fixed_view::<3, 1>(3, 1).into_owned(), Vector3::y());
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = ModelParams {
            d0: 0.05,
            ..ModelParams::default()
        };
        let eta = Vector2::new(0.4, -0.7);
        let kin = ArmKinematics::new(&eta, &p);
        for link in 0..2 {
            for k in 0..2 {
                assert!((kin.dcom[link][k] - fd_com(link, k, eta, &p)).norm() < 1e-9);
                for j in 0..2 {
                    let h = 1e-5;
                    let mut plus = eta;
                    let mut minus = eta;
                    plus[j] += h;
                    minus[j] -= h;
                    let fd = (ArmKinematics::new(&plus, &p).dcom[link][k]
                        - ArmKinematics::new(&minus, &p).dcom[link][k])
                        / (2.0 * h);
                    assert!((kin.ddcom[link][k][j] - fd).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn rot_y_carries_link_axis() {
        let phi = 0.9;
        let r = rot_y(phi);
        assert!((r * Vector3::new(0.0, 0.0, -1.0) - link_axis(phi)).norm() < 1e-15);
    }
}
