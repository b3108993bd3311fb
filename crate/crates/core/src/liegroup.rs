//! Rotation-group utilities.
//!
//! Attitude uses Z-Y-X Euler angles, `R_eb = Rz(psi) Ry(theta) Rx(phi)`,
//! mapping body coordinates to inertial ones. Body angular velocity is
//! `omega_b = vee(R^T dR/dt)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default distance (rad) from `theta = ±pi/2` inside which the Euler rate
/// map refuses to evaluate.
pub const DEFAULT_GIMBAL_MARGIN: f64 = 1e-3;

/// Threshold on `|omega dt|` below which the exponential map switches to its
/// Taylor series.
const EXP_SERIES_THRESHOLD: f64 = 1e-6;

/// Roll, pitch and yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerAngles {
    pub fn new(phi: f64, theta: f64, psi: f64) -> Self {
        Self { phi, theta, psi }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.phi, self.theta, self.psi)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    /// Fails with [`Error::GimbalSingularity`] when pitch is within `margin`
    /// of ±pi/2.
    pub fn check_gimbal(&self, margin: f64) -> Result<()> {
        if self.theta.abs() < std::f64::consts::FRAC_PI_2 - margin {
            Ok(())
        } else {
            Err(Error::GimbalSingularity {
                theta: self.theta,
                margin,
            })
        }
    }
}

/// An element of SO(3), stored as its 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    /// `max |R^T R - I|` entrywise.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).amax()
    }

    /// Geodesic distance in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        so3_log(&(self.0.transpose() * other.0)).norm()
    }

    /// Applies the rotation to a vector.
    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Applies the inverse rotation to a vector.
    pub fn apply_inverse(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.tr_mul(v)
    }
}

/// Skew-symmetric matrix with `hat(v) w = v x w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`].
pub fn vee(s: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let asym = (s + s.transpose()).norm();
    if asym >= 1e-9 {
        return Err(Error::NonSkewInput(asym));
    }
    Ok(Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

pub fn euler_to_rotation(angles: &EulerAngles) -> Rotation {
    let (sf, cf) = angles.phi.sin_cos();
    let (st, ct) = angles.theta.sin_cos();
    let (sp, cp) = angles.psi.sin_cos();
    Rotation(Matrix3::new(
        cp * ct,
        cp * st * sf - sp * cf,
        cp * st * cf + sp * sf,
        sp * ct,
        sp * st * sf + cp * cf,
        sp * st * cf - cp * sf,
        -st,
        ct * sf,
        ct * cf,
    ))
}

/// `T(angles)` with `omega_b = T * d(angles)/dt`.
pub fn euler_rate_map(angles: &EulerAngles, margin: f64) -> Result<Matrix3<f64>> {
    angles.check_gimbal(margin)?;
    let (sf, cf) = angles.phi.sin_cos();
    let (st, ct) = angles.theta.sin_cos();
    Ok(Matrix3::new(
        1.0,
        0.0,
        -st,
        0.0,
        cf,
        sf * ct,
        0.0,
        -sf,
        cf * ct,
    ))
}

/// Closed-form `T(angles)^-1`, mapping body rates to Euler-angle rates.
pub fn euler_rate_map_inverse(angles: &EulerAngles, margin: f64) -> Result<Matrix3<f64>> {
    angles.check_gimbal(margin)?;
    let (sf, cf) = angles.phi.sin_cos();
    let (st, ct) = angles.theta.sin_cos();
    let tt = st / ct;
    Ok(Matrix3::new(
        1.0,
        sf * tt,
        cf * tt,
        0.0,
        cf,
        -sf,
        0.0,
        sf / ct,
        cf / ct,
    ))
}

/// Gravity direction seen from the body, `R_eb^T e3`.
pub fn advected_gamma(angles: &EulerAngles) -> Vector3<f64> {
    euler_to_rotation(angles).apply_inverse(&Vector3::z())
}

/// Exponential map so(3) -> SO(3) (Rodrigues).
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let (a, b) = if theta < EXP_SERIES_THRESHOLD {
        // sin(t)/t and (1 - cos t)/t^2 to fourth order.
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Logarithm SO(3) -> so(3) as a rotation vector, valid for angles below pi.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos.acos();
    let axis = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if theta < 1e-6 {
        return axis * 0.5;
    }
    axis * (theta / (2.0 * theta.sin()))
}

/// One step of `dR/dt = R hat(omega_b)` with constant body rate:
/// `R exp(hat(omega_b) dt)`.
pub fn rotation_exp_step(r: &Rotation, omega_b: &Vector3<f64>, dt: f64) -> Rotation {
    Rotation(r.0 * so3_exp(&(omega_b * dt)))
}
