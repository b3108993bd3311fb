//! Multirotor with a planar two-link arm.
//!
//! Frames and conventions:
//!
//! * Body frame `B` at the multirotor center, `z_b` up. `2n` rotors sit on a
//!   circle of radius `r_arm` in the `x_b-y_b` plane, rotor `j` at angle
//!   `2 pi j / 2n` starting on `+x_b`, spinning `+,-,+,-,...` about `z_b`.
//! * The arm is mounted `d0` below the body origin. Both joints turn about
//!   `+y_b`, so the arm moves in the `x_b-z_b` plane. `eta = 0` hangs both
//!   links straight down; link centers of mass sit mid-link.
//! * Velocities are stacked `[s_dot_b, omega_b, sigma, eta_dot]` where
//!   `sigma` are the signed rotor spin rates.
//!
//! Reduced state layout (length `13 + 2n`):
//! `[p (3), l (3), phi, theta, psi, eta (2), eta_dot (2), Omega (2n)]`.
//! Inputs (length `2n + 2`): `[tau_1, tau_2, Omega_dot (2n)]`.

mod arm;
mod equilibrium;
mod mass;
mod reduced;
mod wrench;

pub use arm::{link_jacobians, ArmKinematics};
pub use equilibrium::EquilibriumPoint;
pub use mass::MassBlocks;
pub use reduced::{ShapeTerms, Velocities};
pub use wrench::GravityWrench;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{EulerAngles, DEFAULT_GIMBAL_MARGIN};

/// Offsets into the reduced state vector.
pub mod layout {
    pub const P: usize = 0;
    pub const L: usize = 3;
    pub const THETA: usize = 6;
    pub const ETA: usize = 9;
    pub const ETA_DOT: usize = 11;
    pub const OMEGA: usize = 13;
}

/// Physical constants. Field names are the JSON keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// base mass, kg
    pub m_b: f64,
    /// base inertia in the body frame, kg m^2
    #[serde(rename = "I_b")]
    pub i_b: [[f64; 3]; 3],
    /// rotor pairs; the vehicle has `2n` rotors
    pub n: usize,
    /// mass per rotor, kg
    pub m_r: f64,
    /// rotor spin inertia, kg m^2
    #[serde(rename = "J")]
    pub j: f64,
    /// rotor transverse inertia, kg m^2
    pub a: f64,
    /// thrust coefficient, N s^2
    #[serde(rename = "c_T")]
    pub c_t: f64,
    /// drag-torque coefficient, N m s^2
    #[serde(rename = "c_Q")]
    pub c_q: f64,
    /// rotor lever arm, m
    pub r_arm: f64,
    pub m1: f64,
    pub d1: f64,
    #[serde(rename = "I1")]
    pub i1: [[f64; 3]; 3],
    pub m2: f64,
    pub d2: f64,
    #[serde(rename = "I2")]
    pub i2: [[f64; 3]; 3],
    /// gravitational acceleration, m/s^2
    pub g: f64,
    /// arm mount offset below the body origin, m
    #[serde(default)]
    pub d0: f64,
}

/// Solid-rod inertia about the rod's center, axis along `z`.
fn rod_inertia(mass: f64, length: f64, radius: f64) -> [[f64; 3]; 3] {
    let transverse = mass * (3.0 * radius * radius + length * length) / 12.0;
    let axial = 0.5 * mass * radius * radius;
    [[transverse, 0.0, 0.0], [0.0, transverse, 0.0], [0.0, 0.0, axial]]
}

impl Default for ModelParams {
    fn default() -> Self {
        let (m1, d1, m2, d2) = (0.20, 0.20, 0.15, 0.20);
        Self {
            m_b: 1.5,
            i_b: [[0.02, 0.0, 0.0], [0.0, 0.02, 0.0], [0.0, 0.0, 0.04]],
            n: 2,
            m_r: 0.05,
            j: 1e-4,
            a: 5e-5,
            c_t: 1e-5,
            c_q: 1e-6,
            r_arm: 0.25,
            m1,
            d1,
            i1: rod_inertia(m1, d1, 0.01),
            m2,
            d2,
            i2: rod_inertia(m2, d2, 0.01),
            g: 9.81,
            d0: 0.0,
        }
    }
}

fn to_matrix(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

fn check_spd(name: &str, m: &Matrix3<f64>) -> Result<()> {
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    if m.cholesky().is_none() {
        return Err(Error::InvalidParameter(format!("{name} is not positive definite")));
    }
    Ok(())
}

impl ModelParams {
    pub fn from_json(text: &str) -> Result<Self> {
        let p: ModelParams = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("model parameters: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    /// Checks signs and definiteness. Link masses may be zero (no payload
    /// arm), but link inertias must stay positive definite so the shape mass
    /// matrix is invertible.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m_b", self.m_b),
            ("m_r", self.m_r),
            ("J", self.j),
            ("a", self.a),
            ("r_arm", self.r_arm),
            ("d1", self.d1),
            ("d2", self.d2),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("c_T", self.c_t),
            ("c_Q", self.c_q),
            ("g", self.g),
            ("d0", self.d0),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        check_spd("I_b", &self.base_inertia())?;
        check_spd("I1", &to_matrix(&self.i1))?;
        check_spd("I2", &to_matrix(&self.i2))?;
        Ok(())
    }

    pub fn rotor_count(&self) -> usize {
        2 * self.n
    }

    /// `m_t = m_b + m1 + m2 + 2n m_r`.
    pub fn total_mass(&self) -> f64 {
        self.m_b + self.m1 + self.m2 + self.rotor_count() as f64 * self.m_r
    }

    pub fn base_inertia(&self) -> Matrix3<f64> {
        to_matrix(&self.i_b)
    }

    pub fn link_inertia(&self, link: usize) -> Matrix3<f64> {
        match link {
            0 => to_matrix(&self.i1),
            _ => to_matrix(&self.i2),
        }
    }

    pub fn link_mass(&self, link: usize) -> f64 {
        [self.m1, self.m2][link]
    }

    /// Reduced state dimension `13 + 2n`.
    pub fn state_dim(&self) -> usize {
        13 + self.rotor_count()
    }

    /// Input dimension `2n + 2`.
    pub fn input_dim(&self) -> usize {
        2 + self.rotor_count()
    }
}

/// How rotor speeds enter the momenta.
///
/// The rotor kinetic energy `J Omega_j e3 . omega_b` makes the coupling
/// linear in the signed spin rate ([`SpinCoupling::Linear`]). The literal
/// momenta display instead stacks `diag(Omega) Omega`;
/// [`SpinCoupling::LiteralQuadratic`] reproduces that for comparison. Only
/// `Linear` is consistent with the full Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SpinCoupling {
    #[default]
    Linear,
    LiteralQuadratic,
}

/// Components of the reduced state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    /// body translational momentum, kg m/s
    pub p: Vector3<f64>,
    /// body angular momentum, kg m^2/s
    pub l: Vector3<f64>,
    pub attitude: EulerAngles,
    pub eta: Vector2<f64>,
    pub eta_dot: Vector2<f64>,
    /// rotor speed magnitudes, rad/s
    pub omega: DVector<f64>,
}

impl ReducedState {
    pub fn dim(&self) -> usize {
        13 + self.omega.len()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v.fixed_rows_mut::<3>(layout::P).copy_from(&self.p);
        v.fixed_rows_mut::<3>(layout::L).copy_from(&self.l);
        v.fixed_rows_mut::<3>(layout::THETA)
            .copy_from(&self.attitude.to_vector());
        v.fixed_rows_mut::<2>(layout::ETA).copy_from(&self.eta);
        v.fixed_rows_mut::<2>(layout::ETA_DOT).copy_from(&self.eta_dot);
        v.rows_mut(layout::OMEGA, self.omega.len()).copy_from(&self.omega);
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Result<Self> {
        if v.len() < 15 || !(v.len() - 13).is_multiple_of(2) {
            return Err(Error::Dimension {
                expected: 13 + 2 * ((v.len().max(15) - 13) / 2),
                got: v.len(),
            });
        }
        Ok(Self {
            p: v.fixed_rows::<3>(layout::P).into_owned(),
            l: v.fixed_rows::<3>(layout::L).into_owned(),
            attitude: EulerAngles::from_vector(&v.fixed_rows::<3>(layout::THETA).into_owned()),
            eta: v.fixed_rows::<2>(layout::ETA).into_owned(),
            eta_dot: v.fixed_rows::<2>(layout::ETA_DOT).into_owned(),
            omega: v.rows(layout::OMEGA, v.len() - 13).into_owned(),
        })
    }
}

/// A validated model with cached layout quantities.
#[derive(Debug, Clone)]
pub struct AmModel {
    params: ModelParams,
    coupling: SpinCoupling,
    gimbal_margin: f64,
    rotor_positions: Vec<Vector3<f64>>,
    spin_signs: Vec<f64>,
    mixing: DMatrix<f64>,
}

impl AmModel {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let count = params.rotor_count();
        let rotor_positions: Vec<Vector3<f64>> = (0..count)
            .map(|j| {
                let angle = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                Vector3::new(params.r_arm * angle.cos(), params.r_arm * angle.sin(), 0.0)
            })
            .collect();
        let spin_signs: Vec<f64> = (0..count)
            .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let mut mixing = DMatrix::zeros(3, count);
        for j in 0..count {
            // r_j x (c_T e3) plus reaction torque opposing the spin
            let arm_torque = rotor_positions[j].cross(&Vector3::z()) * params.c_t;
            mixing[(0, j)] = arm_torque.x;
            mixing[(1, j)] = arm_torque.y;
            mixing[(2, j)] = -spin_signs[j] * params.c_q;
        }
        // Exact zeros where sin/cos of multiples of pi/2 leave rounding dust.
        mixing.iter_mut().for_each(|w| {
            if w.abs() < 1e-15 * params.c_t * params.r_arm {
                *w = 0.0;
            }
        });
        Ok(Self {
            params,
            coupling: SpinCoupling::Linear,
            gimbal_margin: DEFAULT_GIMBAL_MARGIN,
            rotor_positions,
            spin_signs,
            mixing,
        })
    }

    pub fn with_coupling(mut self, coupling: SpinCoupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_gimbal_margin(mut self, margin: f64) -> Self {
        self.gimbal_margin = margin;
        self
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn coupling(&self) -> SpinCoupling {
        self.coupling
    }

    pub fn gimbal_margin(&self) -> f64 {
        self.gimbal_margin
    }

    pub fn state_dim(&self) -> usize {
        self.params.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn rotor_count(&self) -> usize {
        self.params.rotor_count()
    }

    /// Rotor hub positions in the body frame.
    pub fn rotor_positions(&self) -> &[Vector3<f64>] {
        &self.rotor_positions
    }

    /// `+1` for rotors spinning about `+z_b`, `-1` otherwise.
    pub fn spin_signs(&self) -> &[f64] {
        &self.spin_signs
    }

    /// Maps squared rotor speeds to body roll/pitch/yaw torques.
    pub fn mixing_matrix(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    /// Signed spin rates `sigma` fed into the mass matrix.
    pub fn spin_stack(&self, omega: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(omega.len(), |j, _| match self.coupling {
            SpinCoupling::Linear => self.spin_signs[j] * omega[j],
            SpinCoupling::LiteralQuadratic => self.spin_signs[j] * omega[j] * omega[j],
        })
    }

    /// `d sigma / d Omega` (diagonal).
    pub fn spin_stack_jacobian(&self, omega: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(omega.len(), omega.len(), |i, j| {
            if i != j {
                return 0.0;
            }
            match self.coupling {
                SpinCoupling::Linear => self.spin_signs[j],
                SpinCoupling::LiteralQuadratic => 2.0 * self.spin_signs[j] * omega[j],
            }
        })
    }

    fn check_state(&self, x: &ReducedState) -> Result<()> {
        if x.omega.len() != self.rotor_count() {
            return Err(Error::Dimension {
                expected: self.state_dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }
}
