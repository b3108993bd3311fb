//! Momenta, connection, shape dynamics and the control-affine vector fields.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};

use super::{layout, AmModel, MassBlocks, ReducedState};
use crate::error::{Error, Result};
use crate::liegroup::{advected_gamma, euler_rate_map_inverse};
use crate::vectorfield::{ChartGuard, ControlAffineSystem, Field};

/// Body and shape velocities recovered from a reduced state.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocities {
    pub s_dot: Vector3<f64>,
    pub omega_b: Vector3<f64>,
    pub sigma: DVector<f64>,
    pub eta_dot: Vector2<f64>,
}

impl Velocities {
    /// Stacked `[s_dot, omega_b, sigma, eta_dot]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let r = self.sigma.len();
        let mut v = DVector::zeros(8 + r);
        v.fixed_rows_mut::<3>(0).copy_from(&self.s_dot);
        v.fixed_rows_mut::<3>(3).copy_from(&self.omega_b);
        v.rows_mut(6, r).copy_from(&self.sigma);
        v.fixed_rows_mut::<2>(6 + r).copy_from(&self.eta_dot);
        v
    }
}

/// Terms of the shape equation `M_eta eta_ddot = -f_eta + g_eta Omega_dot + tau`.
#[derive(Debug, Clone)]
pub struct ShapeTerms {
    pub m_eta: Matrix2<f64>,
    pub f_eta: Vector2<f64>,
    pub g_eta: DMatrix<f64>,
}

/// Everything the vector fields need at one state.
struct Evaluation {
    mu_dot: DVector<f64>,
    omega_b: Vector3<f64>,
    shape: ShapeTerms,
    m_eta_inv: Matrix2<f64>,
}

fn to_matrix2(m: &DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

fn to_dvec2(v: &Vector2<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

impl AmModel {
    /// `[p; l] = M_s [s_dot; omega_b] + M_sr sigma + M_sl eta_dot`.
    pub fn momenta_from_velocity(
        &self,
        eta: &Vector2<f64>,
        s_dot: &Vector3<f64>,
        omega_b: &Vector3<f64>,
        omega: &DVector<f64>,
        eta_dot: &Vector2<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let blocks = self.mass_matrix(eta);
        let mut xi = DVector::zeros(6);
        xi.fixed_rows_mut::<3>(0).copy_from(s_dot);
        xi.fixed_rows_mut::<3>(3).copy_from(omega_b);
        let mu = blocks.m_s() * xi
            + blocks.m_sr() * self.spin_stack(omega)
            + blocks.m_sl() * to_dvec2(eta_dot);
        (mu.fixed_rows::<3>(0).into_owned(), mu.fixed_rows::<3>(3).into_owned())
    }

    fn momentum_vector(x: &ReducedState) -> DVector<f64> {
        let mut mu = DVector::zeros(6);
        mu.fixed_rows_mut::<3>(0).copy_from(&x.p);
        mu.fixed_rows_mut::<3>(3).copy_from(&x.l);
        mu
    }

    fn connection_with(&self, x: &ReducedState, blocks: &MassBlocks) -> Result<DVector<f64>> {
        let rhs = Self::momentum_vector(x)
            - blocks.m_sr() * self.spin_stack(&x.omega)
            - blocks.m_sl() * to_dvec2(&x.eta_dot);
        Ok(blocks.m_s_factor()?.solve(&rhs))
    }

    /// Body velocities `(s_dot_b, omega_b)` from momenta.
    pub fn connection(&self, x: &ReducedState) -> Result<(Vector3<f64>, Vector3<f64>)> {
        self.check_state(x)?;
        let xi = self.connection_with(x, &self.mass_matrix(&x.eta))?;
        Ok((xi.fixed_rows::<3>(0).into_owned(), xi.fixed_rows::<3>(3).into_owned()))
    }

    pub fn velocities(&self, x: &ReducedState) -> Result<Velocities> {
        let (s_dot, omega_b) = self.connection(x)?;
        Ok(Velocities {
            s_dot,
            omega_b,
            sigma: self.spin_stack(&x.omega),
            eta_dot: x.eta_dot,
        })
    }

    /// `d/dt [p; l]` from the momentum equations with thrust and gravity.
    fn momentum_rates(&self, x: &ReducedState, xi: &DVector<f64>) -> Result<DVector<f64>> {
        let gamma = advected_gamma(&x.attitude);
        let s_dot = xi.fixed_rows::<3>(0).into_owned();
        let w = xi.fixed_rows::<3>(3).into_owned();
        let grav = self.gravity_wrench(&gamma, &x.eta)?;
        let (thrust, torque) = self.rotor_wrench(&x.omega);
        let p_dot = x.p.cross(&w) + grav.force + Vector3::z() * thrust;
        let l_dot = x.p.cross(&s_dot) + x.l.cross(&w) + grav.torque + torque;
        let mut out = DVector::zeros(6);
        out.fixed_rows_mut::<3>(0).copy_from(&p_dot);
        out.fixed_rows_mut::<3>(3).copy_from(&l_dot);
        Ok(out)
    }

    fn evaluate(&self, x: &ReducedState) -> Result<Evaluation> {
        self.check_state(x)?;
        let blocks = self.mass_matrix(&x.eta);
        let chol = blocks.m_s_factor()?;
        let m_sl = blocks.m_sl();
        let m_sr = blocks.m_sr();
        let sigma = self.spin_stack(&x.omega);
        let eta_dot = to_dvec2(&x.eta_dot);

        let nu = Self::momentum_vector(x) - &m_sr * &sigma;
        let xi = chol.solve(&(&nu - &m_sl * &eta_dot));
        let mu_dot = self.momentum_rates(x, &xi)?;

        // X = M_s^-1 M_sl, Q = X^T, y = M_s^-1 nu
        let big_x = chol.solve(&m_sl);
        let q = big_x.transpose();
        let y = chol.solve(&nu);
        let m_eta = to_matrix2(&(blocks.m_l() - &q * &m_sl));

        let mut v = DVector::zeros(blocks.dim());
        v.rows_mut(0, 6).copy_from(&xi);
        v.rows_mut(6, sigma.len()).copy_from(&sigma);
        v.fixed_rows_mut::<2>(6 + sigma.len()).copy_from(&x.eta_dot);

        let mut f = &q * &mu_dot;
        for k in 0..2 {
            let d_ms = blocks.d_m_s(k);
            let d_msl = blocks.d_m_sl(k);
            let d_m_eta = blocks.d_m_l(k) - d_msl.transpose() * &big_x - big_x.transpose() * &d_msl
                + big_x.transpose() * &d_ms * &big_x;
            let rate = x.eta_dot[k];
            f += (&d_m_eta * &eta_dot + d_msl.transpose() * &y - &q * (&d_ms * &y)) * rate;
            f[k] -= 0.5 * v.dot(&(blocks.d_full(k) * &v));
        }
        let grav = self.gravity_wrench(&advected_gamma(&x.attitude), &x.eta)?;
        let f_eta = Vector2::new(f[0], f[1]) - grav.joints;
        let g_eta = &q * &m_sr * self.spin_stack_jacobian(&x.omega);
        let m_eta_inv = m_eta
            .try_inverse()
            .ok_or(Error::SingularMassBlock("M_eta"))?;
        Ok(Evaluation {
            mu_dot,
            omega_b: xi.fixed_rows::<3>(3).into_owned(),
            shape: ShapeTerms { m_eta, f_eta, g_eta },
            m_eta_inv,
        })
    }

    pub fn shape_terms(&self, x: &ReducedState) -> Result<ShapeTerms> {
        Ok(self.evaluate(x)?.shape)
    }

    fn drift_from(&self, x: &ReducedState, e: &Evaluation) -> Result<DVector<f64>> {
        let rate_inv = euler_rate_map_inverse(&x.attitude, self.gimbal_margin())?;
        let mut out = DVector::zeros(x.dim());
        out.rows_mut(layout::P, 6).copy_from(&e.mu_dot);
        out.fixed_rows_mut::<3>(layout::THETA)
            .copy_from(&(rate_inv * e.omega_b));
        out.fixed_rows_mut::<2>(layout::ETA).copy_from(&x.eta_dot);
        out.fixed_rows_mut::<2>(layout::ETA_DOT)
            .copy_from(&(-(e.m_eta_inv * e.shape.f_eta)));
        Ok(out)
    }

    fn controls_from(&self, x: &ReducedState, e: &Evaluation) -> DMatrix<f64> {
        let r = x.omega.len();
        let mut g = DMatrix::zeros(x.dim(), 2 + r);
        let inv = DMatrix::from_column_slice(2, 2, e.m_eta_inv.as_slice());
        g.view_mut((layout::ETA_DOT, 0), (2, 2)).copy_from(&inv);
        g.view_mut((layout::ETA_DOT, 2), (2, r))
            .copy_from(&(&inv * &e.shape.g_eta));
        for j in 0..r {
            g[(layout::OMEGA + j, 2 + j)] = 1.0;
        }
        g
    }

    /// Drift `f(x)`.
    pub fn drift(&self, x: &ReducedState) -> Result<DVector<f64>> {
        let e = self.evaluate(x)?;
        self.drift_from(x, &e)
    }

    /// Input matrix `G(x)`, columns `[tau_1, tau_2, Omega_dot_1 ..]`.
    pub fn control_fields(&self, x: &ReducedState) -> Result<DMatrix<f64>> {
        let e = self.evaluate(x)?;
        Ok(self.controls_from(x, &e))
    }

    /// `f(x) + G(x) u`.
    pub fn dynamics(&self, x: &ReducedState, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: u.len(),
            });
        }
        let e = self.evaluate(x)?;
        Ok(self.drift_from(x, &e)? + self.controls_from(x, &e) * u)
    }

    /// `f(x) + G(x) u` on the flat state vector.
    pub fn dynamics_vec(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.dynamics(&ReducedState::from_vector(x)?, u)
    }

    /// Kinetic energy `1/2 v^T M v`.
    pub fn kinetic_energy(&self, x: &ReducedState) -> Result<f64> {
        let v = self.velocities(x)?.to_vector();
        Ok(self.mass_matrix(&x.eta).kinetic_energy(&v))
    }

    /// Potential energy with the body origin at inertial height `height`.
    pub fn potential_energy(&self, x: &ReducedState, height: f64) -> f64 {
        let p = self.params();
        p.g * p.total_mass() * height + self.shape_potential(&advected_gamma(&x.attitude), &x.eta)
    }

    /// The reduced equations as a control-affine system with a chart guard
    /// rejecting states near the Euler-angle singularity.
    pub fn as_system(&self) -> Result<ControlAffineSystem> {
        let n = self.state_dim();
        let model = Arc::new(self.clone());
        let drift_model = Arc::clone(&model);
        let drift: Arc<Field> = Arc::new(move |q: &DVector<f64>| {
            drift_model.drift(&ReducedState::from_vector(q)?)
        });
        let controls: Vec<Arc<Field>> = (0..self.input_dim())
            .map(|i| {
                let m = Arc::clone(&model);
                Arc::new(move |q: &DVector<f64>| {
                    let g = m.control_fields(&ReducedState::from_vector(q)?)?;
                    Ok(g.column(i).into_owned())
                }) as Arc<Field>
            })
            .collect();
        let margin = self.gimbal_margin();
        let guard: Arc<ChartGuard> = Arc::new(move |q: &DVector<f64>| {
            q.len() == n && q[layout::THETA + 1].abs() < std::f64::consts::FRAC_PI_2 - margin
        });
        Ok(ControlAffineSystem::new(n, drift, controls)?.with_guard(guard))
    }
}
