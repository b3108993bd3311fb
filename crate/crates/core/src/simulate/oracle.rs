//! Euler-Lagrange equations of the unreduced system in inertial coordinates,
//! with every derivative of the Lagrangian taken numerically.
//!
//! Coordinates are `q = [s_eb, phi, theta, psi, eta1, eta2]` plus the rotor
//! angles, whose rates are prescribed by the rotor-speed states. The kinetic
//! energy is summed body by body from closed-form point and frame
//! velocities; it shares no code with the reduced mass matrix.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use serde::Serialize;

use super::{check_dt, InputSchedule};
use crate::error::{Error, Result};
use crate::liegroup::{euler_rate_map, euler_rate_map_inverse, euler_to_rotation, so3_exp, EulerAngles, Rotation};
use crate::model::{AmModel, ArmKinematics, ReducedState, SpinCoupling};

const NQ: usize = 8;

/// Full-coordinate state: configuration, rotor angles and their rates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullState {
    pub s_eb: Vector3<f64>,
    pub attitude: EulerAngles,
    pub eta: Vector2<f64>,
    pub rotor_angles: DVector<f64>,
    pub s_eb_dot: Vector3<f64>,
    pub attitude_rate: Vector3<f64>,
    pub eta_dot: Vector2<f64>,
    /// signed spin rates relative to the body
    pub rotor_rates: DVector<f64>,
}

impl FullState {
    pub fn dim(&self) -> usize {
        2 * (NQ + self.rotor_angles.len())
    }

    fn q(&self) -> DVector<f64> {
        let a = self.attitude.to_vector();
        DVector::from_vec(vec![
            self.s_eb.x, self.s_eb.y, self.s_eb.z, a.x, a.y, a.z, self.eta.x, self.eta.y,
        ])
    }

    fn qd(&self) -> DVector<f64> {
        let (s, a, e) = (self.s_eb_dot, self.attitude_rate, self.eta_dot);
        DVector::from_vec(vec![s.x, s.y, s.z, a.x, a.y, a.z, e.x, e.y])
    }

    /// `[q (8), rotor angles, q_dot (8), rotor rates]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let r = self.rotor_angles.len();
        let mut v = DVector::zeros(self.dim());
        v.rows_mut(0, NQ).copy_from(&self.q());
        v.rows_mut(NQ, r).copy_from(&self.rotor_angles);
        v.rows_mut(NQ + r, NQ).copy_from(&self.qd());
        v.rows_mut(2 * NQ + r, r).copy_from(&self.rotor_rates);
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Result<Self> {
        if v.len() < 2 * NQ || !v.len().is_multiple_of(2) {
            return Err(Error::Dimension {
                expected: 2 * NQ,
                got: v.len(),
            });
        }
        let r = v.len() / 2 - NQ;
        let q = v.rows(0, NQ);
        let qd = v.rows(NQ + r, NQ);
        Ok(Self {
            s_eb: Vector3::new(q[0], q[1], q[2]),
            attitude: EulerAngles::new(q[3], q[4], q[5]),
            eta: Vector2::new(q[6], q[7]),
            rotor_angles: v.rows(NQ, r).into_owned(),
            s_eb_dot: Vector3::new(qd[0], qd[1], qd[2]),
            attitude_rate: Vector3::new(qd[3], qd[4], qd[5]),
            eta_dot: Vector2::new(qd[6], qd[7]),
            rotor_rates: v.rows(2 * NQ + r, r).into_owned(),
        })
    }
}

fn split(q: &DVector<f64>) -> (Vector3<f64>, EulerAngles, Vector2<f64>) {
    (
        Vector3::new(q[0], q[1], q[2]),
        EulerAngles::new(q[3], q[4], q[5]),
        Vector2::new(q[6], q[7]),
    )
}

/// Kinetic and potential energy at `(q, q_dot, sigma)`.
fn energies(model: &AmModel, q: &DVector<f64>, qd: &DVector<f64>, sigma: &DVector<f64>) -> Result<(f64, f64)> {
    let p = model.params();
    let (s, angles, eta) = split(q);
    let rot = euler_to_rotation(&angles);
    let rate = euler_rate_map(&angles, model.gimbal_margin())?;
    let sd = rot.apply_inverse(&Vector3::new(qd[0], qd[1], qd[2]));
    let w = rate * Vector3::new(qd[3], qd[4], qd[5]);
    let eta_dot = Vector2::new(qd[6], qd[7]);

    let mut k = 0.5 * p.m_b * sd.norm_squared() + 0.5 * w.dot(&(p.base_inertia() * w));
    let disc = Matrix3::from_diagonal(&Vector3::new(p.a, p.a, p.j));
    for (j, r) in model.rotor_positions().iter().enumerate() {
        k += 0.5 * p.m_r * (sd + w.cross(r)).norm_squared();
        let spin = w + Vector3::z() * sigma[j];
        k += 0.5 * spin.dot(&(disc * spin));
    }
    let kin = ArmKinematics::new(&eta, p);
    let link_rates = [eta_dot[0], eta_dot[0] + eta_dot[1]];
    let mut moment = model.rotor_positions().iter().sum::<Vector3<f64>>() * p.m_r;
    for i in 0..2 {
        let rel = kin.dcom[i][0] * eta_dot[0] + kin.dcom[i][1] * eta_dot[1];
        k += 0.5 * p.link_mass(i) * (sd + w.cross(&kin.com[i]) + rel).norm_squared();
        let frame = so3_exp(&(Vector3::y() * kin.angles[i]));
        let inertia = frame * p.link_inertia(i) * frame.transpose();
        let wl = w + Vector3::y() * link_rates[i];
        k += 0.5 * wl.dot(&(inertia * wl));
        moment += kin.com[i] * p.link_mass(i);
    }
    // every body point sits at s + R c; weight acts along -e3
    let v = p.g * (p.total_mass() * s.z + (rot.matrix() * moment).z);
    Ok((k, v))
}

fn lagrangian(model: &AmModel, q: &DVector<f64>, qd: &DVector<f64>, sigma: &DVector<f64>) -> Result<f64> {
    let (k, v) = energies(model, q, qd, sigma)?;
    Ok(k - v)
}

/// `dL/dq_dot`. The Lagrangian is quadratic in velocities, so a unit
/// central difference is exact up to rounding.
fn velocity_gradient(model: &AmModel, q: &DVector<f64>, qd: &DVector<f64>, sigma: &DVector<f64>) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(NQ);
    for i in 0..NQ {
        let mut plus = qd.clone();
        let mut minus = qd.clone();
        plus[i] += 1.0;
        minus[i] -= 1.0;
        g[i] = 0.5 * (lagrangian(model, q, &plus, sigma)? - lagrangian(model, q, &minus, sigma)?);
    }
    Ok(g)
}

/// Five-point derivative of `f` at 0.
fn five_point<F>(f: F, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64) -> Result<DVector<f64>>,
{
    let (p1, m1, p2, m2) = (f(h)?, f(-h)?, f(2.0 * h)?, f(-2.0 * h)?);
    Ok(((p1 - m1) * 8.0 - (p2 - m2)) / (12.0 * h))
}

const Q_STEP: f64 = 1e-3;

/// Generalized forces from thrust, rotor torques and joint torques, by the
/// virtual power `F . s_dot_b + tau . omega_b + tau_eta . eta_dot`.
fn generalized_forces(model: &AmModel, q: &DVector<f64>, omega: &DVector<f64>, joint: &Vector2<f64>) -> Result<DVector<f64>> {
    let (_, angles, _) = split(q);
    let rot = euler_to_rotation(&angles);
    let rate = euler_rate_map(&angles, model.gimbal_margin())?;
    let (thrust, torque) = model.rotor_wrench(omega);
    let f = rot.apply(&(Vector3::z() * thrust));
    let t = rate.transpose() * torque;
    Ok(DVector::from_vec(vec![f.x, f.y, f.z, t.x, t.y, t.z, joint.x, joint.y]))
}

/// Time derivative of the full state under inputs `u = [tau_1, tau_2,
/// Omega_dot ..]`.
pub fn full_lagrangian_oracle(model: &AmModel, x: &FullState, u: &DVector<f64>) -> Result<DVector<f64>> {
    let r = model.rotor_count();
    if x.rotor_angles.len() != r || u.len() != model.input_dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            got: u.len(),
        });
    }
    x.attitude.check_gimbal(model.gimbal_margin())?;
    let q = x.q();
    let qd = x.qd();
    let sigma = &x.rotor_rates;
    let signs = DVector::from_column_slice(model.spin_signs());
    let omega = sigma.component_mul(&signs);
    let sigma_dot = u.rows(2, r).component_mul(&signs);

    let grad_v = velocity_gradient(model, &q, &qd, sigma)?;
    let mut mass = DMatrix::zeros(NQ, NQ);
    for j in 0..NQ {
        let mut plus = qd.clone();
        let mut minus = qd.clone();
        plus[j] += 1.0;
        minus[j] -= 1.0;
        let col = (velocity_gradient(model, &q, &plus, sigma)? - velocity_gradient(model, &q, &minus, sigma)?) * 0.5;
        mass.set_column(j, &col);
    }
    let mass = (&mass + mass.transpose()) * 0.5;
    let spin_coupling = velocity_gradient(model, &q, &qd, &(sigma + &sigma_dot))? - &grad_v;

    let mut grad_q = DVector::zeros(NQ);
    for i in 0..NQ {
        let d = five_point(
            |t| {
                let mut qq = q.clone();
                qq[i] += t;
                Ok(DVector::from_element(1, lagrangian(model, &qq, &qd, sigma)?))
            },
            Q_STEP,
        )?;
        grad_q[i] = d[0];
    }
    let speed = qd.amax();
    let mixed = if speed == 0.0 {
        DVector::zeros(NQ)
    } else {
        let t = Q_STEP / speed;
        five_point(|s| velocity_gradient(model, &(&q + &qd * s), &qd, sigma), t)?
    };

    let forces = generalized_forces(model, &q, &omega, &Vector2::new(u[0], u[1]))?;
    let rhs = forces + grad_q - mixed - spin_coupling;
    let qdd = mass
        .cholesky()
        .ok_or(Error::SingularMassBlock("full-coordinate mass matrix"))?
        .solve(&rhs);

    let mut out = DVector::zeros(x.dim());
    out.rows_mut(0, NQ).copy_from(&qd);
    out.rows_mut(NQ, r).copy_from(sigma);
    out.rows_mut(NQ + r, NQ).copy_from(&qdd);
    out.rows_mut(2 * NQ + r, r).copy_from(&sigma_dot);
    Ok(out)
}

/// Total energy `K + V` in full coordinates.
pub fn full_energy(model: &AmModel, x: &FullState) -> Result<f64> {
    let (k, v) = energies(model, &x.q(), &x.qd(), &x.rotor_rates)?;
    Ok(k + v)
}

/// Momenta and shape state of a full state.
pub fn full_to_reduced(model: &AmModel, x: &FullState) -> Result<ReducedState> {
    let rot = euler_to_rotation(&x.attitude);
    let rate = euler_rate_map(&x.attitude, model.gimbal_margin())?;
    let sd = rot.apply_inverse(&x.s_eb_dot);
    let w = rate * x.attitude_rate;
    let signs = DVector::from_column_slice(model.spin_signs());
    let omega = x.rotor_rates.component_mul(&signs);
    let (p, l) = model.momenta_from_velocity(&x.eta, &sd, &w, &omega, &x.eta_dot);
    Ok(ReducedState {
        p,
        l,
        attitude: x.attitude,
        eta: x.eta,
        eta_dot: x.eta_dot,
        omega,
    })
}

/// Full state matching a reduced state at inertial position `s_eb`.
pub fn reduced_to_full(model: &AmModel, x: &ReducedState, s_eb: &Vector3<f64>, rotor_angles: &DVector<f64>) -> Result<FullState> {
    if model.coupling() != SpinCoupling::Linear {
        return Err(Error::InvalidParameter(
            "the full-coordinate oracle needs the linear spin coupling".into(),
        ));
    }
    let (sd, w) = model.connection(x)?;
    let rot = euler_to_rotation(&x.attitude);
    let rate_inv = euler_rate_map_inverse(&x.attitude, model.gimbal_margin())?;
    Ok(FullState {
        s_eb: *s_eb,
        attitude: x.attitude,
        eta: x.eta,
        rotor_angles: rotor_angles.clone(),
        s_eb_dot: rot.apply(&sd),
        attitude_rate: rate_inv * w,
        eta_dot: x.eta_dot,
        rotor_rates: model.spin_stack(&x.omega),
    })
}

#[derive(Debug, Clone)]
pub struct OracleTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<FullState>,
    pub energies: Vec<f64>,
}

impl OracleTrajectory {
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies.first().copied().unwrap_or(0.0);
        let scale = if e0 == 0.0 { 1.0 } else { e0.abs() };
        self.energies
            .iter()
            .map(|e| (e - e0).abs() / scale)
            .fold(0.0, f64::max)
    }
}

/// RK4 on the full-coordinate equations.
pub fn simulate_oracle(
    model: &AmModel,
    x0: &FullState,
    schedule: &InputSchedule,
    dt: f64,
    steps: usize,
) -> Result<OracleTrajectory> {
    check_dt(dt)?;
    schedule.validate(model.input_dim())?;
    let f = |v: &DVector<f64>, u: &DVector<f64>| full_lagrangian_oracle(model, &FullState::from_vector(v)?, u);
    let mut traj = OracleTrajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
        energies: vec![full_energy(model, x0)?],
    };
    let mut x = x0.to_vector();
    for k in 0..steps {
        let t = k as f64 * dt;
        let u = schedule.at(t + 0.5 * dt);
        let k1 = f(&x, &u)?;
        let k2 = f(&(&x + &k1 * (0.5 * dt)), &u)?;
        let k3 = f(&(&x + &k2 * (0.5 * dt)), &u)?;
        let k4 = f(&(&x + &k3 * dt), &u)?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let state = FullState::from_vector(&x)?;
        traj.times.push(t + dt);
        traj.energies.push(full_energy(model, &state)?);
        traj.states.push(state);
    }
    Ok(traj)
}

/// Agreement between the reduced path (with reconstruction) and the oracle.
#[derive(Debug, Clone, Serialize)]
pub struct CrossValidation {
    pub dt: f64,
    pub steps: usize,
    /// RMS over time of `|s_reduced - s_oracle|`, m
    pub rms_position: f64,
    /// RMS over time of the angle between the two attitudes, rad
    pub rms_attitude: f64,
    pub max_position: f64,
    pub max_attitude: f64,
    /// max `|eta_reduced - eta_oracle|_inf`, rad
    pub max_shape: f64,
    /// max `|(s_dot_b, omega_b)_reduced - (s_dot_b, omega_b)_oracle|_inf`
    pub max_velocity: f64,
    /// max `|(p, l)_reduced - momenta(oracle velocities)|_inf`
    pub max_momentum: f64,
}

/// Runs both representations from the same initial condition and compares.
pub fn cross_validate(
    model: &AmModel,
    x0: &DVector<f64>,
    s0: &Vector3<f64>,
    schedule: &InputSchedule,
    dt: f64,
    steps: usize,
) -> Result<CrossValidation> {
    let reduced = super::simulate(model, x0, schedule, dt, steps, s0)?;
    let start = ReducedState::from_vector(x0)?;
    let full0 = reduced_to_full(model, &start, s0, &DVector::zeros(model.rotor_count()))?;
    let oracle = simulate_oracle(model, &full0, schedule, dt, steps)?;

    let (mut sum_pos, mut sum_att) = (0.0, 0.0);
    let mut out = CrossValidation {
        dt,
        steps,
        rms_position: 0.0,
        rms_attitude: 0.0,
        max_position: 0.0,
        max_attitude: 0.0,
        max_shape: 0.0,
        max_velocity: 0.0,
        max_momentum: 0.0,
    };
    for k in 0..=steps {
        let full = &oracle.states[k];
        let red = ReducedState::from_vector(&reduced.states[k])?;
        let pos = (reduced.positions[k] - full.s_eb).norm();
        let r_oracle: Rotation = euler_to_rotation(&full.attitude);
        let att = r_oracle.angle_to(&reduced.rotations[k]);
        sum_pos += pos * pos;
        sum_att += att * att;
        out.max_position = out.max_position.max(pos);
        out.max_attitude = out.max_attitude.max(att);
        out.max_shape = out.max_shape.max((red.eta - full.eta).amax());

        let from_oracle = full_to_reduced(model, full)?;
        let (sd_r, w_r) = model.connection(&red)?;
        let (sd_o, w_o) = model.connection(&from_oracle)?;
        out.max_velocity = out
            .max_velocity
            .max((sd_r - sd_o).amax())
            .max((w_r - w_o).amax());
        out.max_momentum = out
            .max_momentum
            .max((red.p - from_oracle.p).amax())
            .max((red.l - from_oracle.l).amax());
    }
    let n = (steps + 1) as f64;
    out.rms_position = (sum_pos / n).sqrt();
    out.rms_attitude = (sum_att / n).sqrt();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    #[test]
    fn vector_roundtrip() {
        let x = FullState {
            s_eb: Vector3::new(1.0, 2.0, 3.0),
            attitude: EulerAngles::new(0.1, 0.2, 0.3),
            eta: Vector2::new(0.4, 0.5),
            rotor_angles: DVector::from_vec(vec![6.0, 7.0, 8.0, 9.0]),
            s_eb_dot: Vector3::new(10.0, 11.0, 12.0),
            attitude_rate: Vector3::new(13.0, 14.0, 15.0),
            eta_dot: Vector2::new(16.0, 17.0),
            rotor_rates: DVector::from_vec(vec![18.0, 19.0, 20.0, 21.0]),
        };
        assert_eq!(x.dim(), 24);
        assert_eq!(FullState::from_vector(&x.to_vector()).unwrap(), x);
    }

    #[test]
    fn full_reduced_roundtrip() {
        let model = AmModel::new(ModelParams::default()).unwrap();
        let x = ReducedState {
            p: Vector3::new(0.1, -0.2, 0.3),
            l: Vector3::new(0.01, 0.02, -0.03),
            attitude: EulerAngles::new(0.2, -0.3, 1.0),
            eta: Vector2::new(0.4, -0.7),
            eta_dot: Vector2::new(0.3, 0.1),
            omega: DVector::from_vec(vec![600.0, 650.0, 700.0, 620.0]),
        };
        let full = reduced_to_full(&model, &x, &Vector3::zeros(), &DVector::zeros(4)).unwrap();
        let back = full_to_reduced(&model, &full).unwrap();
        assert!((back.to_vector() - x.to_vector()).amax() < 1e-12);
    }

    #[test]
    fn kinetic_energy_matches_mass_matrix() {
        let model = AmModel::new(ModelParams::default()).unwrap();
        let x = ReducedState {
            p: Vector3::new(0.1, -0.2, 0.3),
            l: Vector3::new(0.01, 0.02, -0.03),
            attitude: EulerAngles::new(0.2, -0.3, 1.0),
            eta: Vector2::new(0.4, -0.7),
            eta_dot: Vector2::new(0.3, 0.1),
            omega: DVector::from_vec(vec![60.0, 65.0, 70.0, 62.0]),
        };
        let full = reduced_to_full(&model, &x, &Vector3::new(0.0, 0.0, 2.0), &DVector::zeros(4)).unwrap();
        let e_full = full_energy(&model, &full).unwrap();
        let e_red = model.kinetic_energy(&x).unwrap() + model.potential_energy(&x, 2.0);
        assert!((e_full - e_red).abs() < 1e-10 * e_full.abs());
    }

    #[test]
    fn point_mass_free_fall() {
        let p = ModelParams {
            m1: 0.0,
            m2: 0.0,
            m_r: 1e-9,
            ..ModelParams::default()
        };
        let model = AmModel::new(p).unwrap();
        let x = FullState {
            s_eb: Vector3::zeros(),
            attitude: EulerAngles::new(0.1, 0.2, 0.3),
            eta: Vector2::new(0.3, 0.2),
            rotor_angles: DVector::zeros(4),
            s_eb_dot: Vector3::new(0.5, 0.0, 1.0),
            attitude_rate: Vector3::zeros(),
            eta_dot: Vector2::zeros(),
            rotor_rates: DVector::zeros(4),
        };
        let d = full_lagrangian_oracle(&model, &x, &DVector::zeros(6)).unwrap();
        let acc = d.rows(NQ + 4, 3).into_owned();
        assert!((&acc - DVector::from_vec(vec![0.0, 0.0, -9.81])).amax() < 1e-6, "{acc}");
    }

    #[test]
    fn hover_has_no_acceleration() {
        let model = AmModel::new(ModelParams::default()).unwrap();
        let eq = model.find_equilibrium(&Vector2::new(0.4, -0.7), 0.5, None).unwrap();
        let full = reduced_to_full(&model, &eq.q_star, &Vector3::zeros(), &DVector::zeros(4)).unwrap();
        let d = full_lagrangian_oracle(&model, &full, &eq.u_star).unwrap();
        let acc = d.rows(NQ + 4, NQ).into_owned();
        assert!(acc.amax() < 1e-7, "{acc}");
    }
}
