//! Fixed-step simulation of the reduced equations, reconstruction of the
//! spatial pose, and a brute-force Lagrangian oracle in full coordinates.

mod oracle;

pub use oracle::{
    cross_validate, full_energy, full_lagrangian_oracle, full_to_reduced, reduced_to_full, simulate_oracle,
    CrossValidation, FullState, OracleTrajectory,
};

use std::io::{self, Write};

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{euler_to_rotation, so3_exp, Rotation};
use crate::model::{AmModel, ReducedState};

/// Piecewise-constant input: `values[i]` holds on `[times[i], times[i+1])`,
/// the last value forever after. Before `times[0]` the first value holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSchedule {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl InputSchedule {
    pub fn constant(u: &DVector<f64>) -> Self {
        Self {
            times: vec![0.0],
            values: vec![u.iter().copied().collect()],
        }
    }

    /// `base` everywhere except `base + delta` on `[start, end)`.
    pub fn pulse(base: &DVector<f64>, delta: &DVector<f64>, start: f64, end: f64) -> Self {
        let b: Vec<f64> = base.iter().copied().collect();
        let on: Vec<f64> = (base + delta).iter().copied().collect();
        if start <= 0.0 {
            return Self {
                times: vec![start, end],
                values: vec![on, b],
            };
        }
        Self {
            times: vec![0.0, start, end],
            values: vec![b.clone(), on, b],
        }
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.values.len() {
            return Err(Error::InvalidParameter(
                "input schedule needs one value per breakpoint".into(),
            ));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "input schedule times must increase".into(),
            ));
        }
        if let Some(v) = self.values.iter().find(|v| v.len() != input_dim) {
            return Err(Error::Dimension {
                expected: input_dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        DVector::from_column_slice(&self.values[i])
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")))
    }
}

/// The four RK4 stage states and slopes for one step.
struct Stages {
    points: [DVector<f64>; 4],
    slopes: [DVector<f64>; 4],
}

fn rk4_stages(model: &AmModel, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> Result<Stages> {
    let k1 = model.dynamics_vec(x, u)?;
    let x2 = x + &k1 * (0.5 * dt);
    let k2 = model.dynamics_vec(&x2, u)?;
    let x3 = x + &k2 * (0.5 * dt);
    let k3 = model.dynamics_vec(&x3, u)?;
    let x4 = x + &k3 * dt;
    let k4 = model.dynamics_vec(&x4, u)?;
    Ok(Stages {
        points: [x.clone(), x2, x3, x4],
        slopes: [k1, k2, k3, k4],
    })
}

fn chart_error(t: f64, e: Error) -> Error {
    match e {
        Error::GimbalSingularity { .. } | Error::ChartViolation(_) => {
            Error::ChartViolation(format!("t = {t}: {e}"))
        }
        other => other,
    }
}

/// One classical RK4 step of `x' = f(x) + G(x) u`.
pub fn step_reduced(model: &AmModel, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
    check_dt(dt)?;
    let s = rk4_stages(model, x, u, dt)?;
    let [k1, k2, k3, k4] = &s.slopes;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Integrates `steps` steps; returns `steps + 1` states and the `steps`
/// inputs applied.
pub fn simulate_reduced(
    model: &AmModel,
    x0: &DVector<f64>,
    schedule: &InputSchedule,
    dt: f64,
    steps: usize,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    check_dt(dt)?;
    schedule.validate(model.input_dim())?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    states.push(x0.clone());
    for k in 0..steps {
        let t = k as f64 * dt;
        let u = schedule.at(t + 0.5 * dt);
        let next = step_reduced(model, &states[k], &u, dt).map_err(|e| chart_error(t, e))?;
        states.push(next);
        inputs.push(u);
    }
    Ok((states, inputs))
}

/// A reduced trajectory with its reconstructed pose.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub rotations: Vec<Rotation>,
    pub positions: Vec<Vector3<f64>>,
    /// gravity direction integrated by advection alongside the pose
    pub gammas: Vec<Vector3<f64>>,
    /// body-frame position `R^T s_eb`, advected
    pub zetas: Vec<Vector3<f64>>,
    pub energies: Vec<f64>,
    pub jacobi: Vec<f64>,
}

/// `dexp^-1` for `R = R_k exp(theta^)`, truncated after the `theta^2` term.
fn dexpinv(theta: &Vector3<f64>, w: &Vector3<f64>) -> Vector3<f64> {
    let c = theta.cross(w);
    w + c * 0.5 + theta.cross(&c) / 12.0
}

fn body_velocities(model: &AmModel, x: &DVector<f64>) -> Result<(Vector3<f64>, Vector3<f64>)> {
    model.connection(&ReducedState::from_vector(x)?)
}

/// Total energy of the reduced state with the body at inertial height `z`.
pub fn energy(model: &AmModel, x: &DVector<f64>, z: f64) -> Result<f64> {
    let s = ReducedState::from_vector(x)?;
    Ok(model.kinetic_energy(&s)? + model.potential_energy(&s, z))
}

/// Energy minus the work done by the rotor motors holding `Omega` fixed:
/// `E - nu^T M_sr sigma - sigma^T M_r sigma`. With `Omega` constant this is
/// the conserved Jacobi integral; `E` itself is only conserved at `Omega = 0`.
pub fn jacobi_integral(model: &AmModel, x: &DVector<f64>, z: f64) -> Result<f64> {
    let s = ReducedState::from_vector(x)?;
    let v = model.velocities(&s)?;
    let blocks = model.mass_matrix(&s.eta);
    let mut nu = DVector::zeros(6);
    nu.fixed_rows_mut::<3>(0).copy_from(&v.s_dot);
    nu.fixed_rows_mut::<3>(3).copy_from(&v.omega_b);
    let cross = nu.dot(&(blocks.m_sr() * &v.sigma));
    let spin = v.sigma.dot(&(blocks.m_r() * &v.sigma));
    Ok(energy(model, x, z)? - cross - spin)
}

/// Rebuilds `(R, s_eb)` along a reduced trajectory with a fourth-order
/// Munthe-Kaas step that reuses the RK4 stage states; the advected `gamma`
/// and `zeta` are integrated separately with the same stage velocities.
pub fn reconstruct(
    model: &AmModel,
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
    dt: f64,
    r0: &Rotation,
    s0: &Vector3<f64>,
) -> Result<Trajectory> {
    check_dt(dt)?;
    if states.len() != inputs.len() + 1 {
        return Err(Error::Dimension {
            expected: inputs.len() + 1,
            got: states.len(),
        });
    }
    let mut rot = *r0.matrix();
    let mut pos = *s0;
    let mut gamma = rot.transpose() * Vector3::z();
    let mut zeta = rot.transpose() * pos;
    let mut traj = Trajectory {
        dt,
        times: Vec::with_capacity(states.len()),
        states: states.to_vec(),
        rotations: Vec::with_capacity(states.len()),
        positions: Vec::with_capacity(states.len()),
        gammas: Vec::with_capacity(states.len()),
        zetas: Vec::with_capacity(states.len()),
        energies: Vec::with_capacity(states.len()),
        jacobi: Vec::with_capacity(states.len()),
    };
    let weights = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
    let offsets = [0.0, 0.5, 0.5, 1.0];
    for (k, x) in states.iter().enumerate() {
        traj.times.push(k as f64 * dt);
        traj.rotations.push(Rotation::from_matrix_unchecked(rot));
        traj.positions.push(pos);
        traj.gammas.push(gamma);
        traj.zetas.push(zeta);
        traj.energies.push(energy(model, x, pos.z)?);
        traj.jacobi.push(jacobi_integral(model, x, pos.z)?);
        let Some(u) = inputs.get(k) else { break };

        let stages = rk4_stages(model, x, u, dt).map_err(|e| chart_error(k as f64 * dt, e))?;
        let vel: Vec<(Vector3<f64>, Vector3<f64>)> = stages
            .points
            .iter()
            .map(|p| body_velocities(model, p))
            .collect::<Result<_>>()?;

        // rotation and position
        let mut theta_slopes = [Vector3::zeros(); 4];
        let mut pos_slopes = [Vector3::zeros(); 4];
        for i in 0..4 {
            let theta = if i == 0 {
                Vector3::zeros()
            } else {
                theta_slopes[i - 1] * (offsets[i] * dt)
            };
            let r_stage = rot * so3_exp(&theta);
            theta_slopes[i] = dexpinv(&theta, &vel[i].1);
            pos_slopes[i] = r_stage * vel[i].0;
        }
        let theta: Vector3<f64> = (0..4).map(|i| theta_slopes[i] * weights[i]).sum::<Vector3<f64>>() * dt;
        pos += (0..4).map(|i| pos_slopes[i] * weights[i]).sum::<Vector3<f64>>() * dt;
        rot *= so3_exp(&theta);
        rot = orthonormalize(&rot);

        // advected quantities: gamma' = -w x gamma, zeta' = -w x zeta + s_dot
        let advect = |g: &Vector3<f64>, z: &Vector3<f64>, i: usize| {
            let (sd, w) = vel[i];
            (-w.cross(g), -w.cross(z) + sd)
        };
        let (g1, z1) = advect(&gamma, &zeta, 0);
        let (g2, z2) = advect(&(gamma + g1 * (0.5 * dt)), &(zeta + z1 * (0.5 * dt)), 1);
        let (g3, z3) = advect(&(gamma + g2 * (0.5 * dt)), &(zeta + z2 * (0.5 * dt)), 2);
        let (g4, z4) = advect(&(gamma + g3 * dt), &(zeta + z3 * dt), 3);
        gamma += (g1 + g2 * 2.0 + g3 * 2.0 + g4) * (dt / 6.0);
        zeta += (z1 + z2 * 2.0 + z3 * 2.0 + z4) * (dt / 6.0);
    }
    Ok(traj)
}

/// Projects back onto SO(3) to stop rounding drift accumulating.
fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    // one Newton step of the polar decomposition suffices at rounding level
    (r + r.transpose().try_inverse().unwrap_or(*r)) * 0.5
}

/// Integrates and reconstructs. The initial pose is the Euler attitude of
/// `x0` at inertial position `s0`.
pub fn simulate(
    model: &AmModel,
    x0: &DVector<f64>,
    schedule: &InputSchedule,
    dt: f64,
    steps: usize,
    s0: &Vector3<f64>,
) -> Result<Trajectory> {
    let (states, inputs) = simulate_reduced(model, x0, schedule, dt, steps)?;
    let r0 = euler_to_rotation(&ReducedState::from_vector(x0)?.attitude);
    reconstruct(model, &states, &inputs, dt, &r0, s0)
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `max |E(t) - E(0)| / |E(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies.first().copied().unwrap_or(0.0);
        let scale = if e0 == 0.0 { 1.0 } else { e0.abs() };
        self.energies
            .iter()
            .map(|e| (e - e0).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// Same as [`Self::energy_drift`] for the Jacobi integral.
    pub fn jacobi_drift(&self) -> f64 {
        let h0 = self.jacobi.first().copied().unwrap_or(0.0);
        let scale = if h0 == 0.0 { 1.0 } else { h0.abs() };
        self.jacobi
            .iter()
            .map(|h| (h - h0).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// `max |gamma - R^T e3|_inf` over the run.
    pub fn gamma_error(&self) -> f64 {
        self.rotations
            .iter()
            .zip(&self.gammas)
            .map(|(r, g)| (g - r.matrix().transpose() * Vector3::z()).amax())
            .fold(0.0, f64::max)
    }

    /// `max |zeta - R^T s_eb|_inf` over the run.
    pub fn zeta_error(&self) -> f64 {
        self.rotations
            .iter()
            .zip(self.zetas.iter().zip(&self.positions))
            .map(|(r, (z, s))| (z - r.matrix().transpose() * s).amax())
            .fold(0.0, f64::max)
    }

    /// `max |R^T R - I|` over the run.
    pub fn orthonormality_error(&self) -> f64 {
        self.rotations
            .iter()
            .map(|r| r.orthonormality_error())
            .fold(0.0, f64::max)
    }

    pub fn csv_header(rotors: usize) -> String {
        let mut cols: Vec<String> = ["t", "p_x", "p_y", "p_z", "l_x", "l_y", "l_z", "phi", "theta", "psi", "eta1", "eta2", "deta1", "deta2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.extend((1..=rotors).map(|j| format!("Omega_{j}")));
        for i in 1..=3 {
            for j in 1..=3 {
                cols.push(format!("R_{i}{j}"));
            }
        }
        cols.extend(["s_x", "s_y", "s_z", "gamma_x", "gamma_y", "gamma_z", "energy"].map(String::from));
        cols.join(",")
    }

    /// Writes one row per time step, floats with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let rotors = self.states.first().map_or(0, |x| x.len() - 13);
        writeln!(w, "{}", Self::csv_header(rotors))?;
        for k in 0..self.len() {
            let mut row: Vec<f64> = vec![self.times[k]];
            row.extend(self.states[k].iter());
            let r = self.rotations[k].matrix();
            for i in 0..3 {
                for j in 0..3 {
                    row.push(r[(i, j)]);
                }
            }
            row.extend(self.positions[k].iter());
            row.extend(self.gammas[k].iter());
            row.push(self.energies[k]);
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{advected_gamma, EulerAngles};
    use crate::model::ModelParams;
    use nalgebra::Vector2;

    fn model() -> AmModel {
        AmModel::new(ModelParams::default()).unwrap()
    }

    #[test]
    fn schedule_lookup() {
        let s = InputSchedule::pulse(&DVector::zeros(2), &DVector::from_element(2, 1.0), 0.1, 0.2);
        assert_eq!(s.at(0.05)[0], 0.0);
        assert_eq!(s.at(0.15)[0], 1.0);
        assert_eq!(s.at(0.25)[0], 0.0);
        assert_eq!(s.at(-1.0)[0], 0.0);
        assert!(s.validate(2).is_ok());
        assert!(s.validate(3).is_err());
    }

    #[test]
    fn rejects_bad_step() {
        let m = model();
        let x = DVector::zeros(17);
        let u = DVector::zeros(6);
        assert!(matches!(step_reduced(&m, &x, &u, 0.0), Err(Error::InvalidParameter(_))));
        assert!(step_reduced(&m, &x, &u, -1e-3).is_err());
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let m = model();
        let eq = m.find_equilibrium(&Vector2::new(0.4, -0.7), 0.2, None).unwrap();
        let x = eq.q_star.to_vector();
        let mut y = x.clone();
        for _ in 0..10 {
            let next = step_reduced(&m, &y, &eq.u_star, 1e-3).unwrap();
            assert!((&next - &y).amax() < 1e-10);
            y = next;
        }
    }

    fn excited_state(m: &AmModel) -> DVector<f64> {
        let eq = m.find_equilibrium(&Vector2::new(0.4, -0.7), 0.0, None).unwrap();
        let mut x = eq.q_star;
        x.p += Vector3::new(0.2, -0.1, 0.3);
        x.l += Vector3::new(0.01, 0.02, -0.005);
        x.eta_dot = Vector2::new(0.5, -0.3);
        x.to_vector()
    }

    #[test]
    fn rk4_order() {
        let m = model();
        let x0 = excited_state(&m);
        let u = m.find_equilibrium(&Vector2::new(0.4, -0.7), 0.0, None).unwrap().u_star;
        let run = |dt: f64, n: usize| {
            let mut x = x0.clone();
            for _ in 0..n {
                x = step_reduced(&m, &x, &u, dt).unwrap();
            }
            x
        };
        let reference = run(0.1 / 64.0, 64);
        let e1 = (run(0.1 / 4.0, 4) - &reference).amax();
        let e2 = (run(0.1 / 8.0, 8) - &reference).amax();
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn gamma_norm_preserved() {
        let m = model();
        let x0 = excited_state(&m);
        let u = m.find_equilibrium(&Vector2::new(0.4, -0.7), 0.0, None).unwrap().u_star;
        let traj = simulate(&m, &x0, &InputSchedule::constant(&u), 1e-3, 1000, &Vector3::zeros()).unwrap();
        for g in &traj.gammas {
            assert!((g.norm() - 1.0).abs() < 1e-8);
        }
        assert!(traj.orthonormality_error() < 1e-9);
        // Euler attitude integrated in the state and the reconstructed R agree
        let last = ReducedState::from_vector(traj.states.last().unwrap()).unwrap();
        let r = euler_to_rotation(&last.attitude);
        assert!(r.angle_to(traj.rotations.last().unwrap()) < 1e-8);
        assert!((advected_gamma(&last.attitude) - traj.gammas.last().unwrap()).amax() < 1e-8);
    }

    #[test]
    fn pure_yaw_spin() {
        // no gravity, no rotor speed, arm at rest: l = I_zz w e3 spins the body
        let p = ModelParams {
            g: 0.0,
            ..ModelParams::default()
        };
        let m = AmModel::new(p).unwrap();
        let w0 = 0.7;
        let x = ReducedState {
            p: Vector3::zeros(),
            l: Vector3::zeros(),
            attitude: EulerAngles::new(0.0, 0.0, 0.3),
            eta: Vector2::zeros(),
            eta_dot: Vector2::zeros(),
            omega: DVector::zeros(4),
        };
        let (_, l) = m.momenta_from_velocity(&x.eta, &Vector3::zeros(), &(Vector3::z() * w0), &x.omega, &x.eta_dot);
        let x0 = ReducedState { l, ..x }.to_vector();
        let traj = simulate(&m, &x0, &InputSchedule::constant(&DVector::zeros(6)), 1e-3, 1000, &Vector3::zeros()).unwrap();
        let last = ReducedState::from_vector(traj.states.last().unwrap()).unwrap();
        assert!((last.attitude.psi - (0.3 + w0)).abs() < 1e-9);
        let expected = euler_to_rotation(&EulerAngles::new(0.0, 0.0, 0.3 + w0));
        assert!(expected.angle_to(traj.rotations.last().unwrap()) < 1e-9);
    }

    #[test]
    fn csv_layout() {
        let m = model();
        let eq = m.find_equilibrium(&Vector2::new(0.4, -0.7), 0.0, None).unwrap();
        let traj = simulate(&m, &eq.q_star.to_vector(), &InputSchedule::constant(&eq.u_star), 1e-3, 3, &Vector3::zeros()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("t,p_x,p_y,p_z,l_x"));
        assert!(lines[0].ends_with("Omega_4,R_11,R_12,R_13,R_21,R_22,R_23,R_31,R_32,R_33,s_x,s_y,s_z,gamma_x,gamma_y,gamma_z,energy"));
        let cols = lines[0].split(',').count();
        assert!(lines[1..].iter().all(|l| l.split(',').count() == cols));
    }
}
