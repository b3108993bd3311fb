//! Hover equilibria with a held arm pose.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::Serialize;

use super::{AmModel, ReducedState};
use crate::error::{Error, Result};
use crate::liegroup::EulerAngles;

const MAX_ITERATIONS: usize = 100;
const RESIDUAL_LIMIT: f64 = 1e-8;

/// A trimmed hover: `f(q*) + G(q*) u* = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumPoint {
    pub q_star: ReducedState,
    /// `[tau_1, tau_2, 0, ..]`
    pub u_star: DVector<f64>,
    /// `|f(q*) + G(q*) u*|_inf`
    pub residual: f64,
    /// `|thrust/torque balance|_inf` from the rotor-speed solve
    pub balance_residual: f64,
    pub iterations: usize,
    /// 2-norm condition numbers of `M_s`, `M_eta` and the balance Jacobian
    pub cond_m_s: f64,
    pub cond_m_eta: f64,
    pub cond_balance: f64,
}

impl EquilibriumPoint {
    pub fn omega_star(&self) -> &DVector<f64> {
        &self.q_star.omega
    }
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

impl AmModel {
    /// Thrust and body-torque balance at level attitude:
    /// `[c_T |Omega|^2 - m_t g; W Omega^2 + tau_g]`.
    fn balance(&self, omega: &DVector<f64>, torque: &Vector3<f64>) -> DVector<f64> {
        let p = self.params();
        let (thrust, t) = self.rotor_wrench(omega);
        let t = t + torque;
        DVector::from_vec(vec![thrust - p.total_mass() * p.g, t.x, t.y, t.z])
    }

    fn balance_jacobian(&self, omega: &DVector<f64>) -> DMatrix<f64> {
        let r = omega.len();
        let mut jac = DMatrix::zeros(4, r);
        let c_t = self.params().c_t;
        let w = self.mixing_matrix();
        for j in 0..r {
            jac[(0, j)] = 2.0 * c_t * omega[j];
            for i in 0..3 {
                jac[(1 + i, j)] = 2.0 * w[(i, j)] * omega[j];
            }
        }
        jac
    }

    /// Least-norm squared speeds solving the (linear in `Omega^2`) balance.
    fn squared_speeds(&self, torque: &Vector3<f64>) -> Result<DVector<f64>> {
        let r = self.rotor_count();
        let p = self.params();
        let mut a = DMatrix::zeros(4, r);
        a.row_mut(0).fill(p.c_t);
        a.view_mut((1, 0), (3, r)).copy_from(self.mixing_matrix());
        let b = DVector::from_vec(vec![p.total_mass() * p.g, -torque.x, -torque.y, -torque.z]);
        a.svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::NoConvergence(e.to_string()))
    }

    fn solve_speeds(&self, torque: &Vector3<f64>, guess: DVector<f64>) -> Result<(DVector<f64>, usize)> {
        let scale = self.params().total_mass() * self.params().g;
        let tol = 1e-13 * scale;
        let mut omega = guess;
        let mut res = self.balance(&omega, torque);
        let mut lambda = 0.0;
        for it in 0..MAX_ITERATIONS {
            if res.amax() < tol {
                return Ok((omega.abs(), it));
            }
            let jac = self.balance_jacobian(&omega);
            // Gauss-Newton (min-norm) first, Levenberg-Marquardt once stalled.
            let step = if lambda == 0.0 {
                jac.clone()
                    .svd(true, true)
                    .solve(&(-&res), 1e-14)
                    .map_err(|e| Error::NoConvergence(e.to_string()))?
            } else {
                let jt = jac.transpose();
                let lhs = &jt * &jac + DMatrix::identity(omega.len(), omega.len()) * lambda;
                lhs.cholesky()
                    .ok_or_else(|| Error::NoConvergence("damped normal equations".into()))?
                    .solve(&(-(jt * &res)))
            };
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-6 {
                let trial = &omega + &step * t;
                let trial_res = self.balance(&trial, torque);
                if trial_res.norm() < res.norm() {
                    omega = trial;
                    res = trial_res;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                lambda *= 0.3;
                if lambda < 1e-12 {
                    lambda = 0.0;
                }
            } else {
                lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
                if lambda > 1e12 {
                    break;
                }
            }
        }
        if res.amax() < tol {
            return Ok((omega.abs(), MAX_ITERATIONS));
        }
        Err(Error::NoConvergence(format!(
            "rotor-speed balance residual {:.3e} after {MAX_ITERATIONS} iterations",
            res.amax()
        )))
    }

    /// Hover equilibrium with the arm held at `eta` and heading `psi`.
    pub fn find_equilibrium(
        &self,
        eta: &Vector2<f64>,
        psi: f64,
        guess: Option<&DVector<f64>>,
    ) -> Result<EquilibriumPoint> {
        let p = self.params();
        let r = self.rotor_count();
        if let Some(g) = guess {
            if g.len() != r {
                return Err(Error::Dimension {
                    expected: r,
                    got: g.len(),
                });
            }
        }
        if p.c_t == 0.0 && p.g > 0.0 {
            return Err(Error::Infeasible("rotors produce no thrust (c_T = 0)".into()));
        }
        let torque = self.gravity_wrench(&Vector3::z(), eta)?.torque;
        let squares = self.squared_speeds(&torque)?;
        if r <= 4 {
            // the balance pins Omega^2 down uniquely
            if let Some(j) = squares.iter().position(|&y| y < 0.0) {
                return Err(Error::Infeasible(format!(
                    "rotor {} would need Omega^2 = {:.6e}",
                    j + 1,
                    squares[j]
                )));
            }
        }
        let start = guess
            .cloned()
            .unwrap_or_else(|| DVector::from_element(r, (p.total_mass() * p.g / (r as f64 * p.c_t)).sqrt()));
        let (omega, iterations) = match self.solve_speeds(&torque, start) {
            Ok(v) => v,
            Err(e) => {
                if squares.iter().any(|&y| y < 0.0) {
                    return Err(Error::Infeasible("no non-negative rotor speeds balance the arm".into()));
                }
                return Err(e);
            }
        };
        let balance_residual = self.balance(&omega, &torque).amax();
        let cond_balance = condition(&self.balance_jacobian(&omega));

        let blocks = self.mass_matrix(eta);
        let mu = blocks.m_sr() * self.spin_stack(&omega);
        let q_star = ReducedState {
            p: Vector3::zeros(),
            l: mu.fixed_rows::<3>(3).into_owned(),
            attitude: EulerAngles::new(0.0, 0.0, psi),
            eta: *eta,
            eta_dot: Vector2::zeros(),
            omega,
        };
        let shape = self.shape_terms(&q_star)?;
        let mut u_star = DVector::zeros(self.input_dim());
        u_star[0] = shape.f_eta[0];
        u_star[1] = shape.f_eta[1];
        let residual = self.dynamics(&q_star, &u_star)?.amax();
        if !(residual < RESIDUAL_LIMIT) {
            return Err(Error::NoConvergence(format!(
                "equilibrium residual {residual:.3e} exceeds {RESIDUAL_LIMIT:e}"
            )));
        }
        let m_eta = DMatrix::from_column_slice(2, 2, shape.m_eta.as_slice());
        Ok(EquilibriumPoint {
            q_star,
            u_star,
            residual,
            balance_residual,
            iterations,
            cond_m_s: blocks.m_s_condition(),
            cond_m_eta: condition(&m_eta),
            cond_balance,
        })
    }
}
