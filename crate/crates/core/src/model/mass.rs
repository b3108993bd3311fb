//! Kinetic-energy metric in body velocities `[s_dot_b, omega_b, sigma, eta_dot]`.

use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use super::arm::{rot_y, ArmKinematics, ANGLE_MAP};
use super::AmModel;
use crate::error::{Error, Result};
use crate::liegroup::hat;

/// Full mass matrix at one shape, with its shape derivatives.
#[derive(Debug, Clone)]
pub struct MassBlocks {
    full: DMatrix<f64>,
    d_full: [DMatrix<f64>; 2],
    rotors: usize,
}

impl MassBlocks {
    fn block(&self, m: &DMatrix<f64>, r: (usize, usize), c: (usize, usize)) -> DMatrix<f64> {
        m.view((r.0, c.0), (r.1, c.1)).into_owned()
    }

    fn s(&self) -> (usize, usize) {
        (0, 6)
    }

    fn r(&self) -> (usize, usize) {
        (6, self.rotors)
    }

    fn l(&self) -> (usize, usize) {
        (6 + self.rotors, 2)
    }

    pub fn dim(&self) -> usize {
        self.full.nrows()
    }

    /// The assembled `(8 + 2n)`-square matrix.
    pub fn full(&self) -> &DMatrix<f64> {
        &self.full
    }

    /// `d M / d eta_k`.
    pub fn d_full(&self, k: usize) -> &DMatrix<f64> {
        &self.d_full[k]
    }

    pub fn m_p(&self) -> Matrix3<f64> {
        self.full.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn m_omega(&self) -> Matrix3<f64> {
        self.full.fixed_view::<3, 3>(3, 3).into_owned()
    }

    pub fn m_p_omega(&self) -> Matrix3<f64> {
        self.full.fixed_view::<3, 3>(0, 3).into_owned()
    }

    pub fn m_omega_r(&self) -> DMatrix<f64> {
        self.block(&self.full, (3, 3), self.r())
    }

    pub fn m_pl(&self) -> DMatrix<f64> {
        self.block(&self.full, (0, 3), self.l())
    }

    pub fn m_omega_l(&self) -> DMatrix<f64> {
        self.block(&self.full, (3, 3), self.l())
    }

    pub fn m_r(&self) -> DMatrix<f64> {
        self.block(&self.full, self.r(), self.r())
    }

    pub fn m_l(&self) -> DMatrix<f64> {
        self.block(&self.full, self.l(), self.l())
    }

    pub fn m_s(&self) -> DMatrix<f64> {
        self.block(&self.full, self.s(), self.s())
    }

    pub fn m_sr(&self) -> DMatrix<f64> {
        self.block(&self.full, self.s(), self.r())
    }

    pub fn m_sl(&self) -> DMatrix<f64> {
        self.block(&self.full, self.s(), self.l())
    }

    pub fn d_m_s(&self, k: usize) -> DMatrix<f64> {
        self.block(&self.d_full[k], self.s(), self.s())
    }

    pub fn d_m_sl(&self, k: usize) -> DMatrix<f64> {
        self.block(&self.d_full[k], self.s(), self.l())
    }

    pub fn d_m_l(&self, k: usize) -> DMatrix<f64> {
        self.block(&self.d_full[k], self.l(), self.l())
    }

    /// Cholesky factor of `M_s`.
    pub fn m_s_factor(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        self.m_s()
            .cholesky()
            .ok_or(Error::SingularMassBlock("M_s"))
    }

    /// 2-norm condition number of `M_s`.
    pub fn m_s_condition(&self) -> f64 {
        let sv = self.m_s().singular_values();
        sv.max() / sv.min()
    }

    /// `1/2 v^T M v`.
    pub fn kinetic_energy(&self, v: &DVector<f64>) -> f64 {
        0.5 * v.dot(&(&self.full * v))
    }
}

/// `A = [I, -S(s), 0, J_link]`, the map from velocities to a point's velocity.
fn velocity_map(s: &Vector3<f64>, link_cols: Option<(usize, &[Vector3<f64>; 2])>, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(3, n);
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-hat(s)));
    if let Some((offset, cols)) = link_cols {
        for (k, c) in cols.iter().enumerate() {
            a.fixed_view_mut::<3, 1>(0, offset + k).copy_from(c);
        }
    }
    a
}

impl AmModel {
    /// Mass matrix and its shape derivatives at `eta`.
    pub fn mass_matrix(&self, eta: &Vector2<f64>) -> MassBlocks {
        let p = self.params();
        let rotors = self.rotor_count();
        let n = 8 + rotors;
        let lo = 6 + rotors;
        let mut m = DMatrix::zeros(n, n);

        // base
        for i in 0..3 {
            m[(i, i)] += p.m_b;
        }
        m.fixed_view_mut::<3, 3>(3, 3)
            .add_assign(&p.base_inertia());

        // rotors: point masses at the hubs plus spinning discs
        let disc = Matrix3::from_diagonal(&Vector3::new(p.a, p.a, p.j));
        for (j, r) in self.rotor_positions().iter().enumerate() {
            let a = velocity_map(r, None, n);
            m += a.transpose() * a * p.m_r;
            m.fixed_view_mut::<3, 3>(3, 3).add_assign(&disc);
            m[(5, 6 + j)] += p.j;
            m[(6 + j, 5)] += p.j;
            m[(6 + j, 6 + j)] += p.j;
        }

        // links
        let kin = ArmKinematics::new(eta, p);
        let mut d_full = [DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
        let e2 = hat(&Vector3::y());
        for i in 0..2 {
            let mass = p.link_mass(i);
            let s = kin.com[i];
            let a = velocity_map(&s, Some((lo, &kin.dcom[i])), n);
            m += a.transpose() * &a * mass;

            // angular velocity of link i: omega_b + e2 (a_i . eta_dot)
            let mut b = DMatrix::zeros(3, n);
            b.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
            b[(1, lo)] = ANGLE_MAP[i][0];
            b[(1, lo + 1)] = ANGLE_MAP[i][1];
            let rot = rot_y(kin.angles[i]);
            let inertia = rot * p.link_inertia(i) * rot.transpose();
            m += b.transpose() * inertia * &b;

            for k in 0..2 {
                let mut da = DMatrix::zeros(3, n);
                da.fixed_view_mut::<3, 3>(0, 3)
                    .copy_from(&(-hat(&kin.dcom[i][k])));
                for j in 0..2 {
                    da.fixed_view_mut::<3, 1>(0, lo + j)
                        .copy_from(&kin.ddcom[i][k][j]);
                }
                let cross = da.transpose() * &a * mass;
                d_full[k] += &cross + cross.transpose();
                let d_inertia = (e2 * inertia - inertia * e2) * ANGLE_MAP[i][k];
                d_full[k] += b.transpose() * d_inertia * &b;
            }
        }

        // symmetrize away rounding so downstream Cholesky sees exact symmetry
        let full = (&m + m.transpose()) * 0.5;
        MassBlocks {
            full,
            d_full,
            rotors,
        }
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

    /// Kinetic energy summed body by body from closed-form velocities.
    fn per_body_energy(model: &AmModel, eta: &Vector2<f64>, v: &DVector<f64>) -> f64 {
        let p = model.params();
        let sd = Vector3::new(v[0], v[1], v[2]);
        let w = Vector3::new(v[3], v[4], v[5]);
        let rotors = model.rotor_count();
        let ed = Vector2::new(v[6 + rotors], v[7 + rotors]);
        let mut k = 0.5 * p.m_b * sd.norm_squared() + 0.5 * w.dot(&(p.base_inertia() * w));
        let disc = Matrix3::from_diagonal(&Vector3::new(p.a, p.a, p.j));
        for (j, r) in model.rotor_positions().iter().enumerate() {
            let vel = sd + w.cross(r);
            k += 0.5 * p.m_r * vel.norm_squared();
            let spin = w + Vector3::z() * v[6 + j];
            k += 0.5 * spin.dot(&(disc * spin));
        }
        // link COMs from geometry, differentiated in time along eta_dot
        let h = 1e-6;
        let plus = ArmKinematics::new(&(eta + ed * h), p);
        let minus = ArmKinematics::new(&(eta - ed * h), p);
        let here = ArmKinematics::new(eta, p);
        let rates = [ed[0], ed[0] + ed[1]];
        for i in 0..2 {
            let rel = (plus.com[i] - minus.com[i]) / (2.0 * h);
            let vel = sd + w.cross(&here.com[i]) + rel;
            k += 0.5 * p.link_mass(i) * vel.norm_squared();
            let rot = rot_y(here.angles[i]);
            let inertia = rot * p.link_inertia(i) * rot.transpose();
            let wl = w + Vector3::y() * rates[i];
            k += 0.5 * wl.dot(&(inertia * wl));
        }
        k
    }

    #[test]
    fn matches_per_body_energy() {
        let model = model();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let eta = Vector2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let v = DVector::from_fn(12, |_, _| rng.gen_range(-2.0..2.0));
            let blocks = model.mass_matrix(&eta);
            let k = blocks.kinetic_energy(&v);
            let oracle = per_body_energy(&model, &eta, &v);
            assert!((k - oracle).abs() < 1e-8 * oracle.max(1.0), "{k} vs {oracle}");
        }
    }

    #[test]
    fn no_arm_blocks() {
        let p = ModelParams {
            m1: 0.0,
            m2: 0.0,
            ..ModelParams::default()
        };
        let model = AmModel::new(p.clone()).unwrap();
        let b = model.mass_matrix(&Vector2::new(0.3, 0.2));
        let expected = Matrix3::identity() * (p.m_b + 4.0 * p.m_r);
        assert!((b.m_p() - expected).amax() < 1e-14);
        assert!(b.m_pl().amax() < 1e-14);
    }

    #[test]
    fn spin_columns() {
        let model = model();
        let b = model.mass_matrix(&Vector2::new(0.4, -0.7));
        let mor = b.m_omega_r();
        for j in 0..4 {
            assert_eq!(mor.column(j).into_owned(), DVector::from_vec(vec![0.0, 0.0, 1e-4]));
        }
        assert!((b.m_r() - DMatrix::identity(4, 4) * 1e-4).amax() < 1e-20);
        assert!(b.m_sr().rows(0, 3).amax() == 0.0);
    }

    #[test]
    fn symmetric_positive_definite() {
        let model = model();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let eta = Vector2::new(rng.gen_range(-3.2..3.2), rng.gen_range(-3.2..3.2));
            let b = model.mass_matrix(&eta);
            let m = b.full();
            assert!((m - m.transpose()).amax() < 1e-12);
            let min_eig = m.clone().symmetric_eigenvalues().min();
            assert!(min_eig > 0.0);
            assert!(b.m_s_factor().is_ok());
        }
    }

    #[test]
    fn shape_derivatives_match_finite_differences() {
        let model = model();
        let eta = Vector2::new(0.4, -0.7);
        let b = model.mass_matrix(&eta);
        for k in 0..2 {
            let h = 1e-5;
            let mut plus = eta;
            let mut minus = eta;
            plus[k] += h;
            minus[k] -= h;
            let fd = (model.mass_matrix(&plus).full() - model.mass_matrix(&minus).full()) / (2.0 * h);
            assert!((b.d_full(k) - fd).amax() < 1e-9, "k={k}");
        }
    }
}
