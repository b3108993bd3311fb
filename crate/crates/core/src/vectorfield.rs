//! Control-affine systems and numerical Lie brackets.
//!
//! Brackets follow the convention `[X, Y] = DX Y - DY X`. That is the
//! negative of the other common convention; spans and ranks do not depend on
//! the sign.
//!
//! Derivatives are central finite differences. Nested brackets differentiate
//! functions that are themselves finite-difference results, so each nesting
//! level gets a larger step (see [`DiffConfig::step_for_level`]).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::brackets::FormalBracket;
use crate::error::{Error, Result};

/// Deepest bracket [`evaluate_formal`] accepts.
pub const MAX_EVAL_DEGREE: usize = 4;

pub type Field = dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync;
/// Borrowed field of any lifetime, as accepted by the differentiation routines.
pub type FieldRef<'a> = dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + 'a;
pub type ChartGuard = dyn Fn(&DVector<f64>) -> bool + Send + Sync;

/// `dq/dt = f(q) + sum_i g_i(q) u_i`.
#[derive(Clone)]
pub struct ControlAffineSystem {
    state_dim: usize,
    drift: Arc<Field>,
    controls: Vec<Arc<Field>>,
    guard: Option<Arc<ChartGuard>>,
}

impl std::fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("state_dim", &self.state_dim)
            .field("controls", &self.controls.len())
            .field("guarded", &self.guard.is_some())
            .finish()
    }
}

impl ControlAffineSystem {
    pub fn new(state_dim: usize, drift: Arc<Field>, controls: Vec<Arc<Field>>) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidParameter("state dimension must be positive".into()));
        }
        if controls.is_empty() {
            return Err(Error::InvalidParameter("at least one control field is required".into()));
        }
        Ok(Self {
            state_dim,
            drift,
            controls,
            guard: None,
        })
    }

    /// Convenience constructor from closures.
    pub fn from_fns<F, G>(state_dim: usize, drift: F, controls: Vec<G>) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        let drift: Arc<Field> = Arc::new(move |q: &DVector<f64>| Ok(drift(q)));
        let controls = controls
            .into_iter()
            .map(|g| Arc::new(move |q: &DVector<f64>| Ok(g(q))) as Arc<Field>)
            .collect();
        Self::new(state_dim, drift, controls)
    }

    pub fn with_guard(mut self, guard: Arc<ChartGuard>) -> Self {
        self.guard = Some(guard);
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.controls.len()
    }

    pub fn guard(&self) -> Option<&ChartGuard> {
        self.guard.as_deref()
    }

    /// Generator `i`: `0` is the drift, `1..=m` the control fields.
    pub fn generator(&self, i: usize) -> &Field {
        if i == 0 {
            &*self.drift
        } else {
            &*self.controls[i - 1]
        }
    }

    /// Evaluates generator `i` at `q` with chart and dimension checks.
    pub fn eval_generator(&self, i: usize, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(q)?;
        let v = (self.generator(i))(q)?;
        if v.len() != self.state_dim {
            return Err(Error::Dimension {
                expected: self.state_dim,
                got: v.len(),
            });
        }
        Ok(v)
    }

    pub fn drift_at(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.eval_generator(0, q)
    }

    /// The `n x m` matrix of control fields.
    pub fn control_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut g = DMatrix::zeros(self.state_dim, self.controls.len());
        for i in 0..self.controls.len() {
            g.set_column(i, &self.eval_generator(i + 1, q)?);
        }
        Ok(g)
    }

    /// `f(q) + G(q) u`.
    pub fn velocity(&self, q: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.controls.len() {
            return Err(Error::Dimension {
                expected: self.controls.len(),
                got: u.len(),
            });
        }
        let mut v = self.drift_at(q)?;
        for (i, ui) in u.iter().enumerate() {
            if *ui != 0.0 {
                v += self.eval_generator(i + 1, q)? * *ui;
            }
        }
        Ok(v)
    }

    /// Same control fields with drift `f + G u0`, for analysis about a
    /// nonzero equilibrium input.
    pub fn shifted(&self, u0: &DVector<f64>) -> Result<Self> {
        if u0.len() != self.controls.len() {
            return Err(Error::Dimension {
                expected: self.controls.len(),
                got: u0.len(),
            });
        }
        let base = self.clone();
        let u0 = u0.clone();
        let drift: Arc<Field> = Arc::new(move |q: &DVector<f64>| {
            let mut v = (base.drift)(q)?;
            for (i, ui) in u0.iter().enumerate() {
                if *ui != 0.0 {
                    v += (base.controls[i])(q)? * *ui;
                }
            }
            Ok(v)
        });
        Ok(Self {
            state_dim: self.state_dim,
            drift,
            controls: self.controls.clone(),
            guard: self.guard.clone(),
        })
    }

    fn check(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.state_dim {
            return Err(Error::Dimension {
                expected: self.state_dim,
                got: q.len(),
            });
        }
        check_guard(self.guard(), q)
    }
}

fn check_guard(guard: Option<&ChartGuard>, q: &DVector<f64>) -> Result<()> {
    match guard {
        Some(g) if !g(q) => Err(Error::ChartViolation(format!("{:?}", q.as_slice()))),
        _ => Ok(()),
    }
}

/// Finite-difference stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Stencil {
    /// `(F(x+h) - F(x-h)) / 2h`, error `O(h^2)`.
    Central2,
    /// Five-point stencil, error `O(h^4)`.
    Central4,
}

impl Stencil {
    pub fn order(self) -> i32 {
        match self {
            Stencil::Central2 => 2,
            Stencil::Central4 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiffConfig {
    /// Step for differentiating exactly evaluated fields.
    pub base_step: f64,
    /// Scale each coordinate's step by `max(1, |q_i|)`.
    pub relative: bool,
    /// Acceptable disagreement between step `h` and `h/2` Jacobians, relative
    /// to the Jacobian's largest entry.
    pub richardson_tol: f64,
    pub stencil: Stencil,
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self {
            base_step: f64::EPSILON.cbrt(),
            relative: true,
            richardson_tol: 1e-6,
            stencil: Stencil::Central2,
        }
    }
}

impl DiffConfig {
    /// Five-point stencil with its own optimal base step `eps^(1/5)`.
    pub fn high_order() -> Self {
        Self {
            base_step: f64::EPSILON.powf(0.2),
            stencil: Stencil::Central4,
            ..Self::default()
        }
    }

    /// Step for differentiating a function whose values carry the noise of
    /// `level - 1` nested differentiations.
    ///
    /// A stencil of order `p` with input noise `e` has optimal step
    /// `e^(1/(p+1))` and output noise `e^(p/(p+1))`; iterating from
    /// `base_step` gives `base_step^(r^(level-1))` with `r = p/(p+1)`.
    pub fn step_for_level(&self, level: usize) -> f64 {
        let p = self.stencil.order() as f64;
        let r = p / (p + 1.0);
        self.base_step.powf(r.powi(level.saturating_sub(1) as i32))
    }

    fn validate(&self) -> Result<()> {
        if self.base_step > 0.0 && self.base_step.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("base step must be positive, got {}", self.base_step)))
        }
    }
}

fn stencil_apply<F>(f: &F, stencil: Stencil, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64) -> Result<DVector<f64>>,
{
    match stencil {
        Stencil::Central2 => {
            let plus = f(h)?;
            let minus = f(-h)?;
            Ok((plus - minus) / (2.0 * h))
        }
        Stencil::Central4 => {
            let p1 = f(h)?;
            let m1 = f(-h)?;
            let p2 = f(2.0 * h)?;
            let m2 = f(-2.0 * h)?;
            Ok(((p1 - m1) * 8.0 - (p2 - m2)) / (12.0 * h))
        }
    }
}

/// Central-difference Jacobian; column `i` uses step `h0 max(1, |q_i|)`.
pub fn jacobian(
    field: &FieldRef<'_>,
    q: &DVector<f64>,
    cfg: &DiffConfig,
    guard: Option<&ChartGuard>,
) -> Result<DMatrix<f64>> {
    jacobian_with_step(field, q, cfg, cfg.base_step, guard)
}

fn jacobian_with_step(
    field: &FieldRef<'_>,
    q: &DVector<f64>,
    cfg: &DiffConfig,
    h0: f64,
    guard: Option<&ChartGuard>,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    check_guard(guard, q)?;
    let n = q.len();
    let mut jac: Option<DMatrix<f64>> = None;
    for i in 0..n {
        let h = if cfg.relative { h0 * q[i].abs().max(1.0) } else { h0 };
        let probe = |t: f64| {
            let mut x = q.clone();
            x[i] += t;
            check_guard(guard, &x)?;
            field(&x)
        };
        let col = stencil_apply(&probe, cfg.stencil, h)?;
        let j = jac.get_or_insert_with(|| DMatrix::zeros(col.len(), n));
        j.set_column(i, &col);
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

/// Largest entrywise change between the step-`h` and step-`h/2` Jacobians,
/// relative to the largest Jacobian entry, and whether it is within
/// `cfg.richardson_tol`.
pub fn richardson_check(
    field: &FieldRef<'_>,
    q: &DVector<f64>,
    cfg: &DiffConfig,
    guard: Option<&ChartGuard>,
) -> Result<(f64, bool)> {
    let coarse = jacobian_with_step(field, q, cfg, cfg.base_step, guard)?;
    let fine = jacobian_with_step(field, q, cfg, cfg.base_step * 0.5, guard)?;
    let scale = fine.amax().max(f64::MIN_POSITIVE);
    let err = (coarse - fine).amax() / scale;
    Ok((err, err <= cfg.richardson_tol))
}

/// `DF(q) v` by a central difference along `v`, at nesting `level`.
pub fn directional_derivative(
    field: &FieldRef<'_>,
    q: &DVector<f64>,
    v: &DVector<f64>,
    cfg: &DiffConfig,
    level: usize,
    guard: Option<&ChartGuard>,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    // Largest per-coordinate displacement relative to that coordinate's scale.
    let scale = q
        .iter()
        .zip(v.iter())
        .map(|(qi, vi)| {
            if cfg.relative {
                vi.abs() / qi.abs().max(1.0)
            } else {
                vi.abs()
            }
        })
        .fold(0.0, f64::max);
    if scale == 0.0 {
        let f0 = field(q)?;
        return Ok(DVector::zeros(f0.len()));
    }
    let t = cfg.step_for_level(level) / scale;
    let probe = |s: f64| {
        let x = q + v * s;
        check_guard(guard, &x)?;
        field(&x)
    };
    stencil_apply(&probe, cfg.stencil, t)
}

/// `[X, Y](q) = DX(q) Y(q) - DY(q) X(q)`, using directional differences.
pub fn lie_bracket(
    x: &FieldRef<'_>,
    y: &FieldRef<'_>,
    q: &DVector<f64>,
    cfg: &DiffConfig,
    guard: Option<&ChartGuard>,
) -> Result<DVector<f64>> {
    bracket_at_levels(x, 1, y, 1, q, cfg, guard)
}

/// Same bracket through two full Jacobians. Costs `O(n)` field evaluations
/// per Jacobian instead of `O(1)`.
pub fn lie_bracket_dense(
    x: &FieldRef<'_>,
    y: &FieldRef<'_>,
    q: &DVector<f64>,
    cfg: &DiffConfig,
    guard: Option<&ChartGuard>,
) -> Result<DVector<f64>> {
    let jx = jacobian(x, q, cfg, guard)?;
    let jy = jacobian(y, q, cfg, guard)?;
    Ok(jx * y(q)? - jy * x(q)?)
}

fn bracket_at_levels(
    x: &FieldRef<'_>,
    x_level: usize,
    y: &FieldRef<'_>,
    y_level: usize,
    q: &DVector<f64>,
    cfg: &DiffConfig,
    guard: Option<&ChartGuard>,
) -> Result<DVector<f64>> {
    check_guard(guard, q)?;
    let xq = x(q)?;
    let yq = y(q)?;
    let dx_y = directional_derivative(x, q, &yq, cfg, x_level, guard)?;
    let dy_x = directional_derivative(y, q, &xq, cfg, y_level, guard)?;
    Ok(dx_y - dy_x)
}

/// Evaluates a formal bracket of `sys`'s generators at `q`.
///
/// Inner brackets are re-evaluated from scratch at every probe point of the
/// outer difference, so each level genuinely differentiates the level below.
pub fn evaluate_formal(
    b: &FormalBracket,
    sys: &ControlAffineSystem,
    q: &DVector<f64>,
    cfg: &DiffConfig,
) -> Result<DVector<f64>> {
    if b.degree() > MAX_EVAL_DEGREE {
        return Err(Error::DegreeTooDeep {
            degree: b.degree(),
            limit: MAX_EVAL_DEGREE,
        });
    }
    if b.controls() != sys.control_dim() {
        return Err(Error::Dimension {
            expected: sys.control_dim(),
            got: b.controls(),
        });
    }
    sys.check(q)?;
    eval_rec(b, sys, q, cfg)
}

fn eval_rec(
    b: &FormalBracket,
    sys: &ControlAffineSystem,
    q: &DVector<f64>,
    cfg: &DiffConfig,
) -> Result<DVector<f64>> {
    match b.children() {
        None => sys.eval_generator(b.as_leaf().expect("leaf"), q),
        Some((left, right)) => {
            let x = |p: &DVector<f64>| eval_rec(left, sys, p, cfg);
            let y = |p: &DVector<f64>| eval_rec(right, sys, p, cfg);
            bracket_at_levels(&x, left.degree(), &y, right.degree(), q, cfg, sys.guard())
        }
    }
}
