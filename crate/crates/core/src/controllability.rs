//! Accessibility (Lie algebra rank condition) and Sussmann's sufficient
//! condition for small-time local controllability, decided numerically from
//! evaluated Hall brackets.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brackets::{enumerate_brackets, BracketClass, FormalBracket};
use crate::error::{Error, Result};
use crate::vectorfield::{evaluate_formal, ControlAffineSystem, DiffConfig};

/// Report layout version.
pub const SCHEMA_VERSION: u32 = 1;

/// Declared, not checked: Sussmann's theorem needs inputs that can be driven
/// both ways about `u*`.
pub const BILATERAL_ASSUMPTION: &str =
    "inputs act bilaterally about u* (rotor accelerations and joint torques take either sign)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// singular values below `rank_rel * sigma_max` count as zero
    pub rank_rel: f64,
    /// bad brackets with relative residual below this are neutralized
    pub annihilation: f64,
    /// `|f(q*) + G(q*) u*|_inf` must stay below this
    pub drift: f64,
    /// a column whose step-halving disagreement exceeds `noise * |v|` is
    /// roundoff, not a direction, and counts as zero
    pub noise: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rel: 1e-6,
            annihilation: 1e-6,
            drift: 1e-6,
            noise: 1e-3,
        }
    }
}

/// A bracket evaluated at a point.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub bracket: FormalBracket,
    pub value: DVector<f64>,
    /// `|v(h) - v(h/2)|` over the base step; zero for generators, which are
    /// evaluated exactly
    pub error: f64,
}

impl Evaluated {
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            bracket: self.bracket.clone(),
            value: &self.value * s,
            error: self.error * s.abs(),
        }
    }

    fn vanishes(&self, noise: f64) -> bool {
        let n = self.value.norm();
        n == 0.0 || self.error > noise * n
    }
}

/// Numerical rank of a set of columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankInfo {
    pub rank: usize,
    /// descending, of the unit-normalized column matrix
    pub singular_values: Vec<f64>,
    /// smallest retained over largest discarded singular value; `None` when
    /// nothing was discarded
    pub gap: Option<f64>,
    /// smallest retained singular value over the rank threshold
    pub margin: Option<f64>,
    /// columns left after dropping zeros
    pub columns: usize,
}

fn normalized(columns: &[DVector<f64>]) -> Vec<DVector<f64>> {
    columns
        .iter()
        .filter_map(|c| {
            let n = c.norm();
            (n > 0.0 && n.is_finite()).then(|| c / n)
        })
        .collect()
}

/// Normalizes each column, drops zeros, and counts singular values above
/// `tol_rel * sigma_max`.
pub fn numerical_rank(columns: &[DVector<f64>], tol_rel: f64) -> RankInfo {
    let cols = normalized(columns);
    if cols.is_empty() {
        return RankInfo {
            rank: 0,
            singular_values: Vec::new(),
            gap: None,
            margin: None,
            columns: 0,
        };
    }
    let m = DMatrix::from_columns(&cols);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let threshold = tol_rel * sv[0];
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    let gap = (rank > 0 && rank < sv.len()).then(|| {
        let discarded = sv[rank];
        if discarded == 0.0 {
            f64::INFINITY
        } else {
            sv[rank - 1] / discarded
        }
    });
    let margin = (rank > 0).then(|| sv[rank - 1] / threshold);
    RankInfo {
        rank,
        singular_values: sv,
        gap: gap.filter(|g| g.is_finite()),
        margin,
        columns: cols.len(),
    }
}

/// Orthonormal basis of the numerical span, padded so that the complement is
/// available too. Returns `(basis, complement)` as column matrices.
fn span_split(columns: &[DVector<f64>], dim: usize, tol_rel: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut cols = normalized(columns);
    if cols.is_empty() {
        return (DMatrix::zeros(dim, 0), DMatrix::identity(dim, dim));
    }
    while cols.len() < dim {
        cols.push(DVector::zeros(dim));
    }
    let svd = DMatrix::from_columns(&cols).svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let threshold = tol_rel * svd.singular_values[order[0]];
    let (kept, dropped): (Vec<usize>, Vec<usize>) = order
        .into_iter()
        .partition(|&i| svd.singular_values[i] > threshold);
    let pick = |idx: &[usize]| {
        let c: Vec<DVector<f64>> = idx.iter().map(|&i| u.column(i).into_owned()).collect();
        if c.is_empty() {
            DMatrix::zeros(dim, 0)
        } else {
            DMatrix::from_columns(&c)
        }
    };
    (pick(&kept), pick(&dropped))
}

/// Relative distance of `b` from the column span of `basis` (orthonormal).
fn projection_residual(b: &DVector<f64>, basis: &DMatrix<f64>) -> f64 {
    let norm = b.norm();
    if norm == 0.0 {
        return 0.0;
    }
    let along = basis * (basis.transpose() * b);
    (b - along).norm() / norm
}

/// One evaluated bracket.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BracketRecord {
    pub bracket: String,
    pub degree: usize,
    pub class: BracketClass,
    pub norm: f64,
    /// step-halving disagreement of the finite differences
    pub fd_error: f64,
    /// numerically zero: exactly zero or below its own differencing noise
    pub vanishing: bool,
    /// relative residual against good brackets of lower degree (bad brackets
    /// in an STLC run only)
    pub residual: Option<f64>,
}

/// Cumulative rank through one degree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegreeLayer {
    pub degree: usize,
    pub brackets: usize,
    pub rank_all: RankInfo,
    pub rank_good: RankInfo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllabilityReport {
    pub schema_version: u32,
    pub version: String,
    pub state_dim: usize,
    pub control_dim: usize,
    pub max_degree: usize,
    pub point: Vec<f64>,
    pub input: Option<Vec<f64>>,
    /// `|f(q*) + G(q*) u*|_inf`; `None` for an accessibility-only run
    pub drift_residual: Option<f64>,
    pub brackets: Vec<BracketRecord>,
    pub layers: Vec<DegreeLayer>,
    /// rank of all brackets through `max_degree`
    pub rank: usize,
    /// rank of good brackets through `max_degree`
    pub good_rank: usize,
    /// first degree at which the good brackets span the tangent space
    pub min_full_rank_degree: Option<usize>,
    pub stla: bool,
    pub max_bad_residual: Option<f64>,
    pub stlc: Option<bool>,
    pub assumptions: Vec<String>,
    /// unit directions the good brackets fail to reach
    pub deficient_directions: Vec<Vec<f64>>,
    pub tolerances: Tolerances,
    pub diff: DiffConfig,
}

/// Evaluates every Hall bracket of degree `<= k` at `q`, in basis order,
/// each twice (base step and half of it) to expose differencing noise.
pub fn evaluate_brackets(
    sys: &ControlAffineSystem,
    q: &DVector<f64>,
    k: usize,
    cfg: &DiffConfig,
) -> Result<Vec<Evaluated>> {
    let basis = enumerate_brackets(sys.control_dim(), k)?;
    let half = DiffConfig {
        base_step: 0.5 * cfg.base_step,
        ..*cfg
    };
    basis
        .into_par_iter()
        .map(|b| {
            let value = evaluate_formal(&b, sys, q, cfg)?;
            let error = if b.degree() == 1 {
                0.0
            } else {
                (evaluate_formal(&b, sys, q, &half)? - &value).norm()
            };
            Ok(Evaluated { bracket: b, value, error })
        })
        .collect()
}

/// Builds a report from already evaluated brackets. `drift_residual` is
/// `Some` for an STLC run, which also computes bad-bracket residuals; the
/// drift itself then counts as vanishing, having been checked.
pub fn analyze_columns(
    state_dim: usize,
    control_dim: usize,
    max_degree: usize,
    evaluated: &[Evaluated],
    tol: &Tolerances,
    drift_residual: Option<f64>,
) -> ControllabilityReport {
    let vanishing: Vec<bool> = evaluated
        .iter()
        .map(|e| e.vanishes(tol.noise) || (drift_residual.is_some() && e.bracket.as_leaf() == Some(0)))
        .collect();
    let columns = |keep: &dyn Fn(&FormalBracket) -> bool| -> Vec<DVector<f64>> {
        evaluated
            .iter()
            .zip(&vanishing)
            .filter(|(e, &z)| !z && keep(&e.bracket))
            .map(|(e, _)| e.value.clone())
            .collect()
    };
    let good = |b: &FormalBracket| b.class() == BracketClass::Good;

    let mut layers = Vec::new();
    let mut min_full = None;
    for d in 1..=max_degree {
        let rank_good = numerical_rank(&columns(&|b| b.degree() <= d && good(b)), tol.rank_rel);
        if min_full.is_none() && rank_good.rank == state_dim {
            min_full = Some(d);
        }
        layers.push(DegreeLayer {
            degree: d,
            brackets: evaluated.iter().filter(|e| e.bracket.degree() <= d).count(),
            rank_all: numerical_rank(&columns(&|b| b.degree() <= d), tol.rank_rel),
            rank_good,
        });
    }

    let mut records: Vec<BracketRecord> = evaluated
        .iter()
        .zip(&vanishing)
        .map(|(e, &z)| BracketRecord {
            bracket: e.bracket.to_string(),
            degree: e.bracket.degree(),
            class: e.bracket.class(),
            norm: e.value.norm(),
            fd_error: e.error,
            vanishing: z,
            residual: None,
        })
        .collect();
    let mut max_bad = None;
    if drift_residual.is_some() {
        for d in 1..=max_degree {
            let (basis, _) = span_split(&columns(&|b| b.degree() < d && good(b)), state_dim, tol.rank_rel);
            for ((rec, e), &z) in records.iter_mut().zip(evaluated).zip(&vanishing) {
                if e.bracket.degree() == d && e.bracket.class() == BracketClass::Bad {
                    let r = if z { 0.0 } else { projection_residual(&e.value, &basis) };
                    rec.residual = Some(r);
                    max_bad = Some(f64::max(max_bad.unwrap_or(0.0), r));
                }
            }
        }
    }

    let every_good = columns(&good);
    let rank = numerical_rank(&columns(&|_| true), tol.rank_rel).rank;
    let good_rank = numerical_rank(&every_good, tol.rank_rel).rank;
    let (_, complement) = span_split(&every_good, state_dim, tol.rank_rel);
    let deficient_directions = complement
        .column_iter()
        .map(|c| {
            // fix the sign so the largest entry is positive
            let i = c.iamax();
            let s = if c[i] < 0.0 { -1.0 } else { 1.0 };
            c.iter().map(|x| x * s).collect()
        })
        .collect();

    let stla = rank == state_dim;
    let stlc = drift_residual.map(|_| {
        good_rank == state_dim && max_bad.is_none_or(|r| r < tol.annihilation)
    });
    ControllabilityReport {
        schema_version: SCHEMA_VERSION,
        version: crate::VERSION.to_string(),
        state_dim,
        control_dim,
        max_degree,
        point: Vec::new(),
        input: None,
        drift_residual,
        brackets: records,
        layers,
        rank,
        good_rank,
        min_full_rank_degree: min_full,
        stla,
        max_bad_residual: max_bad,
        stlc,
        assumptions: if drift_residual.is_some() {
            vec![BILATERAL_ASSUMPTION.to_string()]
        } else {
            Vec::new()
        },
        deficient_directions,
        tolerances: *tol,
        diff: DiffConfig::default(),
    }
}

/// Accessibility test at `q`: do the brackets of degree `<= k` span the
/// tangent space?
pub fn stla_check(
    sys: &ControlAffineSystem,
    q: &DVector<f64>,
    k: usize,
    cfg: &DiffConfig,
    tol: &Tolerances,
) -> Result<ControllabilityReport> {
    let evaluated = evaluate_brackets(sys, q, k, cfg)?;
    let mut report = analyze_columns(sys.state_dim(), sys.control_dim(), k, &evaluated, tol, None);
    report.point = q.iter().copied().collect();
    report.diff = *cfg;
    Ok(report)
}

/// Sussmann's test at an equilibrium `(q, u)`. The analysis runs on the
/// shifted drift `f + G u`, which vanishes at `q`.
pub fn stlc_check(
    sys: &ControlAffineSystem,
    q: &DVector<f64>,
    u: &DVector<f64>,
    k: usize,
    cfg: &DiffConfig,
    tol: &Tolerances,
) -> Result<ControllabilityReport> {
    let shifted = sys.shifted(u)?;
    let residual = shifted.drift_at(q)?.amax();
    if !(residual < tol.drift) {
        return Err(Error::DriftNotVanishing(residual));
    }
    let evaluated = evaluate_brackets(&shifted, q, k, cfg)?;
    let mut report = analyze_columns(
        sys.state_dim(),
        sys.control_dim(),
        k,
        &evaluated,
        tol,
        Some(residual),
    );
    report.point = q.iter().copied().collect();
    report.input = Some(u.iter().copied().collect());
    report.diff = *cfg;
    Ok(report)
}
