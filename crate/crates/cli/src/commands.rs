use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use amctl::brackets::witt_dimension;
use amctl::controllability::{evaluate_brackets, SCHEMA_VERSION};
use amctl::simulate::{cross_validate, simulate as integrate, CrossValidation, InputSchedule, Trajectory};
use amctl::{
    enumerate_brackets, stlc_check, AmModel, BracketClass, ControllabilityReport, EquilibriumPoint, SpinCoupling,
};
use nalgebra::{DVector, Vector2, Vector3};
use serde::Serialize;

use crate::config::RunConfig;
use crate::Failure;

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let text = amctl::json::to_string(value).map_err(|e| Failure::config("Serialize", e.to_string()))?;
    std::fs::write(dir.join(name), text).map_err(|e| Failure::config("Io", format!("{name}: {e}")))
}

fn model(cfg: &RunConfig) -> Result<AmModel, Failure> {
    Ok(AmModel::new(cfg.model.clone())?.with_coupling(cfg.coupling))
}

fn trim(model: &AmModel, cfg: &RunConfig) -> Result<EquilibriumPoint, Failure> {
    Ok(model.find_equilibrium(&Vector2::from(cfg.eta), cfg.psi, None)?)
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[derive(Serialize)]
struct Header {
    schema_version: u32,
    version: &'static str,
}

const HEADER: Header = Header {
    schema_version: SCHEMA_VERSION,
    version: amctl::VERSION,
};

#[derive(Serialize)]
struct Trim {
    /// reduced state vector at trim
    q_star: Vec<f64>,
    u_star: Vec<f64>,
    omega_star: Vec<f64>,
    residual: f64,
    balance_residual: f64,
    iterations: usize,
    cond_m_s: f64,
    cond_m_eta: f64,
    cond_balance: f64,
}

impl From<&EquilibriumPoint> for Trim {
    fn from(eq: &EquilibriumPoint) -> Self {
        Self {
            q_star: to_vec(&eq.q_star.to_vector()),
            u_star: to_vec(&eq.u_star),
            omega_star: to_vec(eq.omega_star()),
            residual: eq.residual,
            balance_residual: eq.balance_residual,
            iterations: eq.iterations,
            cond_m_s: eq.cond_m_s,
            cond_m_eta: eq.cond_m_eta,
            cond_balance: eq.cond_balance,
        }
    }
}

#[derive(Serialize)]
struct EquilibriumFile {
    #[serde(flatten)]
    header: Header,
    eta: [f64; 2],
    psi: f64,
    coupling: SpinCoupling,
    equilibrium: Trim,
}

pub fn equilibrium(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let model = model(cfg)?;
    let eq = trim(&model, cfg)?;
    let omega: Vec<String> = eq.omega_star().iter().map(|w| format!("{w:.4}")).collect();
    println!("Omega* = [{}] rad/s, residual {:.2e}", omega.join(", "), eq.residual);
    write_json(
        out,
        "equilibrium.json",
        &EquilibriumFile {
            header: HEADER,
            eta: cfg.eta,
            psi: cfg.psi,
            coupling: cfg.coupling,
            equilibrium: Trim::from(&eq),
        },
    )
}

#[derive(Serialize)]
struct AnalysisFile {
    #[serde(flatten)]
    header: Header,
    eta: [f64; 2],
    psi: f64,
    coupling: SpinCoupling,
    equilibrium: Trim,
    report: ControllabilityReport,
}

pub fn analyze(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let model = model(cfg)?;
    let eq = trim(&model, cfg)?;
    let sys = model.as_system()?;
    let report = stlc_check(
        &sys,
        &eq.q_star.to_vector(),
        &eq.u_star,
        cfg.degree,
        &cfg.diff_config(),
        &cfg.tolerances,
    )?;
    println!(
        "good rank {}/{} (all brackets {}), STLA {}, STLC {}",
        report.good_rank,
        report.state_dim,
        report.rank,
        report.stla,
        report.stlc.map_or("n/a".to_string(), |b| b.to_string()),
    );
    write_json(
        out,
        "controllability.json",
        &AnalysisFile {
            header: HEADER,
            eta: cfg.eta,
            psi: cfg.psi,
            coupling: cfg.coupling,
            equilibrium: Trim::from(&eq),
            report,
        },
    )
}

#[derive(Serialize)]
struct SimulationSummary {
    #[serde(flatten)]
    header: Header,
    dt: f64,
    steps: usize,
    horizon: f64,
    energy_drift: f64,
    jacobi_drift: f64,
    gamma_error: f64,
    zeta_error: f64,
    orthonormality_error: f64,
    final_state: Vec<f64>,
    final_position: [f64; 3],
    cross_validation: Option<CrossValidation>,
}

pub fn simulate(cfg: &RunConfig, out: &Path, oracle: bool) -> Result<(), Failure> {
    let model = model(cfg)?;
    let needs_trim = cfg.initial.is_none() || cfg.schedule.is_none();
    let eq = if needs_trim { Some(trim(&model, cfg)?) } else { None };
    let x0 = match (&cfg.initial, &eq) {
        (Some(x), _) => DVector::from_column_slice(x),
        (None, Some(eq)) => eq.q_star.to_vector(),
        (None, None) => unreachable!(),
    };
    if x0.len() != model.state_dim() {
        return Err(amctl::Error::Dimension {
            expected: model.state_dim(),
            got: x0.len(),
        }
        .into());
    }
    let schedule = match (&cfg.schedule, &eq) {
        (Some(s), _) => s.clone(),
        (None, Some(eq)) => InputSchedule::constant(&eq.u_star),
        (None, None) => unreachable!(),
    };
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let s0 = Vector3::from(cfg.position);
    let traj: Trajectory = integrate(&model, &x0, &schedule, cfg.dt, steps, &s0)?;

    let csv = File::create(out.join("trajectory.csv"))
        .map_err(|e| Failure::config("Io", format!("trajectory.csv: {e}")))?;
    traj.write_csv(BufWriter::new(csv))
        .map_err(|e| Failure::config("Io", format!("trajectory.csv: {e}")))?;

    let cross_validation = if oracle {
        Some(cross_validate(&model, &x0, &s0, &schedule, cfg.dt, steps)?)
    } else {
        None
    };
    let last = traj.positions.last().copied().unwrap_or(s0);
    let summary = SimulationSummary {
        header: HEADER,
        dt: cfg.dt,
        steps,
        horizon: steps as f64 * cfg.dt,
        energy_drift: traj.energy_drift(),
        jacobi_drift: traj.jacobi_drift(),
        gamma_error: traj.gamma_error(),
        zeta_error: traj.zeta_error(),
        orthonormality_error: traj.orthonormality_error(),
        final_state: traj.states.last().map(to_vec).unwrap_or_default(),
        final_position: last.into(),
        cross_validation,
    };
    println!(
        "{steps} steps, final position [{:.6}, {:.6}, {:.6}] m, energy drift {:.2e}",
        last.x, last.y, last.z, summary.energy_drift
    );
    write_json(out, "summary.json", &summary)
}

#[derive(Serialize)]
struct DegreeCount {
    degree: usize,
    count: usize,
    /// dimension of that layer of the free Lie algebra
    expected: usize,
}

#[derive(Serialize)]
struct Entry {
    bracket: String,
    degree: usize,
    class: BracketClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fd_error: Option<f64>,
}

#[derive(Serialize)]
struct BracketsFile {
    #[serde(flatten)]
    header: Header,
    /// number of control fields
    m: usize,
    degree: usize,
    counts: Vec<DegreeCount>,
    brackets: Vec<Entry>,
}

pub fn brackets(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let model = model(cfg)?;
    let m = model.input_dim();
    let basis = enumerate_brackets(m, cfg.degree)?;
    let mut entries: Vec<Entry> = basis
        .iter()
        .map(|b| Entry {
            bracket: b.to_string(),
            degree: b.degree(),
            class: b.class(),
            norm: None,
            fd_error: None,
        })
        .collect();
    if cfg.evaluate {
        let eq = trim(&model, cfg)?;
        let sys = model.as_system()?.shifted(&eq.u_star)?;
        let values = evaluate_brackets(&sys, &eq.q_star.to_vector(), cfg.degree, &cfg.diff_config())?;
        for (entry, v) in entries.iter_mut().zip(&values) {
            entry.norm = Some(v.value.norm());
            entry.fd_error = Some(v.error);
        }
    }
    let counts: Vec<DegreeCount> = (1..=cfg.degree)
        .map(|d| DegreeCount {
            degree: d,
            count: basis.iter().filter(|b| b.degree() == d).count(),
            expected: witt_dimension(m + 1, d),
        })
        .collect();
    for c in &counts {
        println!("degree {}: {} brackets", c.degree, c.count);
    }
    write_json(
        out,
        "brackets.json",
        &BracketsFile {
            header: HEADER,
            m,
            degree: cfg.degree,
            counts,
            brackets: entries,
        },
    )
}
