use std::path::Path;

use amctl::simulate::InputSchedule;
use amctl::{DiffConfig, ModelParams, SpinCoupling, Tolerances};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// One run's inputs. Every key is optional; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub coupling: SpinCoupling,
    /// shape angles at which to trim, rad
    pub eta: [f64; 2],
    /// heading, rad
    pub psi: f64,
    pub degree: usize,
    pub tolerances: Tolerances,
    /// overrides `high_order`
    pub diff: Option<DiffConfig>,
    pub high_order: bool,
    pub dt: f64,
    pub horizon: f64,
    /// defaults to holding the trim input
    pub schedule: Option<InputSchedule>,
    /// full reduced state vector; defaults to the trim state
    pub initial: Option<Vec<f64>>,
    /// inertial start position, m
    pub position: [f64; 3],
    /// `brackets` also evaluates each element at the trim point
    pub evaluate: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            coupling: SpinCoupling::Linear,
            eta: [0.4, -0.7],
            psi: 0.0,
            degree: 3,
            tolerances: Tolerances::default(),
            diff: None,
            high_order: false,
            dt: 1e-3,
            horizon: 1.0,
            schedule: None,
            initial: None,
            position: [0.0; 3],
            evaluate: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config("Io", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::config("ConfigParse", format!("{}: {e}", path.display())))
    }

    pub fn diff_config(&self) -> DiffConfig {
        match self.diff {
            Some(d) => d,
            None if self.high_order => DiffConfig::high_order(),
            None => DiffConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Failure::config("InvalidParameter", format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Failure::config(
                "InvalidParameter",
                format!("horizon must be non-negative, got {}", self.horizon),
            ));
        }
        let t = &self.tolerances;
        if [t.rank_rel, t.annihilation, t.drift, t.noise].iter().any(|&x| !(x > 0.0)) {
            return Err(Failure::config("InvalidParameter", "tolerances must be positive".into()));
        }
        Ok(())
    }
}
