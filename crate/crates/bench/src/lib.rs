//! Shared fixtures for the criterion benches.

use amctl::{AmModel, EquilibriumPoint, ModelParams};
use nalgebra::Vector2;

/// Default model trimmed at the generic arm pose used throughout the benches.
pub fn default_equilibrium() -> (AmModel, EquilibriumPoint) {
    let model = AmModel::new(ModelParams::default()).expect("default parameters are valid");
    let eq = model
        .find_equilibrium(&Vector2::new(0.4, -0.7), 0.0, None)
        .expect("default equilibrium exists");
    (model, eq)
}
