//! Reduced dynamics of a multirotor carrying a planar two-link arm, and
//! numerical nonlinear-controllability analysis built on iterated Lie
//! brackets.
//!
//! The crate is layered bottom-up:
//!
//! * [`liegroup`]: SO(3) helpers, Euler-angle kinematics and the advected
//!   gravity direction.
//! * [`brackets`]: formal brackets, the Philip Hall basis and Sussmann's
//!   good/bad classification.
//! * [`vectorfield`]: control-affine systems, finite-difference Jacobians and
//!   numerical evaluation of formal brackets.
//! * [`model`]: the aerial-manipulator model (mass matrix, momenta,
//!   connection, wrenches, shape dynamics, equilibria).
//! * [`controllability`]: accessibility (LARC) and Sussmann STLC tests.
//! * [`simulate`]: RK4 integration of the reduced equations, SE(3)
//!   reconstruction and a brute-force Lagrangian oracle.

pub mod brackets;
pub mod controllability;
pub mod error;
pub mod json;
pub mod liegroup;
pub mod model;
pub mod simulate;
pub mod vectorfield;

pub use brackets::{classify, enumerate_brackets, BracketClass, FormalBracket};
pub use controllability::{
    numerical_rank, stla_check, stlc_check, ControllabilityReport, Evaluated, RankInfo, Tolerances,
};
pub use error::{Error, Result};
pub use liegroup::{EulerAngles, Rotation};
pub use model::{AmModel, EquilibriumPoint, MassBlocks, ModelParams, ReducedState, SpinCoupling};
pub use vectorfield::{ControlAffineSystem, DiffConfig};

/// Version string embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
