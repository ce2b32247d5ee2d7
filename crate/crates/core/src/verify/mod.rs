//! Verification harness: exhaustive oracles, concentration and drift
//! checks, floor fitting and the calibrated constants they rely on.

pub mod calibration;
pub mod checks;
pub mod criteria;
pub mod floor;
pub mod instances;
pub mod subset;
pub mod sweep;

use thiserror::Error;

use crate::fedsim::SimError;
use crate::linalg::LinalgError;
use crate::objectives::ObjectiveError;
use crate::rage::RageError;

pub use calibration::Calibration;
pub use checks::{
    check_claim1, check_concentration_gd, check_concentration_sgd, check_contraction_gd,
    check_drift, check_fact1,
};
pub use criteria::{run_suite, CheckOutcome, SuiteKind, SuiteOptions};
pub use floor::{fit_floor, gamma_bound, gamma_bound_gd, FloorFit, GammaBound, GammaBoundGd};
pub use instances::{rage_oracle_compare, Instance, OracleComparison};
pub use subset::{brute_force_best_subset, greedy_subset};
pub use sweep::SweepAxis;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("exhaustive search limited to K <= {max}, got {k}")]
    TooLarge { k: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("calibration: {0}")]
    Calibration(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Rage(#[from] RageError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Attack(#[from] crate::attacks::AttackError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VerifyError>;
