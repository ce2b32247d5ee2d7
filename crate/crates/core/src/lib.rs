//! Deterministic simulator for Byzantine-resilient federated local SGD.
//!
//! Clients run `H` local gradient steps between synchronizations; at each
//! synchronization the server turns every report into an accumulated
//! gradient and aggregates them with [`rage::rage_filter`], a spectral
//! filter that removes the points responsible for excess variance. The
//! [`verify`] module holds the harness that checks the simulator against
//! closed forms, exhaustive oracles and the theoretical error floors.
//!
//! All randomness derives from one master seed through [`rng::stream`], so
//! a config and seed pin every output bit.

pub mod attacks;
pub mod fedsim;
pub mod linalg;
pub mod objectives;
pub mod rage;
pub mod rng;
pub mod verify;

pub use attacks::{AttackKind, AttackSpec};
pub use fedsim::{
    Aggregator, ExperimentConfig, MetricsRow, RunOutput, SamplingPolicy, SimError, StepSize,
    SyncRecord,
};
pub use linalg::{LinalgError, ParamVector, SymMatrix};
pub use objectives::{ObjectiveKind, ObjectiveSuite, SuiteSpec};
pub use rage::{rage_filter, RageConfig, RageReport, SaddleSolver};
pub use verify::{Calibration, CheckOutcome, FloorFit, SuiteKind, SuiteOptions, SweepAxis};
