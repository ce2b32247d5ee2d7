//! Input generators shared by the benchmarks.

use byzsim_core::attacks::AttackKind;
use byzsim_core::fedsim::{ExperimentConfig, SamplingPolicy};
use byzsim_core::objectives::SuiteSpec;
use byzsim_core::verify::instances::{self, Instance};

/// A filter input with a fifth of the reports colluding along one direction.
pub fn attacked_instance(k: usize, d: usize) -> Instance {
    instances::adversarial_instance(42, k, d, 0.2, "colluding_shift", 100.0)
        .expect("valid instance parameters")
}

/// A filter input with no outliers, which the filter accepts at round 0.
pub fn clean_instance(k: usize, d: usize) -> Instance {
    instances::clean_instance(42, k, d).expect("valid instance parameters")
}

/// An attacked mini-batch run on the quadratic suite.
pub fn run_config(r: usize, d: usize, t: usize) -> ExperimentConfig {
    ExperimentConfig {
        r,
        k: r,
        h: 4,
        t,
        b: 2,
        eps: 0.2,
        eps_prime: 0.25,
        sampling: SamplingPolicy::All,
        attack: AttackKind::SignFlip { scale: 20.0 },
        x0: vec![3.0],
        objective: SuiteSpec {
            clients: r,
            dim: d,
            ..SuiteSpec::default()
        },
        seed: 1,
        ..ExperimentConfig::default()
    }
}
