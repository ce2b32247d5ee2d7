use std::collections::BTreeMap;

use byzsim_core::attacks::{self, AttackKind};
use byzsim_core::fedsim::{self, Aggregator, ExperimentConfig, SamplingPolicy};
use byzsim_core::linalg::ParamVector;
use byzsim_core::objectives::SuiteSpec;
use byzsim_core::rng::{self, Stream};
use proptest::prelude::*;

fn kinds() -> Vec<AttackKind> {
    AttackKind::NAMES
        .iter()
        .map(|n| AttackKind::from_name(n, 3.0).unwrap())
        .collect()
}

fn report_set() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<bool>)> {
    (2usize..=4, 3usize..=10).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn honest_reports_pass_through_and_colluders_agree((vals, mask) in report_set(), seed in 0u64..100) {
        let reports: BTreeMap<usize, ParamVector> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| (3 * i + 1, ParamVector::new(v.clone()).unwrap()))
            .collect();
        let corrupt: Vec<usize> = reports.keys().zip(&mask).filter(|(_, m)| **m).map(|(r, _)| *r).collect();
        let anchor = ParamVector::zeros(vals[0].len());
        for kind in kinds() {
            let mut rng = rng::stream(seed, Stream::Attack, &[0]);
            let out = attacks::corrupt_reports(&anchor, &reports, &corrupt, &kind, &mut rng).unwrap();
            prop_assert_eq!(out.len(), reports.len());
            for (r, v) in &reports {
                if corrupt.binary_search(r).is_err() {
                    let bits = |p: &ParamVector| p.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                    prop_assert_eq!(bits(&out[r]), bits(v));
                }
            }
            if matches!(kind, AttackKind::ColludingShift { .. } | AttackKind::TopEigenDrift { .. }) {
                let mut it = corrupt.iter().map(|r| &out[r]);
                if let Some(first) = it.next() {
                    for other in it {
                        prop_assert_eq!(first, other);
                    }
                }
            }
        }
    }
}

#[test]
fn sign_flip_reflects_through_anchor() {
    let anchor = ParamVector::new(vec![1.0, -1.0]).unwrap();
    let reports: BTreeMap<usize, ParamVector> =
        [(0, vec![2.0, 0.0]), (1, vec![3.0, 1.0])].into_iter().map(|(i, v)| (i, ParamVector::new(v).unwrap())).collect();
    let mut rng = rng::stream(0, Stream::Attack, &[]);
    let out = attacks::corrupt_reports(&anchor, &reports, &[1], &AttackKind::SignFlip { scale: 2.0 }, &mut rng).unwrap();
    assert_eq!(out[&1].as_slice(), &[-3.0, -5.0]);
}

/// Without an attack, a RAGE run whose filter never removes anything equals
/// the same run with the plain mean.
#[test]
fn clean_rage_run_equals_mean_run() {
    let cfg = ExperimentConfig {
        r: 8,
        k: 8,
        h: 2,
        t: 40,
        b: 2,
        sampling: SamplingPolicy::All,
        x0: vec![1.5],
        objective: SuiteSpec {
            clients: 8,
            dim: 3,
            ..SuiteSpec::default()
        },
        seed: 4,
        ..ExperimentConfig::default()
    };
    let rage = fedsim::run(&cfg).unwrap();
    assert!(rage.syncs.iter().all(|s| s.rounds == 0 && s.removed == 0));
    let mean = fedsim::run(&ExperimentConfig {
        aggregator: Aggregator::Mean,
        ..cfg
    })
    .unwrap();
    for (a, b) in rage.rows.iter().zip(&mean.rows) {
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a.dist_sq.map(f64::to_bits), b.dist_sq.map(f64::to_bits));
    }
}
