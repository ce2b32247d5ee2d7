use byzsim_core::linalg::{self, ParamVector};
use byzsim_core::rage::{self, RageConfig, SaddleSolver};
use byzsim_core::verify::instances;
use proptest::prelude::*;

fn pv(v: &[f64]) -> ParamVector {
    ParamVector::new(v.to_vec()).unwrap()
}

fn cloud() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=4, 4usize..=16).prop_flat_map(|(d, k)| {
        prop::collection::vec(prop::collection::vec(-100.0f64..100.0, d), k)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn terminates_within_k_rounds(points in cloud(), s0 in 0.0f64..10.0) {
        let pts: Vec<ParamVector> = points.iter().map(|p| pv(p)).collect();
        let cfg = RageConfig::new(s0, 0.8);
        match rage::rage_filter(&pts, &cfg) {
            Ok(rep) => {
                prop_assert!(rep.rounds <= pts.len());
                prop_assert!(!rep.active_set.is_empty());
                prop_assert_eq!(rep.tau_history.len(), rep.rounds + 1);
            }
            Err(rage::RageError::EmptyActiveSet) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn permutation_equivariance(points in cloud(), shift in 1usize..16, s0 in 0.0f64..50.0) {
        let pts: Vec<ParamVector> = points.iter().map(|p| pv(p)).collect();
        let k = pts.len();
        let perm: Vec<usize> = (0..k).map(|i| (i + shift) % k).collect();
        let permuted: Vec<ParamVector> = perm.iter().map(|&i| pts[i].clone()).collect();
        let cfg = RageConfig::new(s0, 0.8);
        let (a, b) = (rage::rage_filter(&pts, &cfg), rage::rage_filter(&permuted, &cfg));
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a.estimate, &b.estimate);
                for (pos, &orig) in perm.iter().enumerate() {
                    prop_assert_eq!(a.final_weights[orig].to_bits(), b.final_weights[pos].to_bits());
                }
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "only one ordering failed"),
        }
    }
}

#[test]
fn uniform_trace_removes_single_outlier() {
    let m = 1e6;
    let pts: Vec<ParamVector> = [0.0, 0.0, 0.0, m].iter().map(|x| pv(&[*x])).collect();
    let cfg = RageConfig {
        solver: SaddleSolver::UniformW,
        ..RageConfig::default()
    };
    let rep = rage::rage_filter(&pts, &cfg).unwrap();
    let tau0 = &rep.tau_history[0];
    let q = m * m / 16.0;
    for i in 0..3 {
        assert!((tau0[i] - q).abs() <= 1e-12 * q);
    }
    assert!((tau0[3] - 9.0 * q).abs() <= 1e-12 * q);
    assert_eq!(rep.active_set, vec![0, 1, 2]);
    assert_eq!(rep.estimate, pv(&[0.0]));
}

#[test]
fn round_zero_pass_is_the_plain_mean() {
    for seed in 0..30 {
        let inst = instances::clean_instance(500 + seed, 6 + seed as usize, 1 + seed as usize % 5);
        let inst = inst.unwrap();
        let rep = rage::rage_filter(&inst.points, &inst.rage_config()).unwrap();
        assert_eq!(rep.rounds, 0);
        assert_eq!(rep.estimate, linalg::mean(&inst.points).unwrap());
    }
}

/// Two far corrupt points among ten; honest points on a circle of radius
/// σ0 around the origin.
#[test]
fn two_corrupt_points_in_the_plane() {
    let sigma0: f64 = 1.0;
    let mut pts: Vec<ParamVector> = (0..8)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / 8.0;
            pv(&[sigma0 * a.cos(), sigma0 * a.sin()])
        })
        .collect();
    pts.push(pv(&[100.0, 100.0]));
    pts.push(pv(&[100.0, 100.0]));
    let honest_mean = linalg::mean(&pts[..8]).unwrap();
    let honest_cov = linalg::sample_cov_lambda_max(&pts[..8], 1e-12).unwrap().value;
    let cfg = RageConfig::new(honest_cov, 0.8);
    let rep = rage::rage_filter(&pts, &cfg).unwrap();
    let err = rep.estimate.dist_sq(&honest_mean).unwrap().sqrt();
    assert!(err <= 10.0 * honest_cov.sqrt() * 0.2f64.sqrt(), "error {err}");
    assert!(!rep.active_set.contains(&8) && !rep.active_set.contains(&9));
}

/// Growing the corrupt norm never pushes the error past the calibrated
/// scale: strong attacks are removed outright.
#[test]
fn attack_strength_saturates() {
    for seed in 0..5 {
        let mut worst: f64 = 0.0;
        for mag in [1e-1, 1.0, 10.0, 1e2, 1e3, 1e4, 1e6] {
            let inst = instances::adversarial_instance(2000 + seed, 20, 4, 0.2, "colluding_shift", mag).unwrap();
            worst = worst.max(instances::robustness_ratio(&inst).unwrap());
        }
        assert!(worst <= 10.0, "seed {seed}: ratio {worst}");
    }
}

#[test]
fn threshold_formulas() {
    let s = rage::sigma0_sgd(2, 1.0, 1, 0.25, 4, 8, 1.0).unwrap();
    assert!((s - (400.0 * (1.0 + 2.0 / 3.0) + 112.0)).abs() < 1e-9);
    assert_eq!(rage::sigma0_gd(1, 1.0), 11.0);
    assert_eq!(rage::sigma0_gd(3, 2.0), 396.0);
}
