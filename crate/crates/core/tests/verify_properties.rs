use byzsim_core::linalg::ParamVector;
use byzsim_core::verify::{floor, subset};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gamma_reassembles_from_parts() {
    for (h, sigma, b, kappa, eps, ep, d, k, c) in [
        (1usize, 1.0, 1usize, 0.0, 0.0, 0.1, 1usize, 1usize, 1.0),
        (4, 0.3, 8, 2.0, 0.2, 0.25, 5, 24, 2.23),
        (16, 5.0, 2, 0.7, 0.05, 0.5, 100, 7, 1e-6),
    ] {
        let g = floor::gamma_bound(h, sigma, b, kappa, eps, ep, d, k, c).unwrap();
        let hf = h as f64;
        let s0 = 25.0 * hf * hf * sigma * sigma / (b as f64 * ep) * (1.0 + 4.0 * d as f64 / (3.0 * k as f64))
            + 28.0 * hf * hf * kappa * kappa;
        let ups = c * s0 * (eps + ep);
        let gamma = 3.0 * ups / hf + 11.0 * hf * sigma * sigma / b as f64 + 36.0 * hf * kappa * kappa;
        assert!((g.gamma - gamma).abs() <= 1e-12 * gamma.max(1.0));
        assert!((g.convex_floor(0.5) - 52.0 * gamma).abs() <= 1e-12 * gamma.max(1.0));
        assert!((g.nonconvex_floor() - 4.5 * gamma).abs() <= 1e-12 * gamma.max(1.0));

        let gd = floor::gamma_bound_gd(h, kappa, eps, c).unwrap();
        let gamma_gd = 2.0 * c * hf * kappa * kappa * eps + 25.0 * hf * kappa * kappa;
        assert!((gd.gamma - gamma_gd).abs() <= 1e-12 * gamma_gd.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fit_recovers_rate_and_floor(rho in 0.5f64..0.99, a in 0.5f64..50.0, f in 1e-3f64..1.0, h in 1usize..4) {
        let series: Vec<f64> = (0..=600).map(|t| a * rho.powi(t) + f).collect();
        let fit = floor::fit_floor(&series, h).unwrap();
        prop_assert!((fit.rho - rho).abs() <= 0.01 * rho, "rho {} vs {rho}", fit.rho);
        prop_assert!((fit.floor - f).abs() <= 0.01 * f, "floor {} vs {f}", fit.floor);
    }

    #[test]
    fn brute_force_never_worse_than_greedy(seed in 0u64..1000, k in 4usize..10, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<ParamVector> = (0..k)
            .map(|_| ParamVector::new((0..d).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap())
            .collect();
        let size = k - k / 4;
        let (bi, bl) = subset::brute_force_best_subset(&pts, size).unwrap();
        let (gi, gl) = subset::greedy_subset(&pts, size).unwrap();
        prop_assert_eq!(bi.len(), size);
        prop_assert_eq!(gi.len(), size);
        prop_assert!(bl <= gl * (1.0 + 1e-9) + 1e-12);
    }
}

#[test]
fn spearman_examples() {
    assert_eq!(floor::spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
    assert_eq!(floor::spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
    assert_eq!(floor::spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), 0.0);
}
