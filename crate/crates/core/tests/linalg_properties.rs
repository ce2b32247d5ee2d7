use byzsim_core::linalg::{self, ParamVector, SymMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi eigenvalue sweep on a dense symmetric matrix.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

fn dense_sample_cov(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len() as f64;
    let d = points[0].len();
    let m: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let mut c = vec![vec![0.0; d]; d];
    for p in points {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (p[i] - m[i]) * (p[j] - m[j]) / n;
            }
        }
    }
    c
}

fn point_cloud() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=4, 2usize..=8).prop_flat_map(|(d, k)| {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), k)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sample_cov_matches_jacobi(points in point_cloud()) {
        let dense = dense_sample_cov(&points);
        let expect = jacobi_eigenvalues(dense).into_iter().fold(f64::MIN, f64::max).max(0.0);
        let got = linalg::sample_cov_lambda_max(&points, 1e-12).unwrap().value;
        prop_assert!((got - expect).abs() <= 1e-6 * expect.max(1e-9), "{got} vs {expect}");
    }

    #[test]
    fn cov_invariant_under_permutation_and_weight_scale(
        points in point_cloud(),
        scale in 1e-3f64..1e3,
        rot in 0usize..8,
    ) {
        let k = points.len();
        let mut rng = ChaCha8Rng::seed_from_u64(rot as u64);
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..2.0)).collect();
        let center = ParamVector::new(vec![0.5; points[0].len()]).unwrap();
        let base = linalg::cov_lambda_max(&points, &weights, &center, 1e-12).unwrap().value;

        let mut perm: Vec<usize> = (0..k).collect();
        perm.rotate_left(rot % k);
        let pp: Vec<Vec<f64>> = perm.iter().map(|&i| points[i].clone()).collect();
        let pw: Vec<f64> = perm.iter().map(|&i| weights[i]).collect();
        let permuted = linalg::cov_lambda_max(&pp, &pw, &center, 1e-12).unwrap().value;
        let sw: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let scaled = linalg::cov_lambda_max(&points, &sw, &center, 1e-12).unwrap().value;
        let tol = 1e-7 * base.max(1e-12);
        prop_assert!((permuted - base).abs() <= tol);
        prop_assert!((scaled - base).abs() <= tol);
    }
}

#[test]
fn top_eigenvalue_dominates_rayleigh_quotients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let d = 2 + trial % 6;
        let rows: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        // B Bᵀ is positive semidefinite, so its top eigenvalue is the dominant one.
        let gram: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| linalg::dot(&rows[i], &rows[j])).collect())
            .collect();
        let m = SymMatrix::from_rows(&gram).unwrap();
        let top = linalg::top_eigenpair(|v| m.apply(v), d, 1e-12, 100_000, trial as u64).unwrap();
        for _ in 0..100 {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = linalg::dot(&v, &v).sqrt();
            let u: Vec<f64> = v.iter().map(|x| x / n).collect();
            assert!(m.quad_form(&u) <= top.value * (1.0 + 1e-8) + 1e-12);
        }
    }
}

#[test]
fn hand_computed_eigenpairs() {
    let m = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
    let top = linalg::top_eigenpair(|v| m.apply(v), 2, 1e-12, 10_000, 0).unwrap();
    assert!((top.value - 3.0).abs() < 1e-9);
    let v = top.vector.as_slice();
    assert!((v[0].abs() - v[1].abs()).abs() < 1e-6 && v[0] * v[1] > 0.0);

    let pts = [vec![1.0, 0.0], vec![-1.0, 0.0]];
    let r = linalg::cov_lambda_max(&pts, &[1.0, 1.0], &ParamVector::zeros(2), 1e-12).unwrap();
    assert!((r.value - 1.0).abs() < 1e-12);
    assert!((r.vector.as_slice()[0].abs() - 1.0).abs() < 1e-9);
}
