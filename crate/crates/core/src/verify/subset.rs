//! Exhaustive and greedy searches for a tightly concentrated subset.

use itertools::Itertools;

use super::{Result, VerifyError};
use crate::linalg::{self, ParamVector};

/// Largest input count the exhaustive search accepts.
pub const MAX_BRUTE_FORCE_K: usize = 14;

const SUBSET_EIG_TOL: f64 = 1e-12;

fn subset_lambda(points: &[ParamVector], idx: &[usize]) -> Result<f64> {
    let pts: Vec<&[f64]> = idx.iter().map(|&i| points[i].as_slice()).collect();
    Ok(linalg::sample_cov_lambda_max(&pts, SUBSET_EIG_TOL)?.value)
}

fn check_size(k: usize, size: usize) -> Result<()> {
    if size == 0 || size > k {
        return Err(VerifyError::InvalidArgument(format!(
            "subset size {size} outside 1..={k}"
        )));
    }
    Ok(())
}

/// The `size`-subset whose covariance about its own mean has the smallest
/// top eigenvalue, found by enumerating all C(K, size) candidates. Ties
/// keep the lexicographically first subset.
pub fn brute_force_best_subset(points: &[ParamVector], size: usize) -> Result<(Vec<usize>, f64)> {
    let k = points.len();
    if k > MAX_BRUTE_FORCE_K {
        return Err(VerifyError::TooLarge {
            k,
            max: MAX_BRUTE_FORCE_K,
        });
    }
    check_size(k, size)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for idx in (0..k).combinations(size) {
        let lambda = subset_lambda(points, &idx)?;
        if best.as_ref().is_none_or(|(_, b)| lambda < *b) {
            best = Some((idx, lambda));
        }
    }
    Ok(best.expect("at least one subset"))
}

/// Trims the point with the largest squared projection on the current top
/// eigenvector until `size` points remain. The result upper-bounds the
/// exhaustive optimum.
pub fn greedy_subset(points: &[ParamVector], size: usize) -> Result<(Vec<usize>, f64)> {
    check_size(points.len(), size)?;
    let mut idx: Vec<usize> = (0..points.len()).collect();
    while idx.len() > size {
        let pts: Vec<&[f64]> = idx.iter().map(|&i| points[i].as_slice()).collect();
        let center = linalg::mean(&pts)?;
        let top = linalg::cov_lambda_max(&pts, &vec![1.0; pts.len()], &center, SUBSET_EIG_TOL)?;
        let v = top.vector.as_slice();
        let worst = pts
            .iter()
            .enumerate()
            .map(|(pos, p)| {
                let proj: f64 = p
                    .iter()
                    .zip(center.as_slice())
                    .zip(v)
                    .map(|((a, c), w)| (a - c) * w)
                    .sum();
                (pos, proj * proj)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty")
            .0;
        idx.remove(worst);
    }
    let lambda = subset_lambda(points, &idx)?;
    Ok((idx, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<ParamVector> {
        v.iter().map(|x| ParamVector::new(vec![*x]).unwrap()).collect()
    }

    #[test]
    fn brute_force_examples() {
        let (_, l) = brute_force_best_subset(&pts(&[2.0, 2.0, 2.0]), 2).unwrap();
        assert_eq!(l, 0.0);
        let (s, l) = brute_force_best_subset(&pts(&[0.0, 0.1, 10.0]), 2).unwrap();
        assert_eq!(s, vec![0, 1]);
        assert!((l - 0.0025).abs() < 1e-15);
        let p = pts(&[0.0, 1.0, 5.0]);
        let (s, l) = brute_force_best_subset(&p, 3).unwrap();
        assert_eq!(s, vec![0, 1, 2]);
        let direct = linalg::sample_cov_lambda_max(&p, 1e-12).unwrap().value;
        assert_eq!(l, direct);
        assert!(matches!(
            brute_force_best_subset(&pts(&[0.0; 15]), 3),
            Err(VerifyError::TooLarge { .. })
        ));
    }

    #[test]
    fn greedy_drops_the_outlier() {
        let (s, _) = greedy_subset(&pts(&[0.0, 0.1, 10.0, 0.05]), 3).unwrap();
        assert_eq!(s, vec![0, 1, 3]);
    }
}
