//! Seeded robust-mean instances: a concentrated honest cloud plus corrupt
//! points drawn from the attack catalog.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{subset, Result, VerifyError};
use crate::attacks::{self, AttackKind};
use crate::linalg::{self, ParamVector};
use crate::rage::{self, RageConfig};
use crate::rng::{self, SimRng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub points: Vec<ParamVector>,
    /// Indices of the honest points, ascending.
    pub honest: Vec<usize>,
    /// λ_max of the honest points' covariance about their own mean.
    pub sigma0_sq: f64,
    pub attack: AttackKind,
}

impl Instance {
    /// ε̃ = 1 − |honest|/K.
    pub fn eps_tilde(&self) -> f64 {
        1.0 - self.honest.len() as f64 / self.points.len() as f64
    }

    pub fn honest_mean(&self) -> Result<ParamVector> {
        let pts: Vec<&[f64]> = self.honest.iter().map(|&i| self.points[i].as_slice()).collect();
        Ok(linalg::mean(&pts)?)
    }

    /// Filter config with this instance's σ0² and α = 1 − ε̃.
    pub fn rage_config(&self) -> RageConfig {
        RageConfig::new(self.sigma0_sq, (1.0 - self.eps_tilde()).max(0.75))
    }
}

fn gaussian(rng: &mut SimRng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Rounds to a multiple of 2^-40 so sums are exact in 128-bit fixed point.
fn quantize(v: f64) -> f64 {
    let q = (1u64 << 40) as f64;
    (v * q).round() / q
}

/// Corruption-free instance: `k` points around a random center, entries
/// quantized to multiples of 2^-40.
pub fn clean_instance(seed: u64, k: usize, d: usize) -> Result<Instance> {
    let mut rng = rng::stream(seed, Stream::Instance, &[0]);
    let spread = 10f64.powf(rng.gen_range(-2.0..2.0));
    let center = gaussian(&mut rng, d, 10.0);
    let points = (0..k)
        .map(|_| {
            let e = gaussian(&mut rng, d, spread);
            ParamVector::new(center.iter().zip(e).map(|(c, x)| quantize(c + x)).collect())
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let sigma0_sq = linalg::sample_cov_lambda_max(&points, 1e-12)?.value;
    Ok(Instance {
        points,
        honest: (0..k).collect(),
        sigma0_sq,
        attack: AttackKind::None,
    })
}

/// The corrupt-kind cycle used by [`adversarial_family`].
pub const ATTACK_CYCLE: [&str; 5] = [
    "erasure_zero",
    "sign_flip",
    "gaussian_blowup",
    "colluding_shift",
    "top_eigen_drift",
];

/// `k` points, ⌊ε̃k⌋ of them corrupt with `kind` at `magnitude` (in units of
/// the honest σ0 for the additive kinds, a plain multiplier for sign flips).
pub fn adversarial_instance(
    seed: u64,
    k: usize,
    d: usize,
    eps_tilde: f64,
    kind: &str,
    magnitude: f64,
) -> Result<Instance> {
    let mut rng = rng::stream(seed, Stream::Instance, &[1]);
    let m = attacks::corrupt_count(k, eps_tilde);
    if m * 4 > k || k < 2 {
        return Err(VerifyError::InvalidArgument(format!(
            "instance needs 2 <= K and at most K/4 corrupt (K = {k}, corrupt = {m})"
        )));
    }
    let spread = 10f64.powf(rng.gen_range(-1.0..1.0));
    let center = ParamVector::new(gaussian(&mut rng, d, 10.0))?;
    let mut positions: Vec<usize> = (0..k).collect();
    for i in 0..m {
        let j = rng.gen_range(i..k);
        positions.swap(i, j);
    }
    let mut corrupt: Vec<usize> = positions[..m].to_vec();
    corrupt.sort_unstable();

    let mut reports = BTreeMap::new();
    for i in 0..k {
        let e = gaussian(&mut rng, d, spread);
        reports.insert(i, center.add(&ParamVector::new(e)?)?);
    }
    let honest: Vec<usize> = (0..k).filter(|i| corrupt.binary_search(i).is_err()).collect();
    let honest_pts: Vec<&[f64]> = honest.iter().map(|&i| reports[&i].as_slice()).collect();
    let sigma0_sq = linalg::sample_cov_lambda_max(&honest_pts, 1e-12)?.value;
    let sigma0 = sigma0_sq.sqrt();
    let attack = match kind {
        "sign_flip" => AttackKind::SignFlip { scale: magnitude },
        other => AttackKind::from_name(other, magnitude * sigma0)?,
    };
    let out = attacks::corrupt_reports(&center, &reports, &corrupt, &attack, &mut rng)?;
    Ok(Instance {
        points: out.into_values().collect(),
        honest,
        sigma0_sq,
        attack,
    })
}

/// `count` instances cycling through [`ATTACK_CYCLE`] with magnitudes
/// log-uniform in [10⁻¹, 10⁴].
pub fn adversarial_family(
    base_seed: u64,
    count: usize,
    k: usize,
    d: usize,
    eps_tilde: f64,
) -> Result<Vec<Instance>> {
    (0..count)
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            let mut rng = rng::stream(seed, Stream::Instance, &[2]);
            let magnitude = 10f64.powf(rng.gen_range(-1.0..4.0));
            adversarial_instance(seed, k, d, eps_tilde, ATTACK_CYCLE[i % ATTACK_CYCLE.len()], magnitude)
        })
        .collect()
}

/// Small instances for the exhaustive comparison: K in 5..=12, d in 1..=3,
/// ⌊K/4⌋ corrupt points.
pub fn small_family(base_seed: u64, count: usize) -> Result<Vec<Instance>> {
    (0..count)
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            let mut rng = rng::stream(seed, Stream::Instance, &[3]);
            let k = rng.gen_range(5..=12);
            let d = rng.gen_range(1..=3);
            let eps = (k / 4) as f64 / k as f64;
            let magnitude = 10f64.powf(rng.gen_range(-1.0..4.0));
            adversarial_instance(seed, k, d, eps, ATTACK_CYCLE[i % ATTACK_CYCLE.len()], magnitude)
        })
        .collect()
}

/// ‖ĝ − honest mean‖ / (σ0·√ε̃) for one instance.
pub fn robustness_ratio(inst: &Instance) -> Result<f64> {
    let report = rage::rage_filter(&inst.points, &inst.rage_config())?;
    let err = report.estimate.dist_sq(&inst.honest_mean()?)?.sqrt();
    Ok(scaled(err, inst.sigma0_sq, inst.eps_tilde()))
}

fn scaled(err: f64, sigma0_sq: f64, eps: f64) -> f64 {
    let scale = (sigma0_sq * eps).sqrt();
    if err == 0.0 {
        0.0
    } else if scale > 0.0 {
        err / scale
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub rage_error: f64,
    pub oracle_error_scale: f64,
    pub ratio: f64,
    /// The exhaustive search's best subset.
    pub subset: Vec<usize>,
}

/// Compares the filter with the mean of the exhaustively best
/// `|honest|`-subset.
pub fn rage_oracle_compare(
    points: &[ParamVector],
    honest: &[usize],
    cfg: &RageConfig,
) -> Result<OracleComparison> {
    let (subset, _) = subset::brute_force_best_subset(points, honest.len())?;
    let sub: Vec<&[f64]> = subset.iter().map(|&i| points[i].as_slice()).collect();
    let oracle = linalg::mean(&sub)?;
    let report = rage::rage_filter(points, cfg)?;
    let rage_error = report.estimate.dist_sq(&oracle)?.sqrt();
    let eps = 1.0 - honest.len() as f64 / points.len() as f64;
    let oracle_error_scale = (cfg.sigma0_sq * eps).sqrt();
    Ok(OracleComparison {
        rage_error,
        oracle_error_scale,
        ratio: scaled(rage_error, cfg.sigma0_sq, eps),
        subset,
    })
}
