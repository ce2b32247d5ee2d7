//! Monte-Carlo and deterministic checks of the window-level bounds.

use rayon::prelude::*;
use rand_distr::{Distribution, StandardNormal};

use super::{subset, Result, VerifyError};
use crate::fedsim::{self, ExperimentConfig, SamplingPolicy, StepSize};
use crate::linalg::{self, ParamVector};
use crate::objectives::{self, ObjectiveSuite};
use crate::rage;
use crate::rng::{self, Stream};

fn exact_constants(suite: &ObjectiveSuite) -> Result<(f64, f64)> {
    match (suite.exact_sigma, suite.exact_kappa) {
        (Some(s), Some(k)) => Ok((s, k)),
        _ => Err(VerifyError::InvalidArgument(
            "check needs a suite with exact sigma and kappa".into(),
        )),
    }
}

/// Accumulated gradients `(x − x_r^{H})/η` of `clients` over one window.
fn window_accumulations(
    suite: &ObjectiveSuite,
    anchor: &ParamVector,
    clients: &[usize],
    h: usize,
    eta: f64,
    b: Option<usize>,
    seed: u64,
    draw: u64,
) -> Result<Vec<ParamVector>> {
    clients
        .iter()
        .map(|&r| {
            let mut crng = rng::stream(seed, Stream::Client, &[draw, r as u64]);
            let tr = fedsim::local_trajectory(&suite.clients[r], anchor, h, eta, b, &mut crng)?;
            Ok(fedsim::accumulate_report(anchor, &tr[h - 1], eta)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub seeds: usize,
    pub holds: usize,
    pub fraction: f64,
    /// Largest observed λ_max / σ0².
    pub max_ratio: f64,
    pub bound: f64,
}

/// Per seed: sample `k` clients, run one mini-batch window from `anchor`
/// with η = 1/(8HL), greedily trim to a (1−ε')-fraction and compare the
/// trimmed covariance λ_max with σ0².
#[allow(clippy::too_many_arguments)]
pub fn check_concentration_sgd(
    suite: &ObjectiveSuite,
    anchor: &ParamVector,
    h: usize,
    b: usize,
    eps_prime: f64,
    k: usize,
    seeds: usize,
    base_seed: u64,
) -> Result<ConcentrationReport> {
    let (sigma, kappa) = exact_constants(suite)?;
    let r = suite.num_clients();
    if k > r || k < 2 {
        return Err(VerifyError::InvalidArgument(format!("need 2 <= K <= R, got K = {k}")));
    }
    let bound = rage::sigma0_sgd(h, sigma, b, eps_prime, suite.dim(), k, kappa)?;
    let eta = 1.0 / (8.0 * h as f64 * suite.smoothness);
    let keep = ((1.0 - eps_prime) * k as f64 - 1e-9).ceil() as usize;
    let lambdas = (0..seeds as u64)
        .into_par_iter()
        .map(|s| {
            let mut srng = rng::stream(base_seed, Stream::Sampling, &[s]);
            let sampled = fedsim::sample_clients(r, k, SamplingPolicy::UniformRandom, 0, &mut srng)?;
            let acc = window_accumulations(suite, anchor, &sampled, h, eta, Some(b), base_seed, s)?;
            Ok(subset::greedy_subset(&acc, keep.max(1))?.1)
        })
        .collect::<Result<Vec<f64>>>()?;
    let holds = lambdas.iter().filter(|l| **l <= bound).count();
    let max_ratio = lambdas
        .iter()
        .map(|l| if bound > 0.0 { l / bound } else if *l > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max);
    Ok(ConcentrationReport {
        seeds,
        holds,
        fraction: holds as f64 / seeds.max(1) as f64,
        max_ratio,
        bound,
    })
}

/// Full-batch analog: λ_max of all R accumulated full gradients over one
/// window with η = 1/(5HL), against 11H²κ². Returns (λ_max, bound).
pub fn check_concentration_gd(
    suite: &ObjectiveSuite,
    anchor: &ParamVector,
    h: usize,
) -> Result<(f64, f64)> {
    let (_, kappa) = exact_constants(suite)?;
    let eta = 1.0 / (5.0 * h as f64 * suite.smoothness);
    let all: Vec<usize> = (0..suite.num_clients()).collect();
    let acc = window_accumulations(suite, anchor, &all, h, eta, None, 0, 0)?;
    let lambda = if acc.len() < 2 {
        0.0
    } else {
        linalg::sample_cov_lambda_max(&acc, 1e-12)?.value
    };
    Ok((lambda, rage::sigma0_gd(h, kappa)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    /// Largest Monte-Carlo mean of the window drift over client pairs.
    pub max_mean: f64,
    pub bound: f64,
    pub pairs: usize,
    pub violations: usize,
}

/// Mean over `seeds` windows of `Σ_{t∈window} ‖x_r^t − x_s^t‖²` for every
/// client pair, against 7H³η²(σ²/b + 3κ²) with η = 1/(8HL).
pub fn check_drift(
    suite: &ObjectiveSuite,
    anchor: &ParamVector,
    h: usize,
    b: usize,
    seeds: usize,
    base_seed: u64,
) -> Result<DriftReport> {
    let (sigma, kappa) = exact_constants(suite)?;
    let eta = 1.0 / (8.0 * h as f64 * suite.smoothness);
    let bound = 7.0 * (h as f64).powi(3) * eta * eta * (sigma * sigma / b as f64 + 3.0 * kappa * kappa);
    let r = suite.num_clients();
    let per_seed = (0..seeds as u64)
        .into_par_iter()
        .map(|s| {
            let trs = (0..r)
                .map(|c| {
                    let mut crng = rng::stream(base_seed, Stream::Client, &[s, c as u64]);
                    fedsim::local_trajectory(&suite.clients[c], anchor, h, eta, Some(b), &mut crng)
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let mut sums = Vec::with_capacity(r * (r - 1) / 2);
            for i in 0..r {
                for j in i + 1..r {
                    // t = t_k contributes 0: both start from the anchor.
                    let mut acc = 0.0;
                    for step in 0..h - 1 {
                        acc += trs[i][step].dist_sq(&trs[j][step])?;
                    }
                    sums.push(acc);
                }
            }
            Ok(sums)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let pairs = r * (r - 1) / 2;
    let means: Vec<f64> = (0..pairs)
        .map(|p| per_seed.iter().map(|s| s[p]).sum::<f64>() / seeds as f64)
        .collect();
    Ok(DriftReport {
        max_mean: means.iter().copied().fold(0.0, f64::max),
        bound,
        pairs,
        violations: means.iter().filter(|m| **m > bound).count(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    /// Largest per-client unbiased estimate of E‖Y − EY‖².
    pub max_variance: f64,
    /// Standard error attached to that estimate.
    pub std_error: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Monte-Carlo variance of each client's accumulated gradient over one
/// mini-batch window, against H²σ²/b with `slack_se` standard errors.
pub fn check_claim1(
    suite: &ObjectiveSuite,
    anchor: &ParamVector,
    h: usize,
    b: usize,
    seeds: usize,
    base_seed: u64,
    slack_se: f64,
) -> Result<VarianceReport> {
    let (sigma, _) = exact_constants(suite)?;
    if seeds < 2 {
        return Err(VerifyError::InvalidArgument("need at least 2 seeds".into()));
    }
    let eta = 1.0 / (8.0 * h as f64 * suite.smoothness);
    let bound = (h * h) as f64 * sigma * sigma / b as f64;
    let all: Vec<usize> = (0..suite.num_clients()).collect();
    let draws = (0..seeds as u64)
        .into_par_iter()
        .map(|s| window_accumulations(suite, anchor, &all, h, eta, Some(b), base_seed, s))
        .collect::<Result<Vec<_>>>()?;
    let n = seeds as f64;
    let mut worst = (0.0, 0.0);
    let mut passed = true;
    for c in 0..all.len() {
        let ys: Vec<&[f64]> = draws.iter().map(|d| d[c].as_slice()).collect();
        let m = linalg::mean(&ys)?;
        let sq: Vec<f64> = ys
            .iter()
            .map(|y| y.iter().zip(m.as_slice()).map(|(a, b)| (a - b).powi(2)).sum())
            .collect();
        let mean_sq = sq.iter().sum::<f64>() / n;
        let var = mean_sq * n / (n - 1.0);
        let sd = (sq.iter().map(|v| (v - mean_sq).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let se = sd / n.sqrt();
        if var > bound + slack_se * se {
            passed = false;
        }
        if var >= worst.0 {
            worst = (var, se);
        }
    }
    Ok(VarianceReport {
        max_variance: worst.0,
        std_error: worst.1,
        bound,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fact1Report {
    pub probes: usize,
    /// Largest ‖∇F‖² / (2L(F − F*)).
    pub max_ratio: f64,
    pub violations: usize,
}

/// ‖∇F(x)‖² ≤ 2L(F(x) − F(x*)) at `probes` Gaussian points around x*.
pub fn check_fact1(suite: &ObjectiveSuite, probes: usize, scale: f64, seed: u64) -> Result<Fact1Report> {
    let xs = suite
        .global_min
        .clone()
        .ok_or_else(|| VerifyError::InvalidArgument("suite has no known minimizer".into()))?;
    let f_star = suite.global_loss(&xs)?;
    let mut rng = rng::stream(seed, Stream::Probe, &[]);
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..probes {
        let noise: Vec<f64> = (0..xs.dim())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        let x = xs.add(&ParamVector::new(noise)?)?;
        let g = objectives::global_gradient(suite, &x)?.norm_sq();
        let rhs = 2.0 * suite.smoothness * (suite.global_loss(&x)? - f_star);
        let tol = 1e-9 * rhs.abs() + 1e-12;
        if g > rhs + tol {
            violations += 1;
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(g / rhs);
        }
    }
    Ok(Fact1Report {
        probes,
        max_ratio,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub runs: usize,
    pub steps_checked: usize,
    pub violations: usize,
    /// Largest ‖x^{t+1} − x*‖² / RHS over checked steps.
    pub max_ratio: f64,
}

/// Full-batch, attack-free runs; at every step into a non-sync index checks
/// ‖x^{t+1} − x*‖² ≤ (1 − μη/2)‖x^t − x*‖² + (3η/μ)(3Hκ²).
pub fn check_contraction_gd(base: &ExperimentConfig, runs: usize) -> Result<ContractionReport> {
    if !base.full_batch || base.eps != 0.0 {
        return Err(VerifyError::InvalidArgument(
            "contraction check needs a full-batch, attack-free config".into(),
        ));
    }
    let results = (0..runs as u64)
        .into_par_iter()
        .map(|s| {
            let mut cfg = base.clone();
            cfg.seed = base.seed.wrapping_add(s);
            let suite = cfg.objective.build(cfg.seed)?;
            let kappa = suite
                .exact_kappa
                .ok_or_else(|| VerifyError::InvalidArgument("suite needs exact kappa".into()))?;
            let out = fedsim::run_with_suite(&cfg, &suite)?;
            let (mu, eta, h) = (suite.mu, out.eta, cfg.h as f64);
            let offset = 3.0 * eta / mu * (3.0 * h * kappa * kappa);
            let mut checked = 0;
            let mut bad = 0;
            let mut worst: f64 = 0.0;
            for w in out.rows.windows(2) {
                if w[1].sync {
                    continue;
                }
                let (a, b) = (w[0].dist_sq.unwrap_or(0.0), w[1].dist_sq.unwrap_or(0.0));
                let rhs = (1.0 - mu * eta / 2.0) * a + offset;
                checked += 1;
                if b > rhs * (1.0 + 1e-12) {
                    bad += 1;
                }
                if rhs > 0.0 {
                    worst = worst.max(b / rhs);
                }
            }
            Ok((checked, bad, worst))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContractionReport {
        runs,
        steps_checked: results.iter().map(|r| r.0).sum(),
        violations: results.iter().map(|r| r.1).sum(),
        max_ratio: results.iter().map(|r| r.2).fold(0.0, f64::max),
    })
}

/// A full-batch, attack-free config on the default quadratic suite with
/// partial client sampling, used by the contraction check.
pub fn contraction_config(h: usize, t: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        r: 10,
        k: 5,
        h,
        t,
        full_batch: true,
        eta: StepSize::Auto,
        x0: vec![4.0],
        seed,
        ..ExperimentConfig::default()
    }
}
