//! The acceptance criteria as executable checks, plus the calibration pass
//! that measures the constants several of them compare against.

use std::time::Instant;

use rayon::prelude::*;

use super::calibration::{
    Calibration, ACCEPTANCE_SEED_BASE, CALIBRATION_SEED_BASE, CONSTANT_FLOOR,
};
use super::floor::{gamma_bound, gamma_bound_gd, spearman};
use super::instances::{self, Instance};
use super::{checks, sweep, Result, VerifyError};
use crate::attacks::AttackKind;
use crate::fedsim::{self, ExperimentConfig, RunOutput, SamplingPolicy, StepSize};
use crate::linalg::ParamVector;
use crate::objectives::{ObjectiveKind, SuiteSpec};
use crate::rage;

/// Result of one criterion. `measured` and `bound` carry the headline
/// quantity and the value it was compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
    pub detail: String,
    pub seconds: f64,
}

impl CheckOutcome {
    fn failed(id: usize, name: &'static str, err: &VerifyError, seconds: f64) -> Self {
        Self {
            id,
            name,
            passed: false,
            measured: f64::NAN,
            bound: f64::NAN,
            detail: format!("error: {err}"),
            seconds,
        }
    }

    /// One `PASS`/`FAIL` line with the margin and timing.
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {:<26} measured={:<12.5e} bound={:<12.5e} {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.bound,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    /// Criteria 1, 2 and 10.
    Fast,
    /// All ten criteria; needs a calibration.
    Full,
}

impl SuiteKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fast" => Some(Self::Fast),
            "full" => Some(Self::Full),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    /// Filter threshold multiplier used by the exactness check.
    pub score_multiplier: f64,
    pub calibration: Option<Calibration>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            score_multiplier: rage::RageConfig::default().score_multiplier,
            calibration: None,
        }
    }
}

pub const NAMES: [&str; 10] = [
    "clean_gd_convergence",
    "rage_exactness",
    "rage_robustness_ratio",
    "brute_force_agreement",
    "matrix_concentration",
    "drift_bound",
    "error_floor_structure",
    "full_batch_determinism",
    "nonconvex_floor",
    "claim_invariants",
];

fn timed(id: usize, f: impl FnOnce() -> Result<CheckOutcome>) -> CheckOutcome {
    let start = Instant::now();
    match f() {
        Ok(mut o) => {
            o.seconds = start.elapsed().as_secs_f64();
            o
        }
        Err(e) => CheckOutcome::failed(id, NAMES[id - 1], &e, start.elapsed().as_secs_f64()),
    }
}

fn need_calibration(opts: &SuiteOptions) -> Result<Calibration> {
    opts.calibration
        .ok_or_else(|| VerifyError::Calibration("this criterion needs a calibration file".into()))
}

/// Runs one criterion by number (1 to 10).
pub fn run_criterion(id: usize, opts: &SuiteOptions) -> CheckOutcome {
    timed(id, || match id {
        1 => clean_gd_convergence(),
        2 => rage_exactness(opts.score_multiplier),
        3 => rage_robustness(&need_calibration(opts)?),
        4 => brute_force_agreement(&need_calibration(opts)?),
        5 => matrix_concentration(),
        6 => drift_bound(),
        7 => error_floor_structure(&need_calibration(opts)?),
        8 => full_batch_determinism(),
        9 => nonconvex_floor(&need_calibration(opts)?),
        10 => claim_invariants(),
        _ => Err(VerifyError::InvalidArgument(format!("no criterion {id}"))),
    })
}

/// Runs a suite, one outcome per criterion, in order.
pub fn run_suite(kind: SuiteKind, opts: &SuiteOptions) -> Vec<CheckOutcome> {
    let ids: Vec<usize> = match kind {
        SuiteKind::Fast => vec![1, 2, 10],
        SuiteKind::Full => (1..=10).collect(),
    };
    ids.into_iter().map(|id| run_criterion(id, opts)).collect()
}

fn outcome(id: usize, passed: bool, measured: f64, bound: f64, detail: String) -> CheckOutcome {
    CheckOutcome {
        id,
        name: NAMES[id - 1],
        passed,
        measured,
        bound,
        detail,
        seconds: 0.0,
    }
}

// ---------------------------------------------------------------- 1

/// One client with F = ½·L·x² in one dimension, full batch, H = 1, started
/// at x⁰ = 3.
pub fn clean_gd_config() -> ExperimentConfig {
    ExperimentConfig {
        r: 1,
        k: 1,
        h: 1,
        t: 200,
        full_batch: true,
        eta: StepSize::Auto,
        sampling: SamplingPolicy::All,
        x0: vec![3.0],
        objective: SuiteSpec {
            clients: 1,
            dim: 1,
            points_per_client: 1,
            heterogeneity: 0.0,
            spread: 0.0,
            mu: 2.0,
            smoothness: 2.0,
            center: 0.0,
            ..SuiteSpec::default()
        },
        ..ExperimentConfig::default()
    }
}

pub fn clean_gd_convergence() -> Result<CheckOutcome> {
    let start = Instant::now();
    let cfg = clean_gd_config();
    let out = fedsim::run(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let x0 = cfg.x0[0];
    let mut worst: f64 = 0.0;
    for row in &out.rows {
        let expect = x0 * 0.8f64.powi(row.t as i32);
        let got = row.dist_sq.unwrap_or(f64::NAN).sqrt();
        worst = worst.max((got - expect).abs() / expect);
    }
    let rows_ok = out.rows.len() == cfg.t + 1;
    Ok(outcome(
        1,
        rows_ok && worst <= 1e-12 && secs < 0.1,
        worst,
        1e-12,
        format!("max relative error over t<=200, {} rows, run {:.4}s (< 0.1s)", out.rows.len(), secs),
    ))
}

// ---------------------------------------------------------------- 2

/// The plain mean of points whose entries are multiples of 2^-40, computed
/// in 128-bit fixed point: the correctly rounded sum divided by n.
pub fn fixed_point_mean(points: &[ParamVector]) -> Result<Vec<f64>> {
    let scale = (1u64 << 40) as f64;
    let n = points.len();
    let d = points.first().map_or(0, |p| p.dim());
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let mut acc: i128 = 0;
        for p in points {
            let q = p.as_slice()[j] * scale;
            if q.fract() != 0.0 || q.abs() >= 2f64.powi(100) {
                return Err(VerifyError::InvalidArgument(
                    "entry is not a multiple of 2^-40".into(),
                ));
            }
            acc += q as i128;
        }
        out.push((acc as f64 / scale) / n as f64);
    }
    Ok(out)
}

/// The 100 corruption-free instances used for exactness: K in 8..=40,
/// d in 1..=10.
pub fn exactness_family(base_seed: u64) -> Result<Vec<Instance>> {
    (0..100u64)
        .map(|i| instances::clean_instance(base_seed + i, 8 + (i as usize * 7) % 33, 1 + i as usize % 10))
        .collect()
}

pub fn rage_exactness(score_multiplier: f64) -> Result<CheckOutcome> {
    let family = exactness_family(ACCEPTANCE_SEED_BASE)?;
    let mut mismatches = 0;
    for inst in &family {
        let cfg = rage::RageConfig {
            score_multiplier,
            ..inst.rage_config()
        };
        let oracle = fixed_point_mean(&inst.points)?;
        let same = match rage::rage_filter(&inst.points, &cfg) {
            Ok(rep) => rep
                .estimate
                .as_slice()
                .iter()
                .zip(&oracle)
                .all(|(a, b)| a.to_bits() == b.to_bits()),
            Err(_) => false,
        };
        if !same {
            mismatches += 1;
        }
    }
    Ok(outcome(
        2,
        mismatches == 0,
        mismatches as f64,
        0.0,
        format!("instances whose estimate differs from the exact mean, of {}", family.len()),
    ))
}

// ---------------------------------------------------------------- 3, 4

/// Largest robustness ratio over the K = 40, d = 20, ε̃ = 0.2 family.
pub fn max_robustness_ratio(base_seed: u64) -> Result<f64> {
    let fam = instances::adversarial_family(base_seed, 100, 40, 20, 0.2)?;
    let ratios = fam
        .par_iter()
        .map(instances::robustness_ratio)
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// Largest filter-vs-exhaustive-oracle ratio over the 50-instance small
/// family.
pub fn max_oracle_ratio(base_seed: u64) -> Result<f64> {
    let fam = instances::small_family(base_seed, 50)?;
    let ratios = fam
        .par_iter()
        .map(|inst| Ok(instances::rage_oracle_compare(&inst.points, &inst.honest, &inst.rage_config())?.ratio))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

fn rage_c_outcome(id: usize, measured: f64, cal: &Calibration, secs: f64, budget: f64) -> CheckOutcome {
    let bound = 2.0 * cal.rage_c;
    outcome(
        id,
        measured <= bound && cal.rage_c <= 10.0 && measured <= 10.0 && secs < budget,
        measured,
        bound,
        format!(
            "max ratio vs 2x frozen C = {:.4} (C <= 10), {:.2}s (< {budget}s)",
            cal.rage_c, secs
        ),
    )
}

pub fn rage_robustness(cal: &Calibration) -> Result<CheckOutcome> {
    let start = Instant::now();
    let m = max_robustness_ratio(ACCEPTANCE_SEED_BASE)?;
    Ok(rage_c_outcome(3, m, cal, start.elapsed().as_secs_f64(), 30.0))
}

pub fn brute_force_agreement(cal: &Calibration) -> Result<CheckOutcome> {
    let start = Instant::now();
    let m = max_oracle_ratio(ACCEPTANCE_SEED_BASE)?;
    Ok(rage_c_outcome(4, m, cal, start.elapsed().as_secs_f64(), 10.0))
}

// ---------------------------------------------------------------- 5, 6

fn check_suite_spec(clients: usize) -> SuiteSpec {
    SuiteSpec {
        clients,
        dim: 5,
        points_per_client: 8,
        heterogeneity: 0.5,
        spread: 1.0,
        mu: 0.5,
        smoothness: 2.0,
        center: 1.0,
        ..SuiteSpec::default()
    }
}

pub fn matrix_concentration() -> Result<CheckOutcome> {
    let suite = check_suite_spec(48).build(ACCEPTANCE_SEED_BASE)?;
    let anchor = ParamVector::zeros(suite.dim());
    let mut worst_fraction: f64 = 1.0;
    let mut parts = Vec::new();
    for h in [1, 4] {
        for b in [1, 4] {
            let rep = checks::check_concentration_sgd(&suite, &anchor, h, b, 0.25, 24, 200, ACCEPTANCE_SEED_BASE)?;
            worst_fraction = worst_fraction.min(rep.fraction);
            parts.push(format!("H{h}b{b}:{:.3}", rep.fraction));
        }
    }
    let mut gd_fail = 0;
    let mut gd_runs = 0;
    let mut gd_worst: f64 = 0.0;
    for s in 0..5u64 {
        let suite = check_suite_spec(24).build(ACCEPTANCE_SEED_BASE + s)?;
        for anchor in [ParamVector::zeros(5), ParamVector::filled(5, 3.0)?] {
            for h in [1, 2, 4, 8] {
                let (lambda, bound) = checks::check_concentration_gd(&suite, &anchor, h)?;
                gd_runs += 1;
                gd_worst = gd_worst.max(lambda / bound);
                if lambda > bound {
                    gd_fail += 1;
                }
            }
        }
    }
    Ok(outcome(
        5,
        worst_fraction >= 0.95 && gd_fail == 0,
        worst_fraction,
        0.95,
        format!(
            "worst seed fraction [{}]; full batch {}/{} within 11H^2k^2 (max ratio {:.3})",
            parts.join(" "),
            gd_runs - gd_fail,
            gd_runs,
            gd_worst
        ),
    ))
}

pub fn drift_bound() -> Result<CheckOutcome> {
    let suite = check_suite_spec(10).build(ACCEPTANCE_SEED_BASE)?;
    let anchor = ParamVector::zeros(suite.dim());
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for h in [2, 8] {
        for b in [1, 4] {
            let rep = checks::check_drift(&suite, &anchor, h, b, 200, ACCEPTANCE_SEED_BASE)?;
            violations += rep.violations;
            worst = worst.max(rep.max_mean / rep.bound);
            parts.push(format!("H{h}b{b}:{:.3}", rep.max_mean / rep.bound));
        }
    }
    Ok(outcome(
        6,
        violations == 0,
        worst,
        1.0,
        format!("max pair mean / bound [{}], {violations} violations", parts.join(" ")),
    ))
}

// ---------------------------------------------------------------- 7

pub const FLOOR_EPS: [f64; 4] = [0.0, 0.05, 0.1, 0.2];
pub const FLOOR_H: [usize; 4] = [1, 2, 4, 8];
/// H held fixed during the ε sweep, and ε during the H sweep.
pub const FLOOR_FIXED_H: usize = 2;
pub const FLOOR_FIXED_EPS: f64 = 0.1;
pub const FLOOR_BATCHES: usize = 20;

/// Strongly convex quadratic, 20 clients all sampled each window, a
/// colluding shift small enough to pass the filter undetected.
pub fn floor_config(full_batch: bool, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        r: 20,
        k: 20,
        h: FLOOR_FIXED_H,
        t: 800,
        b: 2,
        eta: StepSize::Auto,
        eps: 0.0,
        eps_prime: 0.25,
        attack: AttackKind::ColludingShift { magnitude: 0.5 },
        objective: SuiteSpec {
            clients: 20,
            dim: 5,
            points_per_client: 8,
            heterogeneity: 1.0,
            spread: 0.05,
            mu: 1.0,
            smoothness: 2.0,
            center: 0.0,
            ..SuiteSpec::default()
        },
        full_batch,
        seed,
        sampling: SamplingPolicy::All,
        x0: vec![3.0],
        ..ExperimentConfig::default()
    }
}

/// One point of a floor sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorPoint {
    pub eps: f64,
    pub h: usize,
    pub floor: f64,
    pub r_squared: f64,
    /// Largest ‖ĝ − honest mean‖² over the run, normalized by the Υ² scale
    /// (σ0²(ε+ε') mini-batch, H²κ²ε full batch).
    pub c_measured: f64,
    pub sigma: f64,
    pub kappa: f64,
}

/// Largest normalized decoding error of a run.
pub fn decode_constant(cfg: &ExperimentConfig, out: &RunOutput) -> f64 {
    let scale = if cfg.full_batch {
        (cfg.h * cfg.h) as f64 * out.kappa * out.kappa * cfg.eps
    } else {
        out.sigma0_sq * (cfg.eps + cfg.eps_prime)
    };
    out.syncs
        .iter()
        .filter_map(|s| s.decode_err_sq)
        .map(|e| {
            if e == 0.0 {
                0.0
            } else if scale > 0.0 {
                e / scale
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

fn floor_point(cfg: &ExperimentConfig) -> Result<FloorPoint> {
    let out = fedsim::run(cfg)?;
    let fit = sweep::floor_of_run(&out, cfg.h)?;
    Ok(FloorPoint {
        eps: cfg.eps,
        h: cfg.h,
        floor: fit.floor,
        r_squared: fit.r_squared,
        c_measured: decode_constant(cfg, &out),
        sigma: out.sigma,
        kappa: out.kappa,
    })
}

/// Both sweeps of one seed batch: the ε sweep at [`FLOOR_FIXED_H`] and the
/// H sweep at [`FLOOR_FIXED_EPS`].
#[derive(Debug, Clone, PartialEq)]
pub struct FloorBatch {
    pub seed: u64,
    pub eps_sweep: Vec<FloorPoint>,
    pub h_sweep: Vec<FloorPoint>,
}

impl FloorBatch {
    pub fn eps_spearman(&self) -> f64 {
        let x: Vec<f64> = self.eps_sweep.iter().map(|p| p.eps).collect();
        let y: Vec<f64> = self.eps_sweep.iter().map(|p| p.floor).collect();
        spearman(&x, &y)
    }

    pub fn h_spearman(&self) -> f64 {
        let x: Vec<f64> = self.h_sweep.iter().map(|p| p.h as f64).collect();
        let y: Vec<f64> = self.h_sweep.iter().map(|p| p.floor).collect();
        spearman(&x, &y)
    }

    pub fn points(&self) -> impl Iterator<Item = &FloorPoint> {
        self.eps_sweep.iter().chain(&self.h_sweep)
    }
}

pub fn floor_batch(full_batch: bool, seed: u64) -> Result<FloorBatch> {
    let base = floor_config(full_batch, seed);
    let sweep_over = |axis: sweep::SweepAxis, values: &[f64], fixed: &ExperimentConfig| {
        values
            .iter()
            .map(|v| {
                let mut c = fixed.clone();
                axis.apply(&mut c, *v)?;
                floor_point(&c)
            })
            .collect::<Result<Vec<_>>>()
    };
    let eps_sweep = sweep_over(sweep::SweepAxis::Eps, &FLOOR_EPS, &base)?;
    let mut at_eps = base.clone();
    at_eps.eps = FLOOR_FIXED_EPS;
    let hs: Vec<f64> = FLOOR_H.iter().map(|h| *h as f64).collect();
    let h_sweep = sweep_over(sweep::SweepAxis::H, &hs, &at_eps)?;
    Ok(FloorBatch {
        seed,
        eps_sweep,
        h_sweep,
    })
}

pub fn floor_batches(full_batch: bool, base_seed: u64, count: usize) -> Result<Vec<FloorBatch>> {
    (0..count as u64)
        .into_par_iter()
        .map(|s| floor_batch(full_batch, base_seed + s))
        .collect()
}

/// The theoretical floor for one sweep point under `cal`.
pub fn floor_bound(full_batch: bool, p: &FloorPoint, cal: &Calibration) -> Result<f64> {
    let cfg = floor_config(full_batch, 0);
    let mu = cfg.objective.mu;
    Ok(if full_batch {
        gamma_bound_gd(p.h, p.kappa, p.eps, cal.c_upsilon_gd)?.convex_floor(mu)
    } else {
        gamma_bound(
            p.h,
            p.sigma,
            cfg.b,
            p.kappa,
            p.eps,
            cfg.eps_prime,
            cfg.objective.dim,
            cfg.k,
            cal.c_upsilon,
        )?
        .convex_floor(mu)
    })
}

struct FloorSummary {
    eps_fraction: f64,
    h_fraction: f64,
    worst_bound_ratio: f64,
    c_measured: f64,
    eps_secs: f64,
    h_secs: f64,
}

fn summarize_floors(full_batch: bool, cal: &Calibration) -> Result<FloorSummary> {
    // The two axes are timed separately since each is its own sweep.
    let base = ACCEPTANCE_SEED_BASE;
    let start = Instant::now();
    let eps_batches = (0..FLOOR_BATCHES as u64)
        .into_par_iter()
        .map(|s| {
            let cfg = floor_config(full_batch, base + s);
            FLOOR_EPS
                .iter()
                .map(|e| {
                    let mut c = cfg.clone();
                    sweep::SweepAxis::Eps.apply(&mut c, *e)?;
                    floor_point(&c)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let eps_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let h_batches = (0..FLOOR_BATCHES as u64)
        .into_par_iter()
        .map(|s| {
            let mut cfg = floor_config(full_batch, base + s);
            cfg.eps = FLOOR_FIXED_EPS;
            FLOOR_H
                .iter()
                .map(|h| {
                    let mut c = cfg.clone();
                    sweep::SweepAxis::H.apply(&mut c, *h as f64)?;
                    floor_point(&c)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let h_secs = start.elapsed().as_secs_f64();

    let batches: Vec<FloorBatch> = eps_batches
        .into_iter()
        .zip(h_batches)
        .enumerate()
        .map(|(i, (e, h))| FloorBatch {
            seed: base + i as u64,
            eps_sweep: e,
            h_sweep: h,
        })
        .collect();
    let n = batches.len() as f64;
    let eps_fraction = batches.iter().filter(|b| b.eps_spearman() >= 0.0).count() as f64 / n;
    let h_fraction = batches.iter().filter(|b| b.h_spearman() >= 0.0).count() as f64 / n;
    let mut worst_bound_ratio: f64 = 0.0;
    let mut c_measured: f64 = 0.0;
    for p in batches.iter().flat_map(|b| b.points()) {
        worst_bound_ratio = worst_bound_ratio.max(p.floor / floor_bound(full_batch, p, cal)?);
        c_measured = c_measured.max(p.c_measured);
    }
    Ok(FloorSummary {
        eps_fraction,
        h_fraction,
        worst_bound_ratio,
        c_measured,
        eps_secs,
        h_secs,
    })
}

pub fn error_floor_structure(cal: &Calibration) -> Result<CheckOutcome> {
    let gd = summarize_floors(true, cal)?;
    let sgd = summarize_floors(false, cal)?;
    let monotone = [gd.eps_fraction, gd.h_fraction, sgd.eps_fraction, sgd.h_fraction]
        .into_iter()
        .fold(1.0, f64::min);
    let under = gd.worst_bound_ratio <= 1.0 && sgd.worst_bound_ratio <= 1.0;
    let calibrated = gd.c_measured <= 2.0 * cal.c_upsilon_gd && sgd.c_measured <= 2.0 * cal.c_upsilon;
    let fast = [gd.eps_secs, gd.h_secs, sgd.eps_secs, sgd.h_secs]
        .into_iter()
        .all(|s| s < 60.0);
    Ok(outcome(
        7,
        monotone >= 0.95 && under && calibrated && fast,
        monotone,
        0.95,
        format!(
            "spearman>=0 fractions gd eps {:.2} H {:.2}, sgd eps {:.2} H {:.2}; \
             floor/bound gd {:.3e} sgd {:.3e}; measured c gd {:.3} (frozen {:.3}) sgd {:.3} (frozen {:.3}); \
             sweep secs gd {:.1}/{:.1} sgd {:.1}/{:.1}",
            gd.eps_fraction,
            gd.h_fraction,
            sgd.eps_fraction,
            sgd.h_fraction,
            gd.worst_bound_ratio,
            sgd.worst_bound_ratio,
            gd.c_measured,
            cal.c_upsilon_gd,
            sgd.c_measured,
            cal.c_upsilon,
            gd.eps_secs,
            gd.h_secs,
            sgd.eps_secs,
            sgd.h_secs
        ),
    ))
}

// ---------------------------------------------------------------- 8

/// A full-batch run under attack with partial sampling, used for the
/// determinism check.
pub fn determinism_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        r: 12,
        k: 8,
        h: 3,
        t: 120,
        full_batch: true,
        eps: 0.25,
        attack: AttackKind::GaussianBlowup { scale: 50.0 },
        objective: SuiteSpec {
            clients: 12,
            ..SuiteSpec::default()
        },
        seed,
        x0: vec![2.0],
        ..ExperimentConfig::default()
    }
}

fn fingerprint(out: &RunOutput) -> String {
    format!("{:?}|{:?}|{}", out.rows, out.syncs, out.eta.to_bits())
}

/// In-process determinism: repeated runs and runs under different worker
/// pool sizes must agree bit for bit.
pub fn full_batch_determinism() -> Result<CheckOutcome> {
    let cfg = determinism_config(ACCEPTANCE_SEED_BASE);
    let reference = fingerprint(&fedsim::run(&cfg)?);
    let mut mismatches = 0;
    let mut trials = 0;
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| VerifyError::InvalidArgument(e.to_string()))?;
        for _ in 0..2 {
            let fp = pool.install(|| fedsim::run(&cfg).map(|o| fingerprint(&o)))?;
            trials += 1;
            if fp != reference {
                mismatches += 1;
            }
        }
    }
    Ok(outcome(
        8,
        mismatches == 0,
        mismatches as f64,
        0.0,
        format!("runs differing from the reference, of {trials} across 1/2/4 worker threads"),
    ))
}

// ---------------------------------------------------------------- 9

pub const NONCONVEX_HORIZONS: [usize; 3] = [200, 800, 3200];
pub const NONCONVEX_SEEDS: usize = 3;

/// Ripple suite (quadratic plus β·Σ sin² coordinates, negative curvature
/// where β dominates), mini-batch, with a sign-flip attack.
pub fn nonconvex_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        r: 10,
        k: 8,
        h: 4,
        t: *NONCONVEX_HORIZONS.last().expect("non-empty"),
        b: 2,
        eps: 0.1,
        eps_prime: 0.25,
        attack: AttackKind::SignFlip { scale: 20.0 },
        objective: SuiteSpec {
            kind: ObjectiveKind::SmoothNonconvex,
            clients: 10,
            dim: 5,
            points_per_client: 8,
            heterogeneity: 0.5,
            spread: 0.5,
            mu: 0.5,
            smoothness: 2.0,
            center: 1.0,
            beta: 0.5,
        },
        seed,
        x0: vec![4.0],
        ..ExperimentConfig::default()
    }
}

/// Least-squares fit of `y = A/T + B`.
pub fn fit_inverse(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = ts.iter().map(|t| 1.0 / t).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (a, my - a * mx)
}

/// The horizon averages and decoding constant of one nonconvex run.
#[derive(Debug, Clone, PartialEq)]
pub struct NonconvexRun {
    pub averages: Vec<f64>,
    pub limit: f64,
    pub c_measured: f64,
    pub sigma: f64,
    pub kappa: f64,
}

pub fn nonconvex_run(seed: u64) -> Result<NonconvexRun> {
    let cfg = nonconvex_config(seed);
    let out = fedsim::run(&cfg)?;
    // Prefixes of one run are runs with shorter T: every random stream is
    // keyed by window index, so later windows never affect earlier ones.
    let averages: Vec<f64> = NONCONVEX_HORIZONS
        .iter()
        .map(|&t| out.rows[..t].iter().map(|r| r.grad_norm_sq).sum::<f64>() / t as f64)
        .collect();
    let ts: Vec<f64> = NONCONVEX_HORIZONS.iter().map(|t| *t as f64).collect();
    let (_, limit) = fit_inverse(&ts, &averages);
    Ok(NonconvexRun {
        averages,
        limit,
        c_measured: decode_constant(&cfg, &out),
        sigma: out.sigma,
        kappa: out.kappa,
    })
}

pub fn nonconvex_floor(cal: &Calibration) -> Result<CheckOutcome> {
    let start = Instant::now();
    let runs = (0..NONCONVEX_SEEDS as u64)
        .into_par_iter()
        .map(|s| nonconvex_run(ACCEPTANCE_SEED_BASE + s))
        .collect::<Result<Vec<_>>>()?;
    let secs = start.elapsed().as_secs_f64();
    let cfg = nonconvex_config(0);
    let mut decreasing = true;
    let mut worst: f64 = 0.0;
    let mut bound_at_worst = f64::NAN;
    let mut c_measured: f64 = 0.0;
    let mut parts = Vec::new();
    for run in &runs {
        decreasing &= run.averages.windows(2).all(|w| w[1] < w[0]);
        let bound = gamma_bound(
            cfg.h,
            run.sigma,
            cfg.b,
            run.kappa,
            cfg.eps,
            cfg.eps_prime,
            cfg.objective.dim,
            cfg.k,
            cal.c_upsilon,
        )?
        .nonconvex_floor();
        if run.limit / bound >= worst || bound_at_worst.is_nan() {
            worst = run.limit / bound;
            bound_at_worst = bound;
        }
        c_measured = c_measured.max(run.c_measured);
        parts.push(
            run.averages
                .iter()
                .map(|a| format!("{a:.3e}"))
                .collect::<Vec<_>>()
                .join(">"),
        );
    }
    let limit = worst * bound_at_worst;
    Ok(outcome(
        9,
        decreasing && worst <= 1.0 && c_measured <= 2.0 * cal.c_upsilon && secs < 60.0,
        limit,
        bound_at_worst,
        format!(
            "fitted limit B vs 9/2 Gamma; averages over T=200/800/3200 [{}]; measured c {:.3} (frozen {:.3}); {:.1}s",
            parts.join(", "),
            c_measured,
            cal.c_upsilon,
            secs
        ),
    ))
}

// ---------------------------------------------------------------- 10

pub const CLAIM1_SLACK_SE: f64 = 5.0;

pub fn claim_invariants() -> Result<CheckOutcome> {
    let suite = check_suite_spec(10).build(ACCEPTANCE_SEED_BASE)?;
    let anchor = ParamVector::zeros(suite.dim());
    let mut claim1_ok = true;
    let mut claim1_worst: f64 = 0.0;
    for h in [1, 4] {
        for b in [1, 4] {
            let rep = checks::check_claim1(&suite, &anchor, h, b, 200, ACCEPTANCE_SEED_BASE, CLAIM1_SLACK_SE)?;
            claim1_ok &= rep.passed;
            claim1_worst = claim1_worst.max(rep.max_variance / rep.bound);
        }
    }

    let mut fact1_violations = 0;
    let mut fact1_worst: f64 = 0.0;
    let logistic = SuiteSpec {
        kind: ObjectiveKind::Logistic,
        ..check_suite_spec(10)
    };
    for spec in [check_suite_spec(10), logistic] {
        let s = spec.build(ACCEPTANCE_SEED_BASE)?;
        let rep = checks::check_fact1(&s, 200, 3.0, ACCEPTANCE_SEED_BASE)?;
        fact1_violations += rep.violations;
        fact1_worst = fact1_worst.max(rep.max_ratio);
    }

    let mut steps = 0;
    let mut contraction_violations = 0;
    let mut contraction_worst: f64 = 0.0;
    for h in [2, 4] {
        let rep = checks::check_contraction_gd(&checks::contraction_config(h, 16 * h, ACCEPTANCE_SEED_BASE), 200)?;
        steps += rep.steps_checked;
        contraction_violations += rep.violations;
        contraction_worst = contraction_worst.max(rep.max_ratio);
    }

    let worst = claim1_worst.max(fact1_worst).max(contraction_worst);
    Ok(outcome(
        10,
        claim1_ok && fact1_violations == 0 && contraction_violations == 0,
        worst,
        1.0,
        format!(
            "claim1 var/bound {claim1_worst:.3} ({CLAIM1_SLACK_SE} SE slack) ok={claim1_ok}; \
             fact1 ratio {fact1_worst:.3}, {fact1_violations} violations; \
             contraction ratio {contraction_worst:.3}, {contraction_violations}/{steps} violations"
        ),
    ))
}

// ---------------------------------------------------------------- calibration

/// Measures the three constants on the calibration seed family, which is
/// disjoint from the seeds the criteria use.
pub fn calibrate() -> Result<Calibration> {
    let base = CALIBRATION_SEED_BASE;
    let rage_c = max_robustness_ratio(base)?.max(max_oracle_ratio(base)?);
    let gd = floor_batches(true, base, FLOOR_BATCHES)?;
    let sgd = floor_batches(false, base, FLOOR_BATCHES)?;
    let c_gd = gd.iter().flat_map(|b| b.points()).map(|p| p.c_measured).fold(0.0, f64::max);
    let mut c_sgd = sgd.iter().flat_map(|b| b.points()).map(|p| p.c_measured).fold(0.0, f64::max);
    for s in 0..NONCONVEX_SEEDS as u64 {
        c_sgd = c_sgd.max(nonconvex_run(base + s)?.c_measured);
    }
    let fin = |v: f64, name: &str| {
        if v.is_finite() {
            Ok(v.max(CONSTANT_FLOOR))
        } else {
            Err(VerifyError::Calibration(format!("{name} is unbounded on the calibration family")))
        }
    };
    Ok(Calibration {
        rage_c: fin(rage_c, "rage_c")?,
        c_upsilon: fin(c_sgd, "c_upsilon")?,
        c_upsilon_gd: fin(c_gd, "c_upsilon_gd")?,
    })
}
