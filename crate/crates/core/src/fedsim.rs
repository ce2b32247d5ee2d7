//! The federated training loop with local iterations and robust decoding.
//!
//! Every `H` iterations the server samples `K` of the `R` clients and
//! broadcasts its model `x`. Each sampled client runs `H` local SGD steps
//! from `x` on its own data and reports the result; corrupt clients run the
//! same honest computation but their report is swapped by the attack. The
//! server turns every report into an accumulated gradient `(x − x̃_r)/η`,
//! decodes them with the spectral filter and steps `x ← x − η·ĝ`.
//!
//! All randomness is keyed by (seed, purpose, round, client), so clients of
//! one window run in parallel without changing a single bit of the output.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::attacks::{self, AttackError, AttackKind};
use crate::linalg::{self, LinalgError, ParamVector};
use crate::objectives::{self, ClientDataset, ObjectiveError, ObjectiveSuite, SuiteSpec};
use crate::rage::{self, RageConfig, RageError, SaddleSolver};
use crate::rng::{self, SimRng, Stream};

/// Iterates with a larger norm than this count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run diverged at t = {t}")]
    Diverged { t: usize, rows: Vec<MetricsRow> },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Rage(#[from] RageError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingPolicy {
    UniformRandom,
    RoundRobin,
    All,
}

impl SamplingPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform_random" => Some(Self::UniformRandom),
            "round_robin" => Some(Self::RoundRobin),
            "all" => Some(Self::All),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::UniformRandom => "uniform_random",
            Self::RoundRobin => "round_robin",
            Self::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// 1/(8HL) for mini-batch runs, 1/(5HL) for full-batch runs.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Rage,
    Mean,
}

impl Aggregator {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rage" => Some(Self::Rage),
            "mean" => Some(Self::Mean),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Rage => "rage",
            Self::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub r: usize,
    pub k: usize,
    pub h: usize,
    pub t: usize,
    pub b: usize,
    pub eta: StepSize,
    pub eps: f64,
    pub eps_prime: f64,
    pub attack: AttackKind,
    pub objective: SuiteSpec,
    pub full_batch: bool,
    pub seed: u64,
    pub sampling: SamplingPolicy,
    /// Starting point; a single entry is broadcast to every coordinate.
    pub x0: Vec<f64>,
    pub aggregator: Aggregator,
    pub rage_solver: SaddleSolver,
    pub score_multiplier: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            r: 10,
            k: 10,
            h: 1,
            t: 100,
            b: 1,
            eta: StepSize::Auto,
            eps: 0.0,
            eps_prime: 0.1,
            attack: AttackKind::None,
            objective: SuiteSpec::default(),
            full_batch: false,
            seed: 0,
            sampling: SamplingPolicy::UniformRandom,
            x0: vec![0.0],
            aggregator: Aggregator::Rage,
            rage_solver: SaddleSolver::Alternating,
            score_multiplier: 4.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SimError::Config(m));
        if self.r == 0 {
            return fail("R must be at least 1".into());
        }
        if self.k == 0 || self.k > self.r {
            return fail(format!("need 1 <= K <= R (K = {}, R = {})", self.k, self.r));
        }
        if self.sampling == SamplingPolicy::All && self.k != self.r {
            return fail("sampling = all requires K = R".into());
        }
        if self.h == 0 {
            return fail("H must be at least 1".into());
        }
        if self.t % self.h != 0 {
            return fail(format!("T = {} is not a multiple of H = {}", self.t, self.h));
        }
        if self.objective.clients != self.r {
            return fail(format!(
                "objective has {} clients but R = {}",
                self.objective.clients, self.r
            ));
        }
        if !self.full_batch && (self.b == 0 || self.b > self.objective.points_per_client) {
            return fail(format!(
                "batch size b = {} outside 1..={}",
                self.b, self.objective.points_per_client
            ));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return fail(format!("eps must lie in [0, 1), got {}", self.eps));
        }
        if !(self.eps_prime > 0.0 && self.eps_prime < 1.0) {
            return fail(format!("eps_prime must lie in (0, 1), got {}", self.eps_prime));
        }
        if let StepSize::Fixed(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return fail(format!("eta must be positive, got {eta}"));
            }
        }
        if !(self.score_multiplier > 0.0 && self.score_multiplier.is_finite()) {
            return fail("rage score multiplier must be positive".into());
        }
        if self.x0.len() != 1 && self.x0.len() != self.objective.dim {
            return fail(format!(
                "x0 has {} entries; expected 1 or {}",
                self.x0.len(),
                self.objective.dim
            ));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return fail("x0 must be finite".into());
        }
        Ok(())
    }

    pub fn start_point(&self) -> Result<ParamVector> {
        let d = self.objective.dim;
        let v = if self.x0.len() == 1 {
            vec![self.x0[0]; d]
        } else {
            self.x0.clone()
        };
        Ok(ParamVector::new(v)?)
    }

    pub fn resolve_eta(&self, smoothness: f64) -> f64 {
        match self.eta {
            StepSize::Fixed(eta) => eta,
            StepSize::Auto if self.full_batch => 1.0 / (5.0 * self.h as f64 * smoothness),
            StepSize::Auto => 1.0 / (8.0 * self.h as f64 * smoothness),
        }
    }

    /// ε̃ handed to the filter: ε + ε' for mini-batch runs, ε for full batch.
    pub fn eps_tilde(&self) -> f64 {
        if self.full_batch {
            self.eps
        } else {
            self.eps + self.eps_prime
        }
    }
}

/// One row of the per-iteration metric series.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t: usize,
    /// ‖x^t − x*‖², absent when the minimizer is unknown.
    pub dist_sq: Option<f64>,
    pub grad_norm_sq: f64,
    pub loss: f64,
    /// Points removed by the filter; set on sync rows after the first.
    pub rage_removed: Option<usize>,
    pub rage_rounds: Option<usize>,
    pub sync: bool,
}

/// What happened at one aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncRecord {
    /// Iteration whose global model this aggregation produced.
    pub t: usize,
    pub sampled: Vec<usize>,
    pub corrupt_sampled: usize,
    /// More than K/4 of the sampled clients are corrupt.
    pub over_threshold: bool,
    pub removed: usize,
    pub rounds: usize,
    /// The filter emptied its active set and the plain mean was used instead.
    pub rage_failed: bool,
    /// ‖ĝ − mean of the honest accumulated gradients‖², when any honest
    /// client was sampled.
    pub decode_err_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub syncs: Vec<SyncRecord>,
    pub eta: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub sigma0_sq: f64,
    pub corrupt: Vec<usize>,
}

/// `(x_sync − x_reported)/η`: for an honest client, the sum of the local
/// gradients it applied during the window.
pub fn accumulate_report(
    x_sync: &ParamVector,
    x_reported: &ParamVector,
    eta: f64,
) -> Result<ParamVector> {
    if !(eta > 0.0) {
        return Err(SimError::Config(format!("eta must be positive, got {eta}")));
    }
    Ok(x_sync.sub(x_reported)?.scale(1.0 / eta)?)
}

/// The `K` clients sampled for window `round`, ascending.
pub fn sample_clients(
    r: usize,
    k: usize,
    policy: SamplingPolicy,
    round: usize,
    rng: &mut SimRng,
) -> Result<Vec<usize>> {
    if k > r {
        return Err(SimError::Config(format!("K = {k} exceeds R = {r}")));
    }
    let mut out = match policy {
        SamplingPolicy::All => {
            if k != r {
                return Err(SimError::Config("sampling = all requires K = R".into()));
            }
            (0..r).collect::<Vec<_>>()
        }
        SamplingPolicy::RoundRobin => (0..k).map(|j| (round * k + j) % r).collect(),
        SamplingPolicy::UniformRandom => {
            let mut idx: Vec<usize> = (0..r).collect();
            for i in 0..k {
                let j = rng.gen_range(i..r);
                idx.swap(i, j);
            }
            idx.truncate(k);
            idx
        }
    };
    out.sort_unstable();
    Ok(out)
}

/// Local models `x_r^{t_k+1}, …, x_r^{t_k+H}` of one client starting from `x`.
///
/// `b = None` takes full gradients.
pub fn local_trajectory(
    client: &ClientDataset,
    x: &ParamVector,
    h: usize,
    eta: f64,
    b: Option<usize>,
    rng: &mut SimRng,
) -> std::result::Result<Vec<ParamVector>, ObjectiveError> {
    let mut out = Vec::with_capacity(h);
    let mut cur = x.clone();
    for _ in 0..h {
        let g = match b {
            None => client.full_gradient(&cur)?,
            Some(b) => client.minibatch_gradient(&cur, b, rng)?,
        };
        cur = cur.add_scaled(-eta, &g)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// The per-window client stream used by [`run`].
pub fn client_stream(seed: u64, round: usize, client: usize) -> SimRng {
    rng::stream(seed, Stream::Client, &[round as u64, client as u64])
}

/// σ and κ of a suite: exact when available, otherwise estimated at the
/// start point, the minimizer and a few seeded probes around the start.
pub fn suite_sigma_kappa(suite: &ObjectiveSuite, x0: &ParamVector, seed: u64) -> Result<(f64, f64)> {
    let mut probes = vec![x0.clone()];
    if let Some(m) = &suite.global_min {
        probes.push(m.clone());
    }
    let mut rng = rng::stream(seed, Stream::Probe, &[]);
    for _ in 0..4 {
        let noise: Vec<f64> = (0..x0.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        probes.push(x0.add(&ParamVector::new(noise)?)?);
    }
    Ok(objectives::sigma_kappa(suite, &probes)?)
}

fn metrics_row(suite: &ObjectiveSuite, x: &ParamVector, t: usize) -> Result<MetricsRow> {
    let g = objectives::global_gradient(suite, x)?;
    Ok(MetricsRow {
        t,
        dist_sq: match &suite.global_min {
            Some(m) => Some(x.dist_sq(m)?),
            None => None,
        },
        grad_norm_sq: g.norm_sq(),
        loss: suite.global_loss(x)?,
        rage_removed: None,
        rage_rounds: None,
        sync: false,
    })
}

fn diverged(x: &ParamVector) -> bool {
    !(x.norm() <= DIVERGENCE_NORM)
}

/// Builds the objective from `config` and runs it.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let suite = config.objective.build(config.seed)?;
    run_with_suite(config, &suite)
}

/// Runs the training loop on an already built suite.
pub fn run_with_suite(config: &ExperimentConfig, suite: &ObjectiveSuite) -> Result<RunOutput> {
    config.validate()?;
    if suite.num_clients() != config.r {
        return Err(SimError::Config(format!(
            "suite has {} clients but R = {}",
            suite.num_clients(),
            config.r
        )));
    }
    let x0 = config.start_point()?;
    if x0.dim() != suite.dim() {
        return Err(SimError::Config("x0 dimension differs from the objective".into()));
    }
    let eta = config.resolve_eta(suite.smoothness);
    let (sigma, kappa) = suite_sigma_kappa(suite, &x0, config.seed)?;
    let sigma0_sq = if config.full_batch {
        rage::sigma0_gd(config.h, kappa)
    } else {
        rage::sigma0_sgd(
            config.h,
            sigma,
            config.b,
            config.eps_prime,
            suite.dim(),
            config.k,
            kappa,
        )?
    };
    let rage_cfg = RageConfig {
        sigma0_sq,
        alpha: 1.0 - config.eps_tilde().min(0.25),
        score_multiplier: config.score_multiplier,
        solver: config.rage_solver,
        ..RageConfig::default()
    };
    let corrupt = attacks::select_corrupt(config.r, config.eps, config.seed)?;
    let batch = if config.full_batch { None } else { Some(config.b) };

    let mut x = x0;
    let mut rows = Vec::with_capacity(config.t + 1);
    let mut first = metrics_row(suite, &x, 0)?;
    first.sync = true;
    rows.push(first);
    let mut syncs = Vec::with_capacity(config.t / config.h);

    for round in 0..config.t / config.h {
        let t0 = round * config.h;
        let mut srng = rng::stream(config.seed, Stream::Sampling, &[round as u64]);
        let sampled = sample_clients(config.r, config.k, config.sampling, round, &mut srng)?;

        let trajectories: Vec<std::result::Result<Vec<ParamVector>, ObjectiveError>> = sampled
            .par_iter()
            .map(|&r| {
                let mut crng = client_stream(config.seed, round, r);
                local_trajectory(&suite.clients[r], &x, config.h, eta, batch, &mut crng)
            })
            .collect();
        let mut local = Vec::with_capacity(trajectories.len());
        for tr in trajectories {
            match tr {
                Ok(tr) => local.push(tr),
                Err(ObjectiveError::Linalg(LinalgError::NonFinite)) => {
                    return Err(SimError::Diverged { t: t0 + 1, rows });
                }
                Err(e) => return Err(e.into()),
            }
        }

        for s in 0..config.h - 1 {
            let t = t0 + s + 1;
            let models: Vec<&ParamVector> = local.iter().map(|tr| &tr[s]).collect();
            let avg = linalg::mean(&models.iter().map(|m| m.as_slice()).collect::<Vec<_>>())?;
            if diverged(&avg) {
                return Err(SimError::Diverged { t, rows });
            }
            rows.push(metrics_row(suite, &avg, t)?);
        }

        let t_next = t0 + config.h;
        let honest_reports: BTreeMap<usize, ParamVector> = sampled
            .iter()
            .zip(&local)
            .map(|(&r, tr)| (r, tr[config.h - 1].clone()))
            .collect();
        let corrupt_here: Vec<usize> = sampled
            .iter()
            .copied()
            .filter(|r| corrupt.binary_search(r).is_ok())
            .collect();
        let mut arng = rng::stream(config.seed, Stream::Attack, &[round as u64]);
        let reports =
            attacks::corrupt_reports(&x, &honest_reports, &corrupt_here, &config.attack, &mut arng)?;

        let mut accum = Vec::with_capacity(reports.len());
        let mut honest_accum = Vec::new();
        for (r, rep) in &reports {
            let g = accumulate_report(&x, rep, eta).map_err(|e| match e {
                SimError::Linalg(LinalgError::NonFinite) => SimError::Diverged {
                    t: t_next,
                    rows: rows.clone(),
                },
                other => other,
            })?;
            if corrupt_here.binary_search(r).is_err() {
                honest_accum.push(g.clone());
            }
            accum.push(g);
        }

        let (g_hat, removed, rounds, rage_failed) =
            if config.aggregator == Aggregator::Mean || accum.len() < 2 {
                (linalg::mean(&accum)?, 0, 0, false)
            } else {
                match rage::rage_filter(&accum, &rage_cfg) {
                    Ok(rep) => {
                        let removed = rep.removed();
                        (rep.estimate, removed, rep.rounds, false)
                    }
                    Err(RageError::EmptyActiveSet) => (linalg::mean(&accum)?, 0, 0, true),
                    Err(e) => return Err(e.into()),
                }
            };
        let decode_err_sq = if honest_accum.is_empty() {
            None
        } else {
            Some(g_hat.dist_sq(&linalg::mean(&honest_accum)?)?)
        };

        x = match x.add_scaled(-eta, &g_hat) {
            Ok(v) => v,
            Err(LinalgError::NonFinite) => return Err(SimError::Diverged { t: t_next, rows }),
            Err(e) => return Err(e.into()),
        };
        if diverged(&x) {
            return Err(SimError::Diverged { t: t_next, rows });
        }
        let mut row = metrics_row(suite, &x, t_next)?;
        row.sync = true;
        row.rage_removed = Some(removed);
        row.rage_rounds = Some(rounds);
        rows.push(row);
        syncs.push(SyncRecord {
            t: t_next,
            corrupt_sampled: corrupt_here.len(),
            over_threshold: 4 * corrupt_here.len() > config.k,
            sampled,
            removed,
            rounds,
            rage_failed,
            decode_err_sq,
        });
    }

    Ok(RunOutput {
        rows,
        syncs,
        eta,
        sigma,
        kappa,
        sigma0_sq,
        corrupt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::ObjectiveKind;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn accumulate_examples() {
        assert!((accumulate_report(&pv(&[1.0]), &pv(&[0.95]), 0.1).unwrap().as_slice()[0] - 0.5)
            .abs()
            < 1e-12);
        assert_eq!(
            accumulate_report(&pv(&[1.0, 2.0]), &pv(&[1.0, 2.0]), 0.3).unwrap(),
            pv(&[0.0, 0.0])
        );
        assert!(accumulate_report(&pv(&[1.0]), &pv(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn two_local_steps_sum_their_gradients() {
        let suite = ObjectiveSuite::quadratic_from_anchors(
            linalg::SymMatrix::identity(1),
            vec![vec![pv(&[0.0])]],
        )
        .unwrap();
        let (x, eta) = (pv(&[2.0]), 0.25);
        let mut rng = client_stream(0, 0, 0);
        let tr = local_trajectory(&suite.clients[0], &x, 2, eta, None, &mut rng).unwrap();
        // x1 = 2 − 0.25·2 = 1.5, gradients 2 and 1.5
        let g = accumulate_report(&x, &tr[1], eta).unwrap();
        assert!((g.as_slice()[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn sampling_examples() {
        let mut rng = rng::stream(0, Stream::Sampling, &[]);
        assert_eq!(
            sample_clients(5, 5, SamplingPolicy::All, 3, &mut rng).unwrap(),
            vec![0, 1, 2, 3, 4]
        );
        let rr: Vec<_> = (0..3)
            .map(|k| sample_clients(4, 2, SamplingPolicy::RoundRobin, k, &mut rng).unwrap())
            .collect();
        assert_eq!(rr, vec![vec![0, 1], vec![2, 3], vec![0, 1]]);
        let a = sample_clients(9, 4, SamplingPolicy::UniformRandom, 0, &mut rng::stream(5, Stream::Sampling, &[1])).unwrap();
        let b = sample_clients(9, 4, SamplingPolicy::UniformRandom, 0, &mut rng::stream(5, Stream::Sampling, &[1])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(sample_clients(3, 4, SamplingPolicy::UniformRandom, 0, &mut rng).is_err());
    }

    fn scalar_gd_config(t: usize) -> ExperimentConfig {
        ExperimentConfig {
            r: 1,
            k: 1,
            h: 1,
            t,
            full_batch: true,
            x0: vec![1.0],
            sampling: SamplingPolicy::All,
            objective: SuiteSpec {
                kind: ObjectiveKind::StronglyConvexQuadratic,
                clients: 1,
                dim: 1,
                points_per_client: 1,
                heterogeneity: 0.0,
                spread: 0.0,
                mu: 3.0,
                smoothness: 3.0,
                center: 0.0,
                beta: 0.0,
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn scalar_gd_matches_closed_form() {
        let out = run(&scalar_gd_config(50)).unwrap();
        assert_eq!(out.rows.len(), 51);
        for row in &out.rows {
            let expect = 0.8f64.powi(2 * row.t as i32);
            let got = row.dist_sq.unwrap();
            assert!((got - expect).abs() <= 1e-12 * expect, "t = {}", row.t);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = scalar_gd_config(10);
        c.h = 3;
        assert!(matches!(run(&c), Err(SimError::Config(_))));
        let mut c = scalar_gd_config(10);
        c.k = 2;
        assert!(matches!(run(&c), Err(SimError::Config(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let mut c = scalar_gd_config(400);
        c.eta = StepSize::Fixed(1.0);
        match run(&c) {
            Err(SimError::Diverged { t, rows }) => {
                assert!(t > 0);
                assert_eq!(rows.len(), t);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
