use byzsim_core::fedsim::{self, Aggregator, ExperimentConfig, SamplingPolicy, StepSize};
use byzsim_core::linalg::ParamVector;
use byzsim_core::objectives::{ObjectiveSuite, SuiteSpec};
use byzsim_core::rng::{self, Stream};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

/// Correctly rounded sum through exact rational arithmetic.
fn rational_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = BigRational::zero();
    for v in values {
        acc += BigRational::from_float(v).expect("finite");
    }
    acc.to_f64().unwrap()
}

fn oracle_mean(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len() as f64;
    (0..points[0].len())
        .map(|j| {
            let v0 = points[0][j];
            if points.iter().all(|p| p[j] == v0) {
                v0
            } else {
                rational_sum(points.iter().map(|p| p[j])) / n
            }
        })
        .collect()
}

struct RefRow {
    t: usize,
    x: Vec<f64>,
}

/// Plain local SGD with mean aggregation, written against the objective
/// API only. Clients draw from the per-(round, client) stream.
fn reference_run(cfg: &ExperimentConfig, suite: &ObjectiveSuite, eta: f64) -> Vec<RefRow> {
    let mut x = cfg.x0.clone();
    if x.len() == 1 && suite.dim() > 1 {
        x = vec![x[0]; suite.dim()];
    }
    let mut rows = vec![RefRow { t: 0, x: x.clone() }];
    for round in 0..cfg.t / cfg.h {
        let sampled: Vec<usize> = match cfg.sampling {
            SamplingPolicy::All => (0..cfg.r).collect(),
            SamplingPolicy::RoundRobin => {
                let mut s: Vec<usize> = (0..cfg.k).map(|j| (round * cfg.k + j) % cfg.r).collect();
                s.sort_unstable();
                s
            }
            SamplingPolicy::UniformRandom => {
                let mut srng = rng::stream(cfg.seed, Stream::Sampling, &[round as u64]);
                fedsim::sample_clients(cfg.r, cfg.k, cfg.sampling, round, &mut srng).unwrap()
            }
        };
        let mut trajectories = Vec::new();
        for &r in &sampled {
            let mut crng = rng::stream(cfg.seed, Stream::Client, &[round as u64, r as u64]);
            let mut cur = x.clone();
            let mut tr = Vec::new();
            for _ in 0..cfg.h {
                let xv = ParamVector::new(cur.clone()).unwrap();
                let g = if cfg.full_batch {
                    suite.clients[r].full_gradient(&xv).unwrap()
                } else {
                    suite.clients[r].minibatch_gradient(&xv, cfg.b, &mut crng).unwrap()
                };
                cur = cur.iter().zip(g.as_slice()).map(|(a, gi)| a - eta * gi).collect();
                tr.push(cur.clone());
            }
            trajectories.push(tr);
        }
        for s in 0..cfg.h - 1 {
            let models: Vec<Vec<f64>> = trajectories.iter().map(|tr| tr[s].clone()).collect();
            rows.push(RefRow {
                t: round * cfg.h + s + 1,
                x: oracle_mean(&models),
            });
        }
        let accum: Vec<Vec<f64>> = trajectories
            .iter()
            .map(|tr| {
                x.iter()
                    .zip(&tr[cfg.h - 1])
                    .map(|(a, b)| (a - b) * (1.0 / eta))
                    .collect()
            })
            .collect();
        let g_hat = oracle_mean(&accum);
        x = x.iter().zip(&g_hat).map(|(a, g)| a - eta * g).collect();
        rows.push(RefRow {
            t: (round + 1) * cfg.h,
            x: x.clone(),
        });
    }
    rows
}

fn base_config() -> ExperimentConfig {
    ExperimentConfig {
        r: 6,
        k: 6,
        h: 3,
        t: 60,
        b: 2,
        eta: StepSize::Fixed(0.05),
        sampling: SamplingPolicy::All,
        aggregator: Aggregator::Mean,
        x0: vec![2.0],
        objective: SuiteSpec {
            clients: 6,
            dim: 3,
            ..SuiteSpec::default()
        },
        seed: 17,
        ..ExperimentConfig::default()
    }
}

fn assert_matches_reference(cfg: &ExperimentConfig) {
    let suite = cfg.objective.build(cfg.seed).unwrap();
    let out = fedsim::run_with_suite(cfg, &suite).unwrap();
    let reference = reference_run(cfg, &suite, out.eta);
    assert_eq!(out.rows.len(), reference.len());
    let min = suite.global_min.as_ref().unwrap();
    for (row, r) in out.rows.iter().zip(&reference) {
        assert_eq!(row.t, r.t);
        let x = ParamVector::new(r.x.clone()).unwrap();
        assert_eq!(row.dist_sq.unwrap().to_bits(), x.dist_sq(min).unwrap().to_bits(), "t = {}", r.t);
        assert_eq!(row.loss.to_bits(), suite.global_loss(&x).unwrap().to_bits(), "t = {}", r.t);
    }
}

#[test]
fn rational_oracle_rounds_correctly() {
    assert_eq!(rational_sum([0.1; 10]), 1.0);
    assert_eq!(rational_sum([1e100, 1.0, -1e100, 1e-100]), 1.0);
    assert_eq!(BigRational::from_integer(BigInt::from(3)).to_f64(), Some(3.0));
}

#[test]
fn minibatch_run_matches_reference_loop() {
    assert_matches_reference(&base_config());
}

#[test]
fn full_batch_and_partial_participation_match_reference_loop() {
    let mut cfg = base_config();
    cfg.full_batch = true;
    assert_matches_reference(&cfg);

    let mut cfg = base_config();
    cfg.r = 6;
    cfg.k = 4;
    cfg.sampling = SamplingPolicy::RoundRobin;
    assert_matches_reference(&cfg);

    cfg.sampling = SamplingPolicy::UniformRandom;
    cfg.h = 1;
    assert_matches_reference(&cfg);
}

#[test]
fn inter_sync_rows_average_local_models() {
    let mut cfg = base_config();
    cfg.h = 5;
    cfg.t = 50;
    let suite = cfg.objective.build(cfg.seed).unwrap();
    let out = fedsim::run_with_suite(&cfg, &suite).unwrap();
    let reference = reference_run(&cfg, &suite, out.eta);
    let min = suite.global_min.as_ref().unwrap();
    for (row, r) in out.rows.iter().zip(&reference) {
        assert_eq!(row.sync, row.t % cfg.h == 0);
        let d = ParamVector::new(r.x.clone()).unwrap().dist_sq(min).unwrap();
        assert!((row.dist_sq.unwrap() - d).abs() <= 1e-12 * d.max(1.0));
    }
}

#[test]
fn prefix_of_a_run_is_a_shorter_run() {
    let long = fedsim::run(&base_config()).unwrap();
    let mut cfg = base_config();
    cfg.t = 30;
    let short = fedsim::run(&cfg).unwrap();
    assert_eq!(format!("{:?}", short.rows), format!("{:?}", &long.rows[..short.rows.len()]));
}
