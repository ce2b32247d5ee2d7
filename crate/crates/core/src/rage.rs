//! Robust accumulated-gradient estimation by iterative spectral filtering.
//!
//! Every round solves a max–min problem over a rank-one direction `Y = vvᵀ`
//! and a column-stochastic comparison matrix `W` with entries capped at
//! `(4−α)/(α(2+α)K)`. Each active point is scored by its squared deviation
//! from its best comparison point along `v`; while the weighted score
//! exceeds `score_multiplier·K·σ0²`, weights shrink as `c_i ← (1 − τ_i/τ_max)c_i`
//! and points whose weight drops below ½ leave the active set for good.
//! The estimate is the plain mean of what remains.
//!
//! Inputs are processed in a canonical (lexicographic) order and eigen
//! start vectors are seeded from a content hash, so the filter is a pure
//! function of the input multiset: permuting the inputs permutes the
//! weights and leaves the estimate bit-identical.

use std::cmp::Ordering;

use thiserror::Error;

use crate::linalg::{
    self, content_hash, scatter_apply, LinalgError, ParamVector, DEFAULT_EIG_MAX_ITER,
};

/// Relative change in the saddle value below which alternation stops.
const ALTERNATION_TOL: f64 = 1e-8;
const MAX_ALTERNATIONS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RageError {
    #[error("need at least 2 inputs, got {0}")]
    TooFewInputs(usize),
    #[error("filtering removed every input; the corrupt fraction is beyond what the filter tolerates")]
    EmptyActiveSet,
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, RageError>;

/// How the inner max–min problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaddleSolver {
    /// Alternate exact best responses in `W` and top eigenvectors in `Y`.
    Alternating,
    /// Every comparison column is uniform over the active set.
    UniformW,
}

impl SaddleSolver {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "alternating" => Some(Self::Alternating),
            "uniform_w" => Some(Self::UniformW),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Alternating => "alternating",
            Self::UniformW => "uniform_w",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RageConfig {
    /// Concentration threshold σ0².
    pub sigma0_sq: f64,
    /// α = 1 − ε̃; must lie in [3/4, 1].
    pub alpha: f64,
    /// The constant in the `score_multiplier·K·σ0²` stopping test.
    pub score_multiplier: f64,
    pub eig_tol: f64,
    /// Defaults to `K + 1` when absent.
    pub max_rounds: Option<usize>,
    pub solver: SaddleSolver,
}

impl RageConfig {
    pub fn new(sigma0_sq: f64, alpha: f64) -> Self {
        Self {
            sigma0_sq,
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0_sq >= 0.0 && self.sigma0_sq.is_finite()) {
            return Err(RageError::InvalidConfig(format!(
                "sigma0_sq must be finite and non-negative, got {}",
                self.sigma0_sq
            )));
        }
        if !(0.75..=1.0).contains(&self.alpha) {
            return Err(RageError::InvalidConfig(format!(
                "alpha must lie in [0.75, 1], got {}",
                self.alpha
            )));
        }
        if !(self.score_multiplier > 0.0 && self.score_multiplier.is_finite()) {
            return Err(RageError::InvalidConfig(format!(
                "score_multiplier must be positive, got {}",
                self.score_multiplier
            )));
        }
        if !(self.eig_tol > 0.0) {
            return Err(RageError::InvalidConfig("eig_tol must be positive".into()));
        }
        Ok(())
    }
}

impl Default for RageConfig {
    fn default() -> Self {
        Self {
            sigma0_sq: 0.0,
            alpha: 1.0,
            score_multiplier: 4.0,
            eig_tol: 1e-10,
            max_rounds: None,
            solver: SaddleSolver::Alternating,
        }
    }
}

/// Entry cap `(4−α)/(α(2+α)K)` on the comparison matrix.
pub fn box_cap(alpha: f64, k: usize) -> f64 {
    (4.0 - alpha) / (alpha * (2.0 + alpha) * k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RageReport {
    pub estimate: ParamVector,
    /// Final `c_i`, indexed like the inputs. Removed points keep the value
    /// that pushed them below ½.
    pub final_weights: Vec<f64>,
    /// Surviving input indices, ascending.
    pub active_set: Vec<usize>,
    /// Number of filtering (downweighting) rounds performed.
    pub rounds: usize,
    /// Σ c_i τ_i at the last scoring pass.
    pub final_score: f64,
    /// τ per scoring pass, indexed like the inputs; inactive points read 0.
    pub tau_history: Vec<Vec<f64>>,
    /// False when `max_rounds` ran out or an eigen solve hit its iteration cap.
    pub converged: bool,
}

impl RageReport {
    pub fn removed(&self) -> usize {
        self.final_weights.len() - self.active_set.len()
    }
}

/// Approximate solution of the inner max–min problem on the active points.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddlePoint {
    /// Unit `v` with `Y* = v vᵀ`.
    pub direction: ParamVector,
    /// Column `i` is `w_i*`, the comparison weights for point `i`.
    pub w_star: Vec<Vec<f64>>,
    /// τ_i = (g_i − G w_i*)ᵀ Y* (g_i − G w_i*).
    pub tau: Vec<f64>,
    /// Σ c_i τ_i.
    pub value: f64,
    pub alternations: usize,
    pub eig_converged: bool,
}

/// The two extreme vertices of {w : 0 ≤ w_j ≤ cap, Σ w_j = 1} along `p`.
struct Vertices {
    low: Vec<f64>,
    high: Vec<f64>,
    lo: f64,
    hi: f64,
}

fn fill(order: impl Iterator<Item = usize>, n: usize, cap: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    let mut left = 1.0;
    for j in order {
        if left <= 0.0 {
            break;
        }
        let take = cap.min(left);
        w[j] = take;
        left -= take;
    }
    w
}

fn vertices(p: &[f64], cap: f64) -> Vertices {
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let low = fill(order.iter().copied(), n, cap);
    let high = fill(order.iter().rev().copied(), n, cap);
    let (pmin, pmax) = (p[order[0]], p[order[n - 1]]);
    let lo = linalg::dot(&low, p).clamp(pmin, pmax);
    let hi = linalg::dot(&high, p).clamp(lo, pmax);
    Vertices { low, high, lo, hi }
}

fn combine(points: &[&[f64]], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; points[0].len()];
    for (p, &wj) in points.iter().zip(w) {
        if wj != 0.0 {
            out.iter_mut().zip(p.iter()).for_each(|(o, x)| *o += wj * x);
        }
    }
    out
}

/// Exact minimizer over `W` for a fixed direction `v`.
struct BestResponse {
    theta: Vec<f64>,
    tau: Vec<f64>,
    vertices: Vertices,
}

fn best_response(points: &[&[f64]], v: &[f64], cap: f64) -> BestResponse {
    let p: Vec<f64> = points.iter().map(|g| linalg::dot(g, v)).collect();
    let vx = vertices(&p, cap);
    let span = vx.hi - vx.lo;
    let mut theta = Vec::with_capacity(p.len());
    let mut tau = Vec::with_capacity(p.len());
    for &pi in &p {
        let target = pi.clamp(vx.lo, vx.hi);
        theta.push(if span > 0.0 { (vx.hi - target) / span } else { 1.0 });
        tau.push((pi - target).powi(2));
    }
    BestResponse {
        theta,
        tau,
        vertices: vx,
    }
}

fn uniform_deviations(points: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    let m = linalg::mean(points)?;
    Ok(points
        .iter()
        .map(|g| g.iter().zip(m.as_slice()).map(|(a, b)| a - b).collect())
        .collect())
}

/// Solves the inner problem for `points` weighted by `weights`.
///
/// With [`SaddleSolver::UniformW`] the comparison matrix is uniform and `v`
/// is the top eigenvector of `Σ c_i (g_i − ḡ)(g_i − ḡ)ᵀ`. With
/// [`SaddleSolver::Alternating`] this is the first step; afterwards `W` is
/// replaced by its exact best response to `v` and `v` by the top eigenvector
/// of the resulting scatter, keeping the direction with the largest
/// `min_W Φ(W, vvᵀ)`.
pub fn solve_saddle_point<P: AsRef<[f64]>>(
    points: &[P],
    weights: &[f64],
    cap: f64,
    solver: SaddleSolver,
    eig_tol: f64,
) -> Result<SaddlePoint> {
    let n = points.len();
    if n == 0 {
        return Err(RageError::EmptyActiveSet);
    }
    if weights.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: weights.len(),
        }
        .into());
    }
    if !(weights.iter().sum::<f64>() > 0.0) {
        return Err(LinalgError::ZeroWeights.into());
    }
    let pts: Vec<&[f64]> = points.iter().map(|p| p.as_ref()).collect();
    let dim = pts[0].len();
    if let Some(bad) = pts.iter().find(|p| p.len() != dim) {
        return Err(LinalgError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        }
        .into());
    }
    // A box that cannot hold a probability vector is widened to the uniform one.
    let cap = cap.max(1.0 / n as f64);

    let mut deviations = uniform_deviations(&pts)?;
    let seed = content_hash(pts.iter().copied());
    let mut start: Option<Vec<f64>> = None;
    let mut best: Option<(f64, Vec<f64>, BestResponse)> = None;
    let mut eig_converged = true;
    let mut last_value: Option<f64> = None;
    let mut alternations = 0;

    for _ in 0..MAX_ALTERNATIONS {
        alternations += 1;
        let op = |v: &[f64]| scatter_apply(&deviations, weights, v);
        let eig = match start.take() {
            Some(s) => linalg::top_eigenpair_from(op, s, eig_tol, DEFAULT_EIG_MAX_ITER)?,
            None => linalg::top_eigenpair(op, dim, eig_tol, DEFAULT_EIG_MAX_ITER, seed)?,
        };
        eig_converged &= eig.converged;
        let v = eig.vector.into_inner();

        let response = match solver {
            SaddleSolver::UniformW => {
                let tau: Vec<f64> = deviations
                    .iter()
                    .map(|d| linalg::dot(d, &v).powi(2))
                    .collect();
                let uniform = vec![1.0 / n as f64; n];
                BestResponse {
                    theta: vec![1.0; n],
                    tau,
                    vertices: Vertices {
                        low: uniform.clone(),
                        high: uniform,
                        lo: 0.0,
                        hi: 0.0,
                    },
                }
            }
            SaddleSolver::Alternating => best_response(&pts, &v, cap),
        };
        let value = linalg::exact_sum(weights.iter().zip(&response.tau).map(|(c, t)| c * t));

        let improves = best.as_ref().is_none_or(|(b, _, _)| value > *b);
        let zero_scatter = eig.value == 0.0;
        let stalled = last_value
            .is_some_and(|prev| (value - prev).abs() <= ALTERNATION_TOL * value.abs().max(prev.abs()));
        last_value = Some(value);

        let next_deviations = if solver == SaddleSolver::Alternating && !zero_scatter && !stalled {
            let m_lo = combine(&pts, &response.vertices.low);
            let m_hi = combine(&pts, &response.vertices.high);
            Some(
                pts.iter()
                    .zip(&response.theta)
                    .map(|(g, &th)| {
                        g.iter()
                            .zip(m_lo.iter().zip(&m_hi))
                            .map(|(x, (a, b))| x - th * a - (1.0 - th) * b)
                            .collect()
                    })
                    .collect(),
            )
        } else {
            None
        };
        if improves {
            best = Some((value, v.clone(), response));
        }
        match next_deviations {
            Some(d) => {
                deviations = d;
                start = Some(v);
            }
            None => break,
        }
    }

    let (value, v, response) = best.expect("at least one alternation");
    let w_star = response
        .theta
        .iter()
        .map(|&th| {
            response
                .vertices
                .low
                .iter()
                .zip(&response.vertices.high)
                .map(|(a, b)| th * a + (1.0 - th) * b)
                .collect()
        })
        .collect();
    Ok(SaddlePoint {
        direction: ParamVector::new(v)?,
        w_star,
        tau: response.tau,
        value,
        alternations,
        eig_converged,
    })
}

/// Runs the filter on `inputs` and returns the robust mean with its trace.
pub fn rage_filter(inputs: &[ParamVector], cfg: &RageConfig) -> Result<RageReport> {
    cfg.validate()?;
    let k = inputs.len();
    if k < 2 {
        return Err(RageError::TooFewInputs(k));
    }
    let dim = inputs[0].dim();
    if let Some(bad) = inputs.iter().find(|x| x.dim() != dim) {
        return Err(LinalgError::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        }
        .into());
    }

    // order[pos] = original index of the point processed at position `pos`
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| match inputs[a].total_cmp(&inputs[b]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });

    let cap = box_cap(cfg.alpha, k);
    let threshold = cfg.score_multiplier * k as f64 * cfg.sigma0_sq;
    let max_rounds = cfg.max_rounds.unwrap_or(k + 1);
    let mut c = vec![1.0; k];
    let mut active: Vec<usize> = (0..k).collect();
    let mut rounds = 0;
    let mut tau_history = Vec::new();
    let mut converged = true;
    let mut final_score;

    loop {
        let pts: Vec<&[f64]> = active.iter().map(|&pos| inputs[order[pos]].as_slice()).collect();
        let weights: Vec<f64> = active.iter().map(|&pos| c[pos]).collect();
        let sp = solve_saddle_point(&pts, &weights, cap, cfg.solver, cfg.eig_tol)?;
        converged &= sp.eig_converged;

        let mut taus = vec![0.0; k];
        for (&pos, &t) in active.iter().zip(&sp.tau) {
            taus[order[pos]] = t;
        }
        tau_history.push(taus);
        final_score = sp.value;

        if final_score <= threshold {
            break;
        }
        if rounds >= max_rounds {
            converged = false;
            break;
        }
        rounds += 1;
        let tau_max = sp.tau.iter().copied().fold(0.0, f64::max);
        for (&pos, &t) in active.iter().zip(&sp.tau) {
            c[pos] = if t >= tau_max { 0.0 } else { (1.0 - t / tau_max) * c[pos] };
        }
        active.retain(|&pos| c[pos] >= 0.5);
        if active.is_empty() {
            return Err(RageError::EmptyActiveSet);
        }
    }

    let survivors: Vec<&[f64]> = active.iter().map(|&pos| inputs[order[pos]].as_slice()).collect();
    let estimate = linalg::mean(&survivors)?;
    let mut final_weights = vec![0.0; k];
    for (pos, &orig) in order.iter().enumerate() {
        final_weights[orig] = c[pos];
    }
    let mut active_set: Vec<usize> = active.iter().map(|&pos| order[pos]).collect();
    active_set.sort_unstable();
    Ok(RageReport {
        estimate,
        final_weights,
        active_set,
        rounds,
        final_score,
        tau_history,
        converged,
    })
}

/// σ0² for mini-batch local SGD: `25H²σ²/(bε')·(1 + 4d/(3K)) + 28H²κ²`.
pub fn sigma0_sgd(
    h: usize,
    sigma: f64,
    b: usize,
    eps_prime: f64,
    d: usize,
    k: usize,
    kappa: f64,
) -> Result<f64> {
    if !(eps_prime > 0.0) {
        return Err(RageError::InvalidConfig(format!(
            "eps_prime must be positive, got {eps_prime}"
        )));
    }
    if b == 0 || k == 0 {
        return Err(RageError::InvalidConfig("b and K must be positive".into()));
    }
    let h2 = (h * h) as f64;
    let noise = 25.0 * h2 * sigma * sigma / (b as f64 * eps_prime)
        * (1.0 + 4.0 * d as f64 / (3.0 * k as f64));
    Ok(noise + 28.0 * h2 * kappa * kappa)
}

/// σ0² for full-batch local GD: `11H²κ²`.
pub fn sigma0_gd(h: usize, kappa: f64) -> f64 {
    11.0 * (h * h) as f64 * kappa * kappa
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn uniform_cfg(sigma0_sq: f64) -> RageConfig {
        RageConfig {
            sigma0_sq,
            solver: SaddleSolver::UniformW,
            ..RageConfig::default()
        }
    }

    #[test]
    fn identical_inputs_return_that_input() {
        let v = pv(&[0.1, -3.7, 1e-9]);
        let inputs = vec![v.clone(); 5];
        for solver in [SaddleSolver::UniformW, SaddleSolver::Alternating] {
            let r = rage_filter(
                &inputs,
                &RageConfig {
                    solver,
                    ..RageConfig::default()
                },
            )
            .unwrap();
            assert_eq!(r.estimate, v);
            assert_eq!(r.rounds, 0);
            assert_eq!(r.active_set, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn hand_traced_single_outlier() {
        let m = 1000.0;
        let inputs: Vec<_> = [0.0, 0.0, 0.0, m].iter().map(|x| pv(&[*x])).collect();
        let r = rage_filter(&inputs, &uniform_cfg(0.0)).unwrap();
        let first = &r.tau_history[0];
        for t in &first[..3] {
            assert!((t - m * m / 16.0).abs() < 1e-9);
        }
        assert!((first[3] - 9.0 * m * m / 16.0).abs() < 1e-9);
        assert_eq!(r.final_weights[3], 0.0);
        assert!((r.final_weights[0] - 8.0 / 9.0).abs() < 1e-15);
        assert_eq!(r.active_set, vec![0, 1, 2]);
        assert_eq!(r.rounds, 1);
        assert_eq!(r.final_score, 0.0);
        assert_eq!(r.estimate, pv(&[0.0]));
    }

    #[test]
    fn saddle_examples() {
        let two = [pv(&[2.0, 1.0]), pv(&[2.0, 1.0])];
        let sp = solve_saddle_point(&two, &[1.0, 1.0], 0.5, SaddleSolver::Alternating, 1e-10)
            .unwrap();
        assert_eq!(sp.tau, vec![0.0, 0.0]);

        let pm = [pv(&[-1.0]), pv(&[1.0])];
        let sp = solve_saddle_point(&pm, &[1.0, 1.0], 0.5, SaddleSolver::UniformW, 1e-10).unwrap();
        assert_eq!(sp.direction.as_slice()[0].abs(), 1.0);
        assert_eq!(sp.tau, vec![1.0, 1.0]);

        let dir = [3.0 / 5.0, 4.0 / 5.0];
        let line: Vec<_> = [-2.0, -0.5, 0.3, 1.0, 4.0]
            .iter()
            .map(|s| pv(&[1.0 + s * dir[0], -2.0 + s * dir[1]]))
            .collect();
        for solver in [SaddleSolver::UniformW, SaddleSolver::Alternating] {
            let sp = solve_saddle_point(&line, &[1.0; 5], 0.3, solver, 1e-10).unwrap();
            let ip = linalg::dot(sp.direction.as_slice(), &dir);
            assert!(ip * ip >= 1.0 - 1e-6);
        }
    }

    #[test]
    fn comparison_columns_are_feasible() {
        let pts: Vec<_> = (0..7)
            .map(|i| pv(&[(i as f64).sin() * 3.0, (i * i) as f64 * 0.1]))
            .collect();
        let cap = box_cap(0.8, 7);
        let sp = solve_saddle_point(&pts, &[1.0; 7], cap, SaddleSolver::Alternating, 1e-10).unwrap();
        for col in &sp.w_star {
            assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(col.iter().all(|w| *w >= 0.0 && *w <= cap + 1e-15));
        }
    }

    #[test]
    fn too_few_and_empty() {
        assert_eq!(
            rage_filter(&[pv(&[1.0])], &RageConfig::default()),
            Err(RageError::TooFewInputs(1))
        );
        let r = rage_filter(&[pv(&[-1.0]), pv(&[1.0])], &uniform_cfg(0.0));
        assert_eq!(r, Err(RageError::EmptyActiveSet));
    }

    #[test]
    fn sigma0_examples() {
        assert_eq!(sigma0_sgd(1, 0.0, 1, 0.1, 3, 4, 0.0).unwrap(), 0.0);
        let v = sigma0_sgd(2, 1.0, 1, 0.25, 4, 8, 1.0).unwrap();
        assert!((v - (400.0 * (1.0 + 2.0 / 3.0) + 112.0)).abs() < 1e-9);
        let a = sigma0_sgd(3, 0.7, 2, 0.2, 5, 9, 0.4).unwrap();
        let b = sigma0_sgd(6, 0.7, 2, 0.2, 5, 9, 0.4).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
        assert!(sigma0_sgd(1, 1.0, 1, 0.0, 1, 1, 1.0).is_err());
        assert_eq!(sigma0_gd(5, 0.0), 0.0);
        assert_eq!(sigma0_gd(1, 1.0), 11.0);
        assert_eq!(sigma0_gd(3, 2.0), 396.0);
    }

    #[test]
    fn invalid_alpha_rejected() {
        let cfg = RageConfig::new(1.0, 0.5);
        assert!(matches!(
            rage_filter(&[pv(&[0.0]), pv(&[1.0])], &cfg),
            Err(RageError::InvalidConfig(_))
        ));
    }
}
