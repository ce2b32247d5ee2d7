//! Synthetic heterogeneous objectives with exact per-point gradients.
//!
//! A suite is `R` client datasets; client `r` owns `n_r` per-point losses
//! and its local loss is their mean. Three families are provided: quadratics
//! with a Hessian shared by every point (so σ, κ, μ, L and the minimizer are
//! exact), the same quadratics plus a small `β Σ sin²(x_j)` ripple that
//! makes them nonconvex, and ℓ2-regularized logistic regression.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{self, exact_sum, LinalgError, ParamVector, SymMatrix};
use crate::rng::{self, SimRng, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("batch size {b} outside 1..={n}")]
    BatchSize { b: usize, n: usize },
    #[error("objective suite has no clients")]
    EmptySuite,
    #[error("client dataset has no points")]
    EmptyDataset,
    #[error("invalid objective parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    StronglyConvexQuadratic,
    Logistic,
    SmoothNonconvex,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::StronglyConvexQuadratic => "quadratic",
            Self::Logistic => "logistic",
            Self::SmoothNonconvex => "nonconvex",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "quadratic" | "strongly_convex_quadratic" => Some(Self::StronglyConvexQuadratic),
            "logistic" => Some(Self::Logistic),
            "nonconvex" | "smooth_nonconvex" => Some(Self::SmoothNonconvex),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Loss {
    /// ½ (x − a)ᵀ Q (x − a)
    Quadratic { hessian: Arc<SymMatrix> },
    /// ½ (x − a)ᵀ Q (x − a) + β Σ_j sin²(x_j)
    Ripple { hessian: Arc<SymMatrix>, beta: f64 },
    /// log(1 + exp(−y θᵀz)) + (λ/2)‖θ‖²
    Logistic { reg: f64 },
}

#[derive(Debug, Clone)]
struct DataPoint {
    /// Anchor `a` for the quadratic families, feature vector `z` for logistic.
    features: Vec<f64>,
    label: f64,
}

/// One client's local dataset: `n_r ≥ 1` per-point losses F_{r,i}.
#[derive(Debug, Clone)]
pub struct ClientDataset {
    client_id: usize,
    dim: usize,
    loss: Loss,
    points: Vec<DataPoint>,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ClientDataset {
    fn new(client_id: usize, dim: usize, loss: Loss, points: Vec<DataPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(ObjectiveError::EmptyDataset);
        }
        for p in &points {
            if p.features.len() != dim {
                return Err(LinalgError::DimensionMismatch {
                    expected: dim,
                    found: p.features.len(),
                }
                .into());
            }
            if p.features.iter().any(|v| !v.is_finite()) {
                return Err(LinalgError::NonFinite.into());
            }
        }
        Ok(Self {
            client_id,
            dim,
            loss,
            points,
        })
    }

    /// Quadratic client with per-point losses ½(x − a_i)ᵀQ(x − a_i).
    pub fn quadratic(
        client_id: usize,
        hessian: Arc<SymMatrix>,
        anchors: Vec<ParamVector>,
    ) -> Result<Self> {
        let dim = hessian.dim();
        let points = anchors
            .into_iter()
            .map(|a| DataPoint {
                features: a.into_inner(),
                label: 0.0,
            })
            .collect();
        Self::new(client_id, dim, Loss::Quadratic { hessian }, points)
    }

    pub fn client_id(&self) -> usize {
        self.client_id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check(&self, x: &ParamVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: x.dim(),
            }
            .into());
        }
        Ok(())
    }

    fn point_loss_raw(&self, i: usize, x: &[f64]) -> f64 {
        let p = &self.points[i];
        match &self.loss {
            Loss::Quadratic { hessian } => {
                let diff: Vec<f64> = x.iter().zip(&p.features).map(|(a, b)| a - b).collect();
                0.5 * hessian.quad_form(&diff)
            }
            Loss::Ripple { hessian, beta } => {
                let diff: Vec<f64> = x.iter().zip(&p.features).map(|(a, b)| a - b).collect();
                0.5 * hessian.quad_form(&diff) + beta * x.iter().map(|v| v.sin().powi(2)).sum::<f64>()
            }
            Loss::Logistic { reg } => {
                let margin = p.label * linalg::dot(x, &p.features);
                softplus(-margin) + 0.5 * reg * linalg::dot(x, x)
            }
        }
    }

    /// Adds ∇F_{r,i}(x) into `acc`.
    fn accumulate_point_gradient(&self, i: usize, x: &[f64], acc: &mut [f64]) {
        let p = &self.points[i];
        match &self.loss {
            Loss::Quadratic { hessian } | Loss::Ripple { hessian, .. } => {
                let diff: Vec<f64> = x.iter().zip(&p.features).map(|(a, b)| a - b).collect();
                let g = hessian.apply(&diff);
                acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
                if let Loss::Ripple { beta, .. } = &self.loss {
                    acc.iter_mut()
                        .zip(x)
                        .for_each(|(a, xj)| *a += beta * (2.0 * xj).sin());
                }
            }
            Loss::Logistic { reg } => {
                let margin = p.label * linalg::dot(x, &p.features);
                let s = -p.label * sigmoid(-margin);
                acc.iter_mut()
                    .zip(&p.features)
                    .zip(x)
                    .for_each(|((a, z), xj)| *a += s * z + reg * xj);
            }
        }
    }

    pub fn point_loss(&self, i: usize, x: &ParamVector) -> Result<f64> {
        self.check(x)?;
        Ok(self.point_loss_raw(i, x.as_slice()))
    }

    pub fn point_gradient(&self, i: usize, x: &ParamVector) -> Result<ParamVector> {
        self.check(x)?;
        let mut g = vec![0.0; self.dim];
        self.accumulate_point_gradient(i, x.as_slice(), &mut g);
        Ok(ParamVector::new(g)?)
    }

    /// F_r(x): mean of the per-point losses.
    pub fn loss(&self, x: &ParamVector) -> Result<f64> {
        self.check(x)?;
        let total = exact_sum((0..self.len()).map(|i| self.point_loss_raw(i, x.as_slice())));
        Ok(total / self.len() as f64)
    }

    /// Mean of ∇F_{r,i}(x) over `indices`.
    pub fn batch_gradient(&self, x: &ParamVector, indices: &[usize]) -> Result<ParamVector> {
        self.check(x)?;
        if indices.is_empty() {
            return Err(ObjectiveError::BatchSize {
                b: 0,
                n: self.len(),
            });
        }
        let mut g = vec![0.0; self.dim];
        for &i in indices {
            self.accumulate_point_gradient(i, x.as_slice(), &mut g);
        }
        let n = indices.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        Ok(ParamVector::new(g)?)
    }

    /// ∇F_r(x), the exact mean of all per-point gradients.
    pub fn full_gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch_gradient(x, &all)
    }

    /// `b` distinct indices, uniform over all C(n_r, b) subsets, via a
    /// partial Fisher–Yates shuffle.
    pub fn sample_batch(&self, b: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
        let n = self.len();
        if b == 0 || b > n {
            return Err(ObjectiveError::BatchSize { b, n });
        }
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..b {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(b);
        Ok(idx)
    }

    /// Mini-batch stochastic gradient sampled without replacement. A full
    /// batch (`b = n_r`) consumes no randomness and equals `full_gradient`.
    pub fn minibatch_gradient(
        &self,
        x: &ParamVector,
        b: usize,
        rng: &mut SimRng,
    ) -> Result<ParamVector> {
        if b == self.len() {
            return self.full_gradient(x);
        }
        let batch = self.sample_batch(b, rng)?;
        self.batch_gradient(x, &batch)
    }

    /// `mean_i ‖∇F_{r,i}(x) − ∇F_r(x)‖²`.
    pub fn point_variance(&self, x: &ParamVector) -> Result<f64> {
        let full = self.full_gradient(x)?;
        let mut acc = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            acc.push(self.point_gradient(i, x)?.dist_sq(&full)?);
        }
        Ok(exact_sum(acc) / self.len() as f64)
    }
}

/// R client datasets plus the global constants the theory needs.
#[derive(Debug, Clone)]
pub struct ObjectiveSuite {
    pub kind: ObjectiveKind,
    pub clients: Vec<ClientDataset>,
    pub global_min: Option<ParamVector>,
    pub mu: f64,
    /// Smoothness constant L of F (and of every F_{r,i}).
    pub smoothness: f64,
    /// σ from the bounded-variance assumption, when known in closed form.
    pub exact_sigma: Option<f64>,
    /// κ from the bounded-dissimilarity assumption, when known in closed form.
    pub exact_kappa: Option<f64>,
}

impl ObjectiveSuite {
    pub fn dim(&self) -> usize {
        self.clients[0].dim()
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    /// F(x) = (1/R) Σ_r F_r(x).
    pub fn global_loss(&self, x: &ParamVector) -> Result<f64> {
        let mut vals = Vec::with_capacity(self.clients.len());
        for c in &self.clients {
            vals.push(c.loss(x)?);
        }
        Ok(exact_sum(vals) / self.clients.len() as f64)
    }

    /// F(x*) when the minimizer is known.
    pub fn min_value(&self) -> Option<f64> {
        self.global_min
            .as_ref()
            .and_then(|x| self.global_loss(x).ok())
    }

    fn validate(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(ObjectiveError::EmptySuite);
        }
        let d = self.clients[0].dim();
        if self.clients.iter().any(|c| c.dim() != d) {
            return Err(ObjectiveError::InvalidParameter(
                "clients disagree on dimension".into(),
            ));
        }
        if !(self.mu >= 0.0 && self.mu <= self.smoothness && self.smoothness > 0.0) {
            return Err(ObjectiveError::InvalidParameter(format!(
                "need 0 <= mu <= L with L > 0 (mu = {}, L = {})",
                self.mu, self.smoothness
            )));
        }
        Ok(())
    }

    /// Quadratic suite from explicit anchors. μ and L are the extreme
    /// eigenvalues of `hessian`; σ, κ and x* are computed exactly.
    pub fn quadratic_from_anchors(
        hessian: SymMatrix,
        anchors: Vec<Vec<ParamVector>>,
    ) -> Result<Self> {
        let (lo, hi) = spectrum_bounds(&hessian)?;
        let hessian = Arc::new(hessian);
        let clients = anchors
            .into_iter()
            .enumerate()
            .map(|(r, a)| ClientDataset::quadratic(r, hessian.clone(), a))
            .collect::<Result<Vec<_>>>()?;
        finish_anchored(ObjectiveKind::StronglyConvexQuadratic, clients, &hessian, lo, hi)
    }
}

fn finish_anchored(
    kind: ObjectiveKind,
    clients: Vec<ClientDataset>,
    hessian: &SymMatrix,
    mu: f64,
    smoothness: f64,
) -> Result<ObjectiveSuite> {
    if clients.is_empty() {
        return Err(ObjectiveError::EmptySuite);
    }
    let client_means = clients
        .iter()
        .map(|c| linalg::mean(&c.points.iter().map(|p| p.features.as_slice()).collect::<Vec<_>>()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let center = linalg::mean(&client_means)?;

    // Per-point deviations are constant in x: ∇F_{r,i} − ∇F_r = −Q(a_i − ā_r).
    let mut sigma_sq: f64 = 0.0;
    let mut kappa: f64 = 0.0;
    for (c, m) in clients.iter().zip(&client_means) {
        let var = exact_sum(c.points.iter().map(|p| {
            let diff: Vec<f64> = p.features.iter().zip(m.as_slice()).map(|(a, b)| a - b).collect();
            let q = hessian.apply(&diff);
            linalg::dot(&q, &q)
        })) / c.len() as f64;
        sigma_sq = sigma_sq.max(var);
        let shift: Vec<f64> = m.as_slice().iter().zip(center.as_slice()).map(|(a, b)| a - b).collect();
        let q = hessian.apply(&shift);
        kappa = kappa.max(linalg::dot(&q, &q).sqrt());
    }

    let (global_min, mu) = match kind {
        ObjectiveKind::StronglyConvexQuadratic => (Some(center), mu),
        _ => (None, mu),
    };
    let suite = ObjectiveSuite {
        kind,
        clients,
        global_min,
        mu,
        smoothness,
        exact_sigma: Some(sigma_sq.sqrt()),
        exact_kappa: Some(kappa),
    };
    suite.validate()?;
    Ok(suite)
}

/// (λ_min, λ_max) of a symmetric PSD matrix by two power iterations.
fn spectrum_bounds(m: &SymMatrix) -> Result<(f64, f64)> {
    let n = m.dim();
    let top = linalg::top_eigenpair(|v| m.apply(v), n, 1e-12, 100_000, 0x5eed)?;
    let hi = top.value;
    let shifted = linalg::top_eigenpair(
        |v| {
            let mv = m.apply(v);
            v.iter().zip(mv).map(|(a, b)| hi * a - b).collect()
        },
        n,
        1e-12,
        100_000,
        0x5eee,
    )?;
    Ok(((hi - shifted.value).max(0.0), hi))
}

/// Parameters shared by the synthetic suite generators.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSpec {
    pub kind: ObjectiveKind,
    pub clients: usize,
    pub dim: usize,
    pub points_per_client: usize,
    /// Target κ: the largest client-mean offset, measured through Q.
    pub heterogeneity: f64,
    /// Target σ: the largest per-client point spread, measured through Q.
    pub spread: f64,
    pub mu: f64,
    pub smoothness: f64,
    /// Every coordinate of the global anchor mean (quadratic families).
    pub center: f64,
    /// Ripple amplitude β for the nonconvex family.
    pub beta: f64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            kind: ObjectiveKind::StronglyConvexQuadratic,
            clients: 10,
            dim: 5,
            points_per_client: 8,
            heterogeneity: 0.5,
            spread: 1.0,
            mu: 0.5,
            smoothness: 2.0,
            center: 1.0,
            beta: 0.0,
        }
    }
}

impl SuiteSpec {
    pub fn build(&self, seed: u64) -> Result<ObjectiveSuite> {
        match self.kind {
            ObjectiveKind::StronglyConvexQuadratic | ObjectiveKind::SmoothNonconvex => {
                anchored_suite(self, seed)
            }
            ObjectiveKind::Logistic => logistic_suite(self, seed),
        }
    }
}

fn gaussian_vec(rng: &mut SimRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_orthonormal(rng: &mut SimRng, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v = gaussian_vec(rng, dim);
        for b in &basis {
            let p = linalg::dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = linalg::dot(&v, &v).sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

/// Recenters `vs` to zero mean and rescales so that max ‖Q v‖ = target.
fn calibrate_offsets(vs: &mut [Vec<f64>], q: &SymMatrix, target: f64) {
    if vs.is_empty() {
        return;
    }
    let dim = vs[0].len();
    let m: Vec<f64> = (0..dim)
        .map(|j| vs.iter().map(|v| v[j]).sum::<f64>() / vs.len() as f64)
        .collect();
    for v in vs.iter_mut() {
        v.iter_mut().zip(&m).for_each(|(x, c)| *x -= c);
    }
    let max = vs
        .iter()
        .map(|v| {
            let qv = q.apply(v);
            linalg::dot(&qv, &qv).sqrt()
        })
        .fold(0.0, f64::max);
    let factor = if max > 0.0 { target / max } else { 0.0 };
    for v in vs.iter_mut() {
        v.iter_mut().for_each(|x| *x *= factor);
    }
}

/// Same as `calibrate_offsets` but normalizing the RMS over each group, so
/// the largest per-client variance hits `target²`.
fn calibrate_groups(groups: &mut [Vec<Vec<f64>>], q: &SymMatrix, target: f64) {
    let mut max_rms: f64 = 0.0;
    for g in groups.iter_mut() {
        let dim = g[0].len();
        let m: Vec<f64> = (0..dim)
            .map(|j| g.iter().map(|v| v[j]).sum::<f64>() / g.len() as f64)
            .collect();
        for v in g.iter_mut() {
            v.iter_mut().zip(&m).for_each(|(x, c)| *x -= c);
        }
        let ms = g
            .iter()
            .map(|v| {
                let qv = q.apply(v);
                linalg::dot(&qv, &qv)
            })
            .sum::<f64>()
            / g.len() as f64;
        max_rms = max_rms.max(ms.sqrt());
    }
    let factor = if max_rms > 0.0 { target / max_rms } else { 0.0 };
    for g in groups.iter_mut() {
        for v in g.iter_mut() {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

fn check_spec(spec: &SuiteSpec) -> Result<()> {
    if spec.clients == 0 {
        return Err(ObjectiveError::EmptySuite);
    }
    if spec.points_per_client == 0 {
        return Err(ObjectiveError::EmptyDataset);
    }
    if spec.dim == 0 {
        return Err(LinalgError::ZeroDimension.into());
    }
    let finite = [spec.heterogeneity, spec.spread, spec.mu, spec.smoothness, spec.center, spec.beta]
        .iter()
        .all(|v| v.is_finite());
    if !finite || spec.heterogeneity < 0.0 || spec.spread < 0.0 || spec.beta < 0.0 {
        return Err(ObjectiveError::InvalidParameter(
            "heterogeneity, spread and beta must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

fn anchored_suite(spec: &SuiteSpec, seed: u64) -> Result<ObjectiveSuite> {
    check_spec(spec)?;
    if !(spec.mu > 0.0 && spec.mu <= spec.smoothness) {
        return Err(ObjectiveError::InvalidParameter(format!(
            "need 0 < mu <= L (mu = {}, L = {})",
            spec.mu, spec.smoothness
        )));
    }
    let mut rng = rng::stream(seed, Stream::Objective, &[]);
    let d = spec.dim;

    // Spectrum: L first, mu last, evenly spaced between.
    let eig: Vec<f64> = if d == 1 {
        vec![spec.smoothness]
    } else {
        (0..d)
            .map(|k| spec.smoothness + (spec.mu - spec.smoothness) * k as f64 / (d - 1) as f64)
            .collect()
    };
    let hessian = if d == 1 {
        SymMatrix::diagonal(&eig)
    } else {
        SymMatrix::from_eigen(&random_orthonormal(&mut rng, d), &eig)?
    };
    let (q_min, q_max) = (eig[eig.len() - 1], eig[0]);

    let mut offsets: Vec<Vec<f64>> = (0..spec.clients).map(|_| gaussian_vec(&mut rng, d)).collect();
    calibrate_offsets(&mut offsets, &hessian, spec.heterogeneity);
    let mut spreads: Vec<Vec<Vec<f64>>> = (0..spec.clients)
        .map(|_| {
            (0..spec.points_per_client)
                .map(|_| gaussian_vec(&mut rng, d))
                .collect()
        })
        .collect();
    calibrate_groups(&mut spreads, &hessian, spec.spread);

    let hessian = Arc::new(hessian);
    let ripple = spec.kind == ObjectiveKind::SmoothNonconvex;
    let mut clients = Vec::with_capacity(spec.clients);
    for (r, (off, pts)) in offsets.iter().zip(&spreads).enumerate() {
        let points = pts
            .iter()
            .map(|e| DataPoint {
                features: (0..d).map(|j| spec.center + off[j] + e[j]).collect(),
                label: 0.0,
            })
            .collect();
        let loss = if ripple {
            Loss::Ripple {
                hessian: hessian.clone(),
                beta: spec.beta,
            }
        } else {
            Loss::Quadratic {
                hessian: hessian.clone(),
            }
        };
        clients.push(ClientDataset::new(r, d, loss, points)?);
    }
    if ripple {
        // sin² has second derivative 2cos(2x) ∈ [−2, 2].
        let l = q_max + 2.0 * spec.beta;
        let mu = (q_min - 2.0 * spec.beta).max(0.0);
        finish_anchored(ObjectiveKind::SmoothNonconvex, clients, &hessian, mu, l)
    } else {
        finish_anchored(ObjectiveKind::StronglyConvexQuadratic, clients, &hessian, q_min, q_max)
    }
}

/// Quadratic suite with 8 points per client, unit point spread and anchors
/// centered at the all-ones vector.
pub fn make_quadratic_suite(
    clients: usize,
    dim: usize,
    heterogeneity: f64,
    mu: f64,
    smoothness: f64,
    seed: u64,
) -> Result<ObjectiveSuite> {
    SuiteSpec {
        kind: ObjectiveKind::StronglyConvexQuadratic,
        clients,
        dim,
        heterogeneity,
        mu,
        smoothness,
        ..SuiteSpec::default()
    }
    .build(seed)
}

fn logistic_suite(spec: &SuiteSpec, seed: u64) -> Result<ObjectiveSuite> {
    check_spec(spec)?;
    if !(spec.mu > 0.0) {
        return Err(ObjectiveError::InvalidParameter(
            "logistic regularization mu must be positive".into(),
        ));
    }
    let mut rng = rng::stream(seed, Stream::Objective, &[]);
    let d = spec.dim;
    let truth = gaussian_vec(&mut rng, d);
    let mut shifts: Vec<Vec<f64>> = (0..spec.clients).map(|_| gaussian_vec(&mut rng, d)).collect();
    calibrate_offsets(&mut shifts, &SymMatrix::identity(d), spec.heterogeneity);

    let mut max_norm_sq: f64 = 0.0;
    let mut datasets = Vec::with_capacity(spec.clients);
    for shift in &shifts {
        let mut pts = Vec::with_capacity(spec.points_per_client);
        for _ in 0..spec.points_per_client {
            let z: Vec<f64> = gaussian_vec(&mut rng, d)
                .iter()
                .zip(shift)
                .map(|(e, s)| spec.spread * e + s)
                .collect();
            let label = if linalg::dot(&truth, &z) >= 0.0 { 1.0 } else { -1.0 };
            max_norm_sq = max_norm_sq.max(linalg::dot(&z, &z));
            pts.push(DataPoint { features: z, label });
        }
        datasets.push(pts);
    }
    let reg = spec.mu;
    let clients = datasets
        .into_iter()
        .enumerate()
        .map(|(r, pts)| ClientDataset::new(r, d, Loss::Logistic { reg }, pts))
        .collect::<Result<Vec<_>>>()?;
    let smoothness = max_norm_sq / 4.0 + reg;
    let mut suite = ObjectiveSuite {
        kind: ObjectiveKind::Logistic,
        clients,
        global_min: None,
        mu: reg,
        smoothness,
        exact_sigma: None,
        exact_kappa: None,
    };
    suite.validate()?;
    suite.global_min = Some(minimize_by_gd(&suite)?);
    Ok(suite)
}

/// Plain gradient descent with step 1/L until ‖∇F‖ stops shrinking.
fn minimize_by_gd(suite: &ObjectiveSuite) -> Result<ParamVector> {
    let mut x = ParamVector::zeros(suite.dim());
    let step = 1.0 / suite.smoothness;
    for _ in 0..200_000 {
        let g = global_gradient(suite, &x)?;
        if g.norm() <= 1e-13 {
            break;
        }
        x = x.add_scaled(-step, &g)?;
    }
    Ok(x)
}

/// ∇F(x) = (1/R) Σ_r ∇F_r(x).
pub fn global_gradient(suite: &ObjectiveSuite, x: &ParamVector) -> Result<ParamVector> {
    if suite.clients.is_empty() {
        return Err(ObjectiveError::EmptySuite);
    }
    let grads = suite
        .clients
        .iter()
        .map(|c| c.full_gradient(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(linalg::mean(&grads)?)
}

pub fn full_gradient(client: &ClientDataset, x: &ParamVector) -> Result<ParamVector> {
    client.full_gradient(x)
}

pub fn minibatch_gradient(
    client: &ClientDataset,
    x: &ParamVector,
    b: usize,
    rng: &mut SimRng,
) -> Result<ParamVector> {
    client.minibatch_gradient(x, b, rng)
}

/// Empirical σ and κ at a set of probe points.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneityReport {
    pub sigma_hat: f64,
    pub kappa_hat: f64,
    pub probe_count: usize,
    /// σ̂²/b, the mini-batch variance bound at batch size `b`.
    pub batch_variance_bound: f64,
}

pub fn estimate_sigma_kappa(
    suite: &ObjectiveSuite,
    probes: &[ParamVector],
    b: usize,
) -> Result<HeterogeneityReport> {
    if probes.is_empty() {
        return Err(ObjectiveError::InvalidParameter("need at least one probe".into()));
    }
    if b == 0 {
        return Err(ObjectiveError::BatchSize { b, n: 0 });
    }
    let mut sigma_sq: f64 = 0.0;
    let mut kappa: f64 = 0.0;
    for x in probes {
        let global = global_gradient(suite, x)?;
        for c in &suite.clients {
            sigma_sq = sigma_sq.max(c.point_variance(x)?);
            kappa = kappa.max(c.full_gradient(x)?.dist_sq(&global)?.sqrt());
        }
    }
    Ok(HeterogeneityReport {
        sigma_hat: sigma_sq.sqrt(),
        kappa_hat: kappa,
        probe_count: probes.len(),
        batch_variance_bound: sigma_sq / b as f64,
    })
}

/// σ and κ for a suite: exact when known, otherwise estimated at `probes`.
pub fn sigma_kappa(suite: &ObjectiveSuite, probes: &[ParamVector]) -> Result<(f64, f64)> {
    match (suite.exact_sigma, suite.exact_kappa) {
        (Some(s), Some(k)) => Ok((s, k)),
        _ => {
            let r = estimate_sigma_kappa(suite, probes, 1)?;
            Ok((r.sigma_hat, r.kappa_hat))
        }
    }
}
