//! Dense vector arithmetic and dominant eigenpairs of symmetric PSD operators.
//!
//! Everything here works at desk scale (d up to a few hundred). The eigensolver
//! is plain power iteration on a matrix-free operator; callers only ever need
//! the top eigenvalue and one maximizing direction.

use std::cmp::Ordering;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub const DEFAULT_EIG_TOL: f64 = 1e-10;
pub const DEFAULT_EIG_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("all weights are zero")]
    ZeroWeights,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// A point in R^d: model parameters, a local model, or a gradient.
///
/// Entries are always finite. Every binary operation checks that both sides
/// share the same dimension.
#[derive(Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(LinalgError::ZeroDimension);
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "ParamVector dimension must be positive");
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Result<Self> {
        if dim == 0 {
            return Err(LinalgError::ZeroDimension);
        }
        Self::new(vec![value; dim])
    }

    /// Unit basis vector e_i.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    fn finite(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self(entries))
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Self::finite(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Self::finite(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        Self::finite(self.0.iter().map(|a| a * factor).collect())
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Self::finite(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + factor * b)
                .collect(),
        )
    }

    pub fn dist_sq(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    /// Lexicographic order on entries using IEEE total ordering. Two vectors
    /// compare equal exactly when they are bitwise identical.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.dim().cmp(&other.dim())
    }
}

impl fmt::Debug for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = LinalgError;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Correctly rounded sum of `values` (Shewchuk's partials, as in Python's
/// `math.fsum`). The result does not depend on the order of the inputs.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }

    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // Round-half-even correction when the remaining partials straddle a tie.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Coordinate-wise mean with correctly rounded sums.
///
/// The result is invariant under any permutation of `points`, and a
/// coordinate on which all points agree is returned unchanged.
pub fn mean<P: AsRef<[f64]>>(points: &[P]) -> Result<ParamVector> {
    let first = points
        .first()
        .ok_or_else(|| LinalgError::InvalidArgument("mean of an empty set".into()))?
        .as_ref();
    let dim = first.len();
    if dim == 0 {
        return Err(LinalgError::ZeroDimension);
    }
    for p in points {
        if p.as_ref().len() != dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                found: p.as_ref().len(),
            });
        }
    }
    let n = points.len() as f64;
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        let v0 = first[j];
        if points.iter().all(|p| p.as_ref()[j] == v0) {
            out.push(v0);
        } else {
            out.push(exact_sum(points.iter().map(|p| p.as_ref()[j])) / n);
        }
    }
    ParamVector::new(out)
}

/// FNV-1a over the bit patterns of a sequence of vectors.
pub fn content_hash<'a, I>(points: I) -> u64
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in points {
        for v in p {
            for byte in v.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

/// Dense symmetric matrix in row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            data[i * n + i] = *d;
        }
        Self { n, data }
    }

    /// Builds `basis * diag(eigenvalues) * basis^T` from orthonormal columns.
    pub fn from_eigen(basis: &[Vec<f64>], eigenvalues: &[f64]) -> Result<Self> {
        let n = eigenvalues.len();
        if basis.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: basis.len(),
            });
        }
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = (0..n)
                    .map(|k| basis[k][i] * eigenvalues[k] * basis[k][j])
                    .sum();
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Ok(Self { n, data })
    }

    /// Row-major constructor; symmetrizes by averaging with the transpose.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for j in 0..n {
                data[i * n + j] = 0.5 * (row[j] + rows[j][i]);
            }
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], x))
            .collect()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply(x))
    }
}

/// Dominant eigenpair of a symmetric PSD operator.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub value: f64,
    pub vector: ParamVector,
    pub iterations: usize,
    /// `‖A v − value·v‖` at return.
    pub residual: f64,
    /// False when `max_iter` ran out before the residual test passed.
    pub converged: bool,
}

/// Power iteration from a start vector drawn deterministically from `seed`.
///
/// Convergence is declared when `‖A v − λ v‖ ≤ tol · |λ|`; the zero operator
/// converges immediately with value 0.
pub fn top_eigenpair<F>(
    apply: F,
    dim: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<EigenResult>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if dim == 0 {
        return Err(LinalgError::ZeroDimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    top_eigenpair_from(apply, start, tol, max_iter)
}

/// Power iteration warm-started from `start` (need not be normalized).
pub fn top_eigenpair_from<F>(
    mut apply: F,
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<EigenResult>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let dim = start.len();
    if dim == 0 {
        return Err(LinalgError::ZeroDimension);
    }
    if !(tol > 0.0) {
        return Err(LinalgError::InvalidArgument(format!(
            "eigen tolerance must be positive, got {tol}"
        )));
    }
    let mut v = start;
    let mut n0 = dot(&v, &v).sqrt();
    if !n0.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if n0 == 0.0 {
        v = vec![1.0; dim];
        n0 = (dim as f64).sqrt();
    }
    v.iter_mut().for_each(|x| *x /= n0);

    let mut last = None;
    for it in 1..=max_iter.max(1) {
        let w = apply(&v);
        if w.len() != dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                found: w.len(),
            });
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let lambda = dot(&v, &w);
        let wn = dot(&w, &w).sqrt();
        if wn == 0.0 {
            return Ok(EigenResult {
                value: 0.0,
                vector: ParamVector(v),
                iterations: it,
                residual: 0.0,
                converged: true,
            });
        }
        let residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * lambda.abs() {
            return Ok(EigenResult {
                value: lambda,
                vector: ParamVector(v),
                iterations: it,
                residual,
                converged: true,
            });
        }
        let next: Vec<f64> = w.iter().map(|x| x / wn).collect();
        last = Some((lambda, std::mem::replace(&mut v, next), residual, it));
    }
    let (value, vector, residual, iterations) = last.expect("at least one iteration");
    Ok(EigenResult {
        value,
        vector: ParamVector(vector),
        iterations,
        residual,
        converged: false,
    })
}

/// Top eigenpair of the weight-normalized scatter matrix
/// `(1/Σw) Σ w_i (p_i − center)(p_i − center)^T`, applied matrix-free.
pub fn cov_lambda_max<P: AsRef<[f64]>>(
    points: &[P],
    weights: &[f64],
    center: &ParamVector,
    tol: f64,
) -> Result<EigenResult> {
    if points.len() != weights.len() {
        return Err(LinalgError::DimensionMismatch {
            expected: points.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(LinalgError::InvalidArgument(
            "weights must be finite and non-negative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(LinalgError::ZeroWeights);
    }
    let dim = center.dim();
    let mut deviations = Vec::with_capacity(points.len());
    let mut kept = Vec::with_capacity(points.len());
    for (p, &w) in points.iter().zip(weights) {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(LinalgError::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        if w > 0.0 {
            deviations.push(
                p.iter()
                    .zip(center.as_slice())
                    .map(|(a, c)| a - c)
                    .collect::<Vec<_>>(),
            );
            kept.push(w / total);
        }
    }
    let seed = content_hash(deviations.iter().map(|d| d.as_slice()));
    top_eigenpair(
        |v| scatter_apply(&deviations, &kept, v),
        dim,
        tol,
        DEFAULT_EIG_MAX_ITER,
        seed,
    )
}

/// `Σ_i w_i d_i (d_i · v)`.
pub(crate) fn scatter_apply(deviations: &[Vec<f64>], weights: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (d, &w) in deviations.iter().zip(weights) {
        let s = w * dot(d, v);
        if s != 0.0 {
            out.iter_mut().zip(d).for_each(|(o, x)| *o += s * x);
        }
    }
    out
}

/// Sample-mean centered covariance λ_max with unit weights.
pub fn sample_cov_lambda_max<P: AsRef<[f64]>>(points: &[P], tol: f64) -> Result<EigenResult> {
    let center = mean(points)?;
    cov_lambda_max(points, &vec![1.0; points.len()], &center, tol)
}
