//! Byzantine reporting strategies.
//!
//! A static set of corrupt clients is drawn once per run. At every
//! synchronization the corrupt clients that happen to be sampled replace
//! the model they would have reported; honest reports pass through
//! untouched. Strategies are expressed relative to the broadcast anchor `x`
//! so the same code corrupts models (anchor = global model) or raw gradient
//! vectors (anchor = 0).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{self, LinalgError, ParamVector, DEFAULT_EIG_TOL};
use crate::rng::{self, SimRng, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("corrupt fraction must lie in [0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("unknown attack kind `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, AttackError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackKind {
    None,
    /// Report the zero vector.
    ErasureZero,
    /// Reflect the honest update through the anchor and stretch it by `scale`.
    SignFlip { scale: f64 },
    /// Report the anchor plus `scale` times standard normal noise.
    GaussianBlowup { scale: f64 },
    /// All corrupt clients report the honest mean shifted by `magnitude` along
    /// the all-ones direction.
    ColludingShift { magnitude: f64 },
    /// All corrupt clients report the honest mean shifted by `magnitude` along
    /// the top eigenvector of the honest reports' covariance.
    TopEigenDrift { magnitude: f64 },
}

impl AttackKind {
    pub const NAMES: [&'static str; 6] = [
        "none",
        "erasure_zero",
        "sign_flip",
        "gaussian_blowup",
        "colluding_shift",
        "top_eigen_drift",
    ];

    /// Builds a kind from its name and a strength parameter (ignored by the
    /// parameter-free kinds).
    pub fn from_name(name: &str, magnitude: f64) -> Result<Self> {
        Ok(match name {
            "none" => Self::None,
            "erasure_zero" | "erasure" => Self::ErasureZero,
            "sign_flip" => Self::SignFlip { scale: magnitude },
            "gaussian_blowup" | "gaussian" => Self::GaussianBlowup { scale: magnitude },
            "colluding_shift" | "colluding" => Self::ColludingShift { magnitude },
            "top_eigen_drift" => Self::TopEigenDrift { magnitude },
            other => return Err(AttackError::UnknownKind(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ErasureZero => "erasure_zero",
            Self::SignFlip { .. } => "sign_flip",
            Self::GaussianBlowup { .. } => "gaussian_blowup",
            Self::ColludingShift { .. } => "colluding_shift",
            Self::TopEigenDrift { .. } => "top_eigen_drift",
        }
    }

    pub fn magnitude(&self) -> f64 {
        match *self {
            Self::None | Self::ErasureZero => 0.0,
            Self::SignFlip { scale } | Self::GaussianBlowup { scale } => scale,
            Self::ColludingShift { magnitude } | Self::TopEigenDrift { magnitude } => magnitude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// ε, the fraction of all R clients that are corrupt. Not capped at the
    /// filter's tolerance so sweeps can cross it.
    pub corrupt_fraction: f64,
}

impl AttackSpec {
    pub fn none() -> Self {
        Self {
            kind: AttackKind::None,
            corrupt_fraction: 0.0,
        }
    }
}

/// ⌊εR⌋, guarding against products like 0.29·100 = 28.999….
pub fn corrupt_count(r: usize, fraction: f64) -> usize {
    ((fraction * r as f64) + 1e-9).floor() as usize
}

/// The static corrupt set: ⌊εR⌋ distinct client indices, ascending.
pub fn select_corrupt(r: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(AttackError::InvalidFraction(fraction));
    }
    let m = corrupt_count(r, fraction).min(r);
    let mut rng = rng::stream(seed, Stream::Corruption, &[]);
    let mut idx: Vec<usize> = (0..r).collect();
    for i in 0..m {
        let j = rng.gen_range(i..r);
        idx.swap(i, j);
    }
    idx.truncate(m);
    idx.sort_unstable();
    Ok(idx)
}

fn unit_ones(dim: usize) -> Vec<f64> {
    vec![1.0 / (dim as f64).sqrt(); dim]
}

/// Fixes the sign of a direction so that its coordinate sum is positive, or
/// its first nonzero coordinate when the sum vanishes.
fn orient(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    let flip = if s != 0.0 {
        s < 0.0
    } else {
        v.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Replaces the reports of `corrupt` clients according to `kind`.
///
/// `reports` holds what every sampled client would honestly send; entries
/// not in `corrupt` are returned unchanged. `anchor` is the vector the
/// round started from.
pub fn corrupt_reports(
    anchor: &ParamVector,
    reports: &BTreeMap<usize, ParamVector>,
    corrupt: &[usize],
    kind: &AttackKind,
    rng: &mut SimRng,
) -> Result<BTreeMap<usize, ParamVector>> {
    let mut out = reports.clone();
    if matches!(kind, AttackKind::None) {
        return Ok(out);
    }
    let dim = anchor.dim();
    let is_corrupt = |r: &usize| corrupt.binary_search(r).is_ok();
    let honest: Vec<&[f64]> = reports
        .iter()
        .filter(|(r, _)| !is_corrupt(r))
        .map(|(_, v)| v.as_slice())
        .collect();
    let honest_mean = if honest.is_empty() {
        anchor.clone()
    } else {
        linalg::mean(&honest)?
    };

    let shared = match *kind {
        AttackKind::ColludingShift { magnitude } => {
            Some(honest_mean.add_scaled(magnitude, &ParamVector::new(unit_ones(dim))?)?)
        }
        AttackKind::TopEigenDrift { magnitude } => {
            let dir = if honest.len() >= 2 {
                linalg::sample_cov_lambda_max(&honest, DEFAULT_EIG_TOL)?
                    .vector
                    .into_inner()
            } else {
                unit_ones(dim)
            };
            Some(honest_mean.add_scaled(magnitude, &ParamVector::new(orient(dir))?)?)
        }
        _ => None,
    };

    for (r, v) in out.iter_mut() {
        if !is_corrupt(r) {
            continue;
        }
        *v = match *kind {
            AttackKind::None => unreachable!(),
            AttackKind::ErasureZero => ParamVector::zeros(dim),
            AttackKind::SignFlip { scale } => anchor.add_scaled(-scale, &v.sub(anchor)?)?,
            AttackKind::GaussianBlowup { scale } => {
                let noise: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                anchor.add_scaled(scale, &ParamVector::new(noise)?)?
            }
            AttackKind::ColludingShift { .. } | AttackKind::TopEigenDrift { .. } => {
                shared.clone().expect("shared report computed above")
            }
        };
    }
    Ok(out)
}
