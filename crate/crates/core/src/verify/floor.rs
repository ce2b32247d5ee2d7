//! Geometric-decay-plus-floor fits and the theoretical error floors.

use super::{Result, VerifyError};
use crate::rage;

/// Least-squares fit of `a·ρ^t + f` to a series sampled at sync indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorFit {
    /// Per-iteration ratio.
    pub rho: f64,
    pub amplitude: f64,
    pub floor: f64,
    pub r_squared: f64,
    pub samples: usize,
}

struct Candidate {
    sse: f64,
    a: f64,
    f: f64,
}

fn solve(ts: &[f64], ys: &[f64], rho: f64) -> Candidate {
    let phi: Vec<f64> = ts.iter().map(|t| rho.powf(*t)).collect();
    let n = ts.len() as f64;
    let (sp, spp) = (phi.iter().sum::<f64>(), phi.iter().map(|p| p * p).sum::<f64>());
    let sy: f64 = ys.iter().sum();
    let spy: f64 = phi.iter().zip(ys).map(|(p, y)| p * y).sum();
    let det = n * spp - sp * sp;
    let (mut a, mut f) = if det > 1e-12 * n * spp.max(1e-300) {
        ((n * spy - sp * sy) / det, (spp * sy - sp * spy) / det)
    } else {
        (0.0, sy / n)
    };
    if f < 0.0 {
        f = 0.0;
        a = if spp > 0.0 { spy / spp } else { 0.0 };
    }
    let sse = phi
        .iter()
        .zip(ys)
        .map(|(p, y)| (a * p + f - y).powi(2))
        .sum();
    Candidate { sse, a, f }
}

/// Fits `a·ρ^t + f` (with `f ≥ 0`) to `series[t]` at `t = 0, H, 2H, …`.
///
/// ρ is found by a log-spaced scan of `−ln ρ` followed by golden-section
/// refinement; `a` and `f` are solved exactly for each ρ.
pub fn fit_floor(series: &[f64], sync_stride: usize) -> Result<FloorFit> {
    if sync_stride == 0 {
        return Err(VerifyError::InvalidArgument("sync stride must be positive".into()));
    }
    if series.len() < 3 * sync_stride || series.len() < 3 {
        return Err(VerifyError::InvalidArgument(format!(
            "series of length {} too short for stride {sync_stride}",
            series.len()
        )));
    }
    if series.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(VerifyError::InvalidArgument(
            "series values must be finite and positive".into(),
        ));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = series
        .iter()
        .enumerate()
        .step_by(sync_stride)
        .map(|(t, y)| (t as f64, *y))
        .unzip();

    let grid = 600;
    let (lo, hi) = (-9.0f64, 2.0f64);
    let at = |u: f64| solve(&ts, &ys, (-(10f64.powf(u))).exp());
    let mut best_i: usize = 0;
    let mut best_sse = f64::INFINITY;
    for i in 0..=grid {
        let u = lo + (hi - lo) * i as f64 / grid as f64;
        let c = at(u);
        if c.sse < best_sse {
            best_sse = c.sse;
            best_i = i;
        }
    }
    let step = (hi - lo) / grid as f64;
    let (mut a, mut b) = (
        lo + step * best_i.saturating_sub(1) as f64,
        lo + step * (best_i + 1).min(grid) as f64,
    );
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (at(x1).sse, at(x2).sse);
    for _ in 0..200 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = at(x1).sse;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = at(x2).sse;
        }
    }
    let grid_u = lo + step * best_i as f64;
    let refined_u = 0.5 * (a + b);
    let u = if at(refined_u).sse <= best_sse { refined_u } else { grid_u };
    let rho = (-(10f64.powf(u))).exp();
    let c = at(u);
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let sst: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let r_squared = if sst > 0.0 { 1.0 - c.sse / sst } else { 1.0 };
    Ok(FloorFit {
        rho,
        amplitude: c.a,
        floor: c.f,
        r_squared,
        samples: ys.len(),
    })
}

/// Γ and its parts for mini-batch runs.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaBound {
    pub gamma: f64,
    pub upsilon_sq: f64,
    pub sigma0_sq: f64,
    pub c_upsilon: f64,
    pub h: usize,
    pub sigma: f64,
    pub b: usize,
    pub kappa: f64,
}

impl GammaBound {
    /// Γ recomputed from the stored parts.
    pub fn assemble(&self) -> f64 {
        let h = self.h as f64;
        3.0 * self.upsilon_sq / h
            + 11.0 * h * self.sigma * self.sigma / self.b as f64
            + 36.0 * h * self.kappa * self.kappa
    }

    /// `(13/μ²)·Γ`, the strongly convex floor.
    pub fn convex_floor(&self, mu: f64) -> f64 {
        13.0 / (mu * mu) * self.gamma
    }

    /// `(9/2)·Γ`, the nonconvex stationarity floor.
    pub fn nonconvex_floor(&self) -> f64 {
        4.5 * self.gamma
    }
}

/// Υ² = c·σ0²·(ε + ε') and Γ = 3Υ²/H + 11Hσ²/b + 36Hκ².
#[allow(clippy::too_many_arguments)]
pub fn gamma_bound(
    h: usize,
    sigma: f64,
    b: usize,
    kappa: f64,
    eps: f64,
    eps_prime: f64,
    d: usize,
    k: usize,
    c_upsilon: f64,
) -> Result<GammaBound> {
    if h == 0 {
        return Err(VerifyError::InvalidArgument("H must be positive".into()));
    }
    if !(c_upsilon > 0.0) {
        return Err(VerifyError::InvalidArgument("c_upsilon must be positive".into()));
    }
    let sigma0_sq = rage::sigma0_sgd(h, sigma, b, eps_prime, d, k, kappa)?;
    let upsilon_sq = c_upsilon * sigma0_sq * (eps + eps_prime);
    let mut out = GammaBound {
        gamma: 0.0,
        upsilon_sq,
        sigma0_sq,
        c_upsilon,
        h,
        sigma,
        b,
        kappa,
    };
    out.gamma = out.assemble();
    Ok(out)
}

/// Γ_GD and its parts for full-batch runs.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaBoundGd {
    pub gamma: f64,
    pub upsilon_sq: f64,
    pub c_upsilon: f64,
    pub h: usize,
    pub kappa: f64,
}

impl GammaBoundGd {
    pub fn assemble(&self) -> f64 {
        let h = self.h as f64;
        2.0 * self.upsilon_sq / h + 25.0 * h * self.kappa * self.kappa
    }

    /// `(14/μ²)·Γ_GD`.
    pub fn convex_floor(&self, mu: f64) -> f64 {
        14.0 / (mu * mu) * self.gamma
    }
}

/// Υ_GD² = c·H²κ²ε and Γ_GD = 2Υ_GD²/H + 25Hκ².
pub fn gamma_bound_gd(h: usize, kappa: f64, eps: f64, c_upsilon: f64) -> Result<GammaBoundGd> {
    if h == 0 {
        return Err(VerifyError::InvalidArgument("H must be positive".into()));
    }
    if !(c_upsilon > 0.0) {
        return Err(VerifyError::InvalidArgument("c_upsilon must be positive".into()));
    }
    let upsilon_sq = c_upsilon * (h * h) as f64 * kappa * kappa * eps;
    let mut out = GammaBoundGd {
        gamma: 0.0,
        upsilon_sq,
        c_upsilon,
        h,
        kappa,
    };
    out.gamma = out.assemble();
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
