//! One-parameter sweeps and error-floor extraction from a run.

use super::floor::{fit_floor, FloorFit};
use super::{Result, VerifyError};
use crate::attacks::AttackKind;
use crate::fedsim::{self, ExperimentConfig, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Eps,
    H,
    K,
    B,
    AttackMagnitude,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eps" => Some(Self::Eps),
            "H" => Some(Self::H),
            "K" => Some(Self::K),
            "b" => Some(Self::B),
            "attack.magnitude" => Some(Self::AttackMagnitude),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Eps => "eps",
            Self::H => "H",
            Self::K => "K",
            Self::B => "b",
            Self::AttackMagnitude => "attack.magnitude",
        }
    }

    /// Sets this axis of `cfg` to `value`.
    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
                Ok(v as usize)
            } else {
                Err(VerifyError::InvalidArgument(format!(
                    "axis {} needs a positive integer, got {v}",
                    self.name()
                )))
            }
        };
        match self {
            Self::Eps => cfg.eps = value,
            Self::H => cfg.h = count(value)?,
            Self::K => cfg.k = count(value)?,
            Self::B => cfg.b = count(value)?,
            Self::AttackMagnitude => {
                cfg.attack = AttackKind::from_name(cfg.attack.name(), value)?;
            }
        }
        cfg.validate()?;
        Ok(())
    }
}

/// Fits the error floor of `‖x^t − x*‖²` at sync indices. Exact zeros are
/// lifted to the smallest positive double so the fit stays defined.
pub fn floor_of_run(out: &RunOutput, h: usize) -> Result<FloorFit> {
    let series = out
        .rows
        .iter()
        .map(|r| {
            r.dist_sq
                .map(|d| d.max(f64::MIN_POSITIVE))
                .ok_or_else(|| VerifyError::InvalidArgument("run has no known minimizer".into()))
        })
        .collect::<Result<Vec<f64>>>()?;
    fit_floor(&series, h)
}

/// Runs `cfg` with `axis` set to `value` and fits its floor.
pub fn sweep_point(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    value: f64,
) -> Result<(ExperimentConfig, RunOutput, FloorFit)> {
    let mut c = cfg.clone();
    axis.apply(&mut c, value)?;
    let out = fedsim::run(&c)?;
    let fit = floor_of_run(&out, c.h)?;
    Ok((c, out, fit))
}
