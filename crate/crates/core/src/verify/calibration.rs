//! Frozen big-O constants, stored as flat `name = value` text.

use std::fmt::Write as _;
use std::path::Path;

use super::{Result, VerifyError};

/// Seeds used when measuring constants; acceptance runs start at
/// [`ACCEPTANCE_SEED_BASE`] so the two families never overlap.
pub const CALIBRATION_SEED_BASE: u64 = 0;
pub const ACCEPTANCE_SEED_BASE: u64 = 1000;

/// Smallest value stored for a constant, so bounds built from it stay
/// well defined when the measured maximum is exactly zero.
pub const CONSTANT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// Robust-mean error constant: ‖ĝ − g_S‖ ≤ C·σ0·√ε̃.
    pub rage_c: f64,
    /// Υ² = c·σ0²·(ε + ε') for mini-batch runs.
    pub c_upsilon: f64,
    /// Υ_GD² = c·H²κ²ε for full-batch runs.
    pub c_upsilon_gd: f64,
}

impl Calibration {
    pub fn parse(text: &str) -> Result<Self> {
        let (mut rage_c, mut c_upsilon, mut c_upsilon_gd) = (None, None, None);
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, value) = line.split_once('=').ok_or_else(|| {
                VerifyError::Calibration(format!("line {}: expected `name = value`", no + 1))
            })?;
            let value: f64 = value.trim().parse().map_err(|_| {
                VerifyError::Calibration(format!("line {}: `{}` is not a number", no + 1, value.trim()))
            })?;
            if !(value.is_finite() && value > 0.0) {
                return Err(VerifyError::Calibration(format!(
                    "line {}: constants must be positive",
                    no + 1
                )));
            }
            match name.trim() {
                "rage_c" => rage_c = Some(value),
                "c_upsilon" => c_upsilon = Some(value),
                "c_upsilon_gd" => c_upsilon_gd = Some(value),
                other => {
                    return Err(VerifyError::Calibration(format!("unknown constant `{other}`")))
                }
            }
        }
        let need = |v: Option<f64>, n: &str| {
            v.ok_or_else(|| VerifyError::Calibration(format!("missing constant `{n}`")))
        };
        Ok(Self {
            rage_c: need(rage_c, "rage_c")?,
            c_upsilon: need(c_upsilon, "c_upsilon")?,
            c_upsilon_gd: need(c_upsilon_gd, "c_upsilon_gd")?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# measured maxima on the calibration seed family (base {CALIBRATION_SEED_BASE})");
        let _ = writeln!(s, "rage_c = {}", self.rage_c);
        let _ = writeln!(s, "c_upsilon = {}", self.c_upsilon);
        let _ = writeln!(s, "c_upsilon_gd = {}", self.c_upsilon_gd);
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
