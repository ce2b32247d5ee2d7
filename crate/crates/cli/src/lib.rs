//! Command implementations behind the `byzsim` binary. Each `cmd_*`
//! returns the process exit code.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use byzsim_core::fedsim::{self, ExperimentConfig, RunOutput, SimError, StepSize};
use byzsim_core::verify::criteria::{self, NAMES};
use byzsim_core::verify::sweep::{floor_of_run, SweepAxis};
use byzsim_core::verify::{Calibration, SuiteKind, SuiteOptions, VerifyError};
use rayon::prelude::*;
use thiserror::Error;

use config::ManifestInfo;
use output::SummaryRow;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_NO_CALIBRATION: i32 = 3;

/// Environment variable that replaces the config's `seed`.
pub const SEED_ENV: &str = "BYZSIM_SEED";
pub const CALIBRATION_FILE: &str = "calibration.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Sim(SimError::Diverged { .. }) => EXIT_DIVERGED,
            _ => EXIT_CONFIG,
        }
    }
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok().filter(|s| !s.trim().is_empty())
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes `metrics.csv` and `manifest.ini` into `dir`. The manifest holds
/// the config with the step size resolved to the value actually used.
fn write_run(dir: &Path, cfg: &ExperimentConfig, eta: f64, rows: &[fedsim::MetricsRow]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("metrics.csv");
    std::fs::write(&csv_path, output::metrics_csv(rows))?;
    let mut resolved = cfg.clone();
    resolved.eta = StepSize::Fixed(eta);
    let info = ManifestInfo {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at: now_unix(),
        csv_path: "metrics.csv".to_string(),
    };
    std::fs::write(dir.join("manifest.ini"), config::to_ini(&resolved, Some(&info)))?;
    Ok(csv_path)
}

/// Runs `cfg` and writes its artifacts; divergence still writes the rows
/// produced before the blow-up.
fn run_into(dir: &Path, cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let suite = cfg
        .objective
        .build(cfg.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    match fedsim::run_with_suite(cfg, &suite) {
        Ok(out) => {
            write_run(dir, cfg, out.eta, &out.rows)?;
            Ok(out)
        }
        Err(SimError::Diverged { t, rows }) => {
            let eta = cfg.resolve_eta(suite.smoothness);
            write_run(dir, cfg, eta, &rows)?;
            Err(SimError::Diverged { t, rows }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn report(err: &CliError) -> i32 {
    match err {
        CliError::Sim(SimError::Diverged { t, .. }) => eprintln!("diverged at t = {t}"),
        other => eprintln!("error: {other}"),
    }
    err.exit_code()
}

pub fn cmd_run(config_path: &Path, overrides: &[String], out_dir: &Path) -> i32 {
    let result = config::load_config(config_path, env_seed().as_deref(), overrides)
        .and_then(|cfg| run_into(out_dir, &cfg));
    match result {
        Ok(out) => {
            let last = out.rows.last().expect("a run has at least one row");
            println!(
                "{} rows -> {}; final loss {:.6e}, syncs {}, filter removals {}",
                out.rows.len(),
                out_dir.join("metrics.csv").display(),
                last.loss,
                out.syncs.len(),
                out.syncs.iter().map(|s| s.removed).sum::<usize>()
            );
            EXIT_OK
        }
        Err(e) => report(&e),
    }
}

/// Parses `v1,v2,…` into numbers, keeping the original spelling for
/// directory names and the summary.
pub fn parse_values(list: &str) -> Result<Vec<(String, f64)>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map(|v| (s.to_string(), v))
                .map_err(|_| CliError::Config(format!("sweep value `{s}` is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(CliError::Config("no sweep values given".into()))
            } else {
                Ok(v)
            }
        })
}

fn sweep_point(dir: &Path, axis: SweepAxis, label: &str, cfg: &ExperimentConfig) -> Result<SummaryRow, CliError> {
    let mut row = SummaryRow {
        axis: axis.name().to_string(),
        value: label.to_string(),
        status: "ok",
        fit: None,
        final_dist_sq: None,
    };
    match run_into(dir, cfg) {
        Ok(out) => {
            row.final_dist_sq = out.rows.last().and_then(|r| r.dist_sq);
            if row.final_dist_sq.is_none() {
                row.status = "no_minimizer";
            } else {
                match floor_of_run(&out, cfg.h) {
                    Ok(fit) => row.fit = Some(fit),
                    Err(_) => row.status = "fit_failed",
                }
            }
        }
        Err(CliError::Sim(SimError::Diverged { .. })) => row.status = "diverged",
        Err(e) => return Err(e),
    }
    Ok(row)
}

pub fn cmd_sweep(
    config_path: &Path,
    axis: &str,
    values: &str,
    jobs: usize,
    overrides: &[String],
    out_dir: &Path,
) -> i32 {
    let prepared = (|| -> Result<_, CliError> {
        let axis = SweepAxis::parse(axis).ok_or_else(|| {
            CliError::Config(format!("invalid axis `{axis}`; expected eps, H, K, b or attack.magnitude"))
        })?;
        let base = config::load_config(config_path, env_seed().as_deref(), overrides)?;
        let points = parse_values(values)?
            .into_iter()
            .map(|(label, v)| {
                let mut c = base.clone();
                axis.apply(&mut c, v)?;
                Ok((label, c))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok((axis, points, pool))
    })();
    let (axis, points, pool) = match prepared {
        Ok(p) => p,
        Err(e) => return report(&e),
    };
    let rows = pool.install(|| {
        points
            .par_iter()
            .map(|(label, cfg)| sweep_point(&out_dir.join(format!("{}={label}", axis.name())), axis, label, cfg))
            .collect::<Result<Vec<_>, CliError>>()
    });
    let rows = match rows {
        Ok(r) => r,
        Err(e) => return report(&e),
    };
    let summary = out_dir.join("sweep_summary.csv");
    if let Err(e) = std::fs::write(&summary, output::summary_csv(&rows)) {
        return report(&e.into());
    }
    for r in &rows {
        println!(
            "{}={:<10} {:<12} floor {}",
            r.axis,
            r.value,
            r.status,
            r.fit.as_ref().map_or("-".to_string(), |f| format!("{:.6e}", f.floor))
        );
    }
    println!("summary -> {}", summary.display());
    if rows.iter().any(|r| r.status == "diverged") {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    }
}

/// Where `verify` and `calibrate` look for the constants when no path is
/// given: `calibration.txt` in the working directory, else the copy at the
/// workspace root.
pub fn default_calibration_path() -> PathBuf {
    let local = PathBuf::from(CALIBRATION_FILE);
    if local.exists() {
        local
    } else {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(CALIBRATION_FILE)
    }
}

fn margins_table(cal: &Calibration, outcomes: &[criteria::CheckOutcome]) {
    println!();
    println!("calibrated constants: rage_c = {:.6}  c_upsilon = {:.6}  c_upsilon_gd = {:.6}", cal.rage_c, cal.c_upsilon, cal.c_upsilon_gd);
    println!("{:>3}  {:<26} {:>14} {:>14} {:>10}", "id", "criterion", "measured", "bound", "margin");
    for o in outcomes {
        let margin = if o.bound.is_finite() && o.bound != 0.0 {
            format!("{:.3}", o.measured / o.bound)
        } else {
            "-".to_string()
        };
        println!("{:>3}  {:<26} {:>14.6e} {:>14.6e} {:>10}", o.id, o.name, o.measured, o.bound, margin);
    }
}

pub fn cmd_verify(suite: &str, calibration: Option<&Path>, score_multiplier: Option<f64>) -> i32 {
    let Some(kind) = SuiteKind::parse(suite) else {
        eprintln!("error: unknown suite `{suite}`; expected fast or full");
        return EXIT_CONFIG;
    };
    let path = calibration.map_or_else(default_calibration_path, Path::to_path_buf);
    let cal = match (kind, path.exists()) {
        (_, true) => match Calibration::load(&path) {
            Ok(c) => Some(c),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return EXIT_NO_CALIBRATION;
            }
        },
        (SuiteKind::Full, false) => {
            eprintln!("error: calibration file {} not found (run `byzsim calibrate`)", path.display());
            return EXIT_NO_CALIBRATION;
        }
        (SuiteKind::Fast, false) => None,
    };
    let mut opts = SuiteOptions {
        calibration: cal,
        ..SuiteOptions::default()
    };
    if let Some(m) = score_multiplier {
        opts.score_multiplier = m;
    }
    let ids: Vec<usize> = match kind {
        SuiteKind::Fast => vec![1, 2, 10],
        SuiteKind::Full => (1..=NAMES.len()).collect(),
    };
    let mut outcomes = Vec::with_capacity(ids.len());
    for id in ids {
        let o = criteria::run_criterion(id, &opts);
        println!("{}", o.line());
        outcomes.push(o);
    }
    if let (SuiteKind::Full, Some(cal)) = (kind, &opts.calibration) {
        margins_table(cal, &outcomes);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_CONFIG
    }
}

pub fn cmd_calibrate(out: &Path) -> i32 {
    match criteria::calibrate() {
        Ok(cal) => match cal.save(out) {
            Ok(()) => {
                print!("{}", cal.to_text());
                println!("-> {}", out.display());
                EXIT_OK
            }
            Err(e) => report(&e.into()),
        },
        Err(e) => report(&e.into()),
    }
}
