//! The ten acceptance criteria against the committed calibration. Prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};

use byzsim_cli::config;
use byzsim_core::verify::criteria::{self, CheckOutcome};
use byzsim_core::verify::calibration::ACCEPTANCE_SEED_BASE;
use byzsim_core::verify::{Calibration, SuiteOptions};

/// Byte-level determinism through the binary: two `run`s of the same
/// config, and an ε sweep under one and four jobs.
fn cli_determinism(dir: &Path) -> Result<(), String> {
    let cfg = criteria::determinism_config(ACCEPTANCE_SEED_BASE);
    let cfg_path = dir.join("determinism.ini");
    std::fs::write(&cfg_path, config::to_ini(&cfg, None)).map_err(|e| e.to_string())?;
    let invoke = |args: &[&str]| -> Result<(), String> {
        let o = Command::new(env!("CARGO_BIN_EXE_byzsim"))
            .env_remove(byzsim_cli::SEED_ENV)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if o.status.success() {
            Ok(())
        } else {
            Err(format!("`{}` exited {:?}", args.join(" "), o.status.code()))
        }
    };
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let cfg_s = cfg_path.to_string_lossy().into_owned();
    invoke(&["run", &cfg_s, "--out", &p("a")])?;
    invoke(&["run", &cfg_s, "--out", &p("b")])?;
    let values = "0,0.125,0.25";
    invoke(&["sweep", &cfg_s, "--axis", "eps", "--values", values, "--jobs", "1", "--out", &p("j1")])?;
    invoke(&["sweep", &cfg_s, "--axis", "eps", "--values", values, "--jobs", "4", "--out", &p("j4")])?;

    let read = |rel: &str| std::fs::read(dir.join(rel)).map_err(|e| format!("{rel}: {e}"));
    let mut pairs = vec![("a/metrics.csv".to_string(), "b/metrics.csv".to_string())];
    pairs.push(("j1/sweep_summary.csv".into(), "j4/sweep_summary.csv".into()));
    for v in values.split(',') {
        pairs.push((format!("j1/eps={v}/metrics.csv"), format!("j4/eps={v}/metrics.csv")));
    }
    if read("a/metrics.csv")? != read("j1/eps=0.25/metrics.csv")? {
        return Err("sweep point differs from the matching single run".into());
    }
    for (x, y) in &pairs {
        if read(x)? != read(y)? {
            return Err(format!("{x} and {y} differ"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cal_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../calibration.txt");
    let calibration = match Calibration::load(&cal_path) {
        Ok(c) => Some(c),
        Err(e) => {
            println!("calibration unavailable ({}): {e}", cal_path.display());
            None
        }
    };
    let opts = SuiteOptions {
        calibration,
        ..SuiteOptions::default()
    };
    let mut outcomes: Vec<CheckOutcome> = Vec::new();
    for id in 1..=criteria::NAMES.len() {
        let mut o = criteria::run_criterion(id, &opts);
        if id == 8 {
            let cli = tempfile::TempDir::new()
                .map_err(|e| e.to_string())
                .and_then(|dir| cli_determinism(dir.path()));
            match cli {
                Ok(()) => o.detail.push_str("; CLI CSVs identical across reruns and --jobs 1/4"),
                Err(e) => {
                    o.passed = false;
                    o.detail.push_str(&format!("; CLI: {e}"));
                }
            }
        }
        println!("{}", o.line());
        outcomes.push(o);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} of {} passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
