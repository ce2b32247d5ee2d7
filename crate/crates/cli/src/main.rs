use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "byzsim", version, about = "Byzantine-resilient local SGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv plus manifest.ini.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set attack.kind=sign_flip`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run one experiment per value of a parameter and fit each floor.
    Sweep {
        config: PathBuf,
        /// eps, H, K, b or attack.magnitude.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Run the verification suite and print one PASS/FAIL line per check.
    Verify {
        #[arg(long, default_value = "fast")]
        suite: String,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long, hide = true)]
        rage_score_multiplier: Option<f64>,
    },
    /// Measure the constants on the calibration seeds and write them out.
    Calibrate {
        #[arg(long, default_value = byzsim_cli::CALIBRATION_FILE)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, set, out } => byzsim_cli::cmd_run(&config, &set, &out),
        Command::Sweep {
            config,
            axis,
            values,
            jobs,
            set,
            out,
        } => byzsim_cli::cmd_sweep(&config, &axis, &values, jobs, &set, &out),
        Command::Verify {
            suite,
            calibration,
            rage_score_multiplier,
        } => byzsim_cli::cmd_verify(&suite, calibration.as_deref(), rage_score_multiplier),
        Command::Calibrate { out } => byzsim_cli::cmd_calibrate(&out),
    };
    ExitCode::from(code as u8)
}
