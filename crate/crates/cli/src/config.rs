//! INI experiment configs: parsing, `--set` overrides and the resolved
//! manifest written next to every run.

use std::collections::BTreeMap;
use std::path::Path;

use byzsim_core::attacks::AttackKind;
use byzsim_core::fedsim::{Aggregator, ExperimentConfig, SamplingPolicy, StepSize};
use byzsim_core::objectives::ObjectiveKind;
use byzsim_core::rage::SaddleSolver;
use ini::Ini;

use crate::CliError;

/// Every accepted key, as `section.key` (`seed` lives outside any section).
pub const KEYS: [&str; 26] = [
    "seed",
    "run.R",
    "run.K",
    "run.H",
    "run.T",
    "run.b",
    "run.eta",
    "run.eps",
    "run.eps_prime",
    "run.full_batch",
    "run.sampling",
    "run.x0",
    "attack.kind",
    "attack.magnitude",
    "objective.kind",
    "objective.dim",
    "objective.points_per_client",
    "objective.heterogeneity",
    "objective.spread",
    "objective.mu",
    "objective.L",
    "objective.center",
    "objective.beta",
    "rage.aggregator",
    "rage.solver",
    "rage.score_multiplier",
];

/// Section holding run metadata; ignored when a manifest is read back.
const MANIFEST_SECTION: &str = "manifest";

fn known(key: &str) -> bool {
    KEYS.contains(&key)
}

/// Flat `section.key → value` view of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (section, props) in ini.iter() {
            if section == Some(MANIFEST_SECTION) {
                continue;
            }
            for (k, v) in props {
                let key = match section {
                    Some(s) => format!("{s}.{k}"),
                    None => k.to_string(),
                };
                if !known(&key) {
                    return Err(CliError::Config(format!("unknown key `{key}`")));
                }
                entries.insert(key, v.trim().to_string());
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies one `key=value` override. A key without a section is
    /// accepted when exactly one section defines it.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let full = if known(key) {
            key.to_string()
        } else {
            let matches: Vec<&str> = KEYS
                .iter()
                .copied()
                .filter(|k| k.rsplit('.').next() == Some(key))
                .collect();
            match matches.as_slice() {
                [one] => one.to_string(),
                [] => return Err(CliError::Config(format!("unknown key `{key}`"))),
                _ => return Err(CliError::Config(format!("ambiguous key `{key}`: {}", matches.join(", ")))),
            }
        };
        self.entries.insert(full, value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn into_config(self) -> Result<ExperimentConfig, CliError> {
        to_config(&self)
    }
}

fn bad(key: &str, value: &str, what: &str) -> CliError {
    CliError::Config(format!("`{key} = {value}`: expected {what}"))
}

fn num<T: std::str::FromStr>(raw: &RawConfig, key: &str, default: T, what: &str) -> Result<T, CliError> {
    match raw.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| bad(key, v, what)),
    }
}

fn to_config(raw: &RawConfig) -> Result<ExperimentConfig, CliError> {
    let d = ExperimentConfig::default();
    let count = "a non-negative integer";
    let real = "a number";
    let r = num(raw, "run.R", d.r, count)?;
    let eta = match raw.get("run.eta") {
        None | Some("auto") => StepSize::Auto,
        Some(v) => StepSize::Fixed(v.parse().map_err(|_| bad("run.eta", v, "`auto` or a number"))?),
    };
    let full_batch = match raw.get("run.full_batch") {
        None => d.full_batch,
        Some("true" | "1" | "yes") => true,
        Some("false" | "0" | "no") => false,
        Some(v) => return Err(bad("run.full_batch", v, "true or false")),
    };
    let sampling = match raw.get("run.sampling") {
        None => d.sampling,
        Some(v) => SamplingPolicy::parse(v)
            .ok_or_else(|| bad("run.sampling", v, "uniform_random, round_robin or all"))?,
    };
    let x0 = match raw.get("run.x0") {
        None => d.x0.clone(),
        Some(v) => v
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("run.x0", v, "a comma-separated list of numbers"))?,
    };
    let magnitude = num(raw, "attack.magnitude", d.attack.magnitude(), real)?;
    let attack = match raw.get("attack.kind") {
        None => d.attack,
        Some(v) => AttackKind::from_name(v, magnitude)
            .map_err(|_| bad("attack.kind", v, &format!("one of {}", AttackKind::NAMES.join(", "))))?,
    };
    let mut objective = d.objective.clone();
    if let Some(v) = raw.get("objective.kind") {
        objective.kind = ObjectiveKind::parse(v)
            .ok_or_else(|| bad("objective.kind", v, "quadratic, logistic or nonconvex"))?;
    }
    objective.clients = r;
    objective.dim = num(raw, "objective.dim", objective.dim, count)?;
    objective.points_per_client =
        num(raw, "objective.points_per_client", objective.points_per_client, count)?;
    objective.heterogeneity = num(raw, "objective.heterogeneity", objective.heterogeneity, real)?;
    objective.spread = num(raw, "objective.spread", objective.spread, real)?;
    objective.mu = num(raw, "objective.mu", objective.mu, real)?;
    objective.smoothness = num(raw, "objective.L", objective.smoothness, real)?;
    objective.center = num(raw, "objective.center", objective.center, real)?;
    objective.beta = num(raw, "objective.beta", objective.beta, real)?;
    let aggregator = match raw.get("rage.aggregator") {
        None => d.aggregator,
        Some(v) => Aggregator::parse(v).ok_or_else(|| bad("rage.aggregator", v, "rage or mean"))?,
    };
    let rage_solver = match raw.get("rage.solver") {
        None => d.rage_solver,
        Some(v) => SaddleSolver::parse(v)
            .ok_or_else(|| bad("rage.solver", v, "alternating or uniform_w"))?,
    };
    let cfg = ExperimentConfig {
        r,
        k: num(raw, "run.K", d.k, count)?,
        h: num(raw, "run.H", d.h, count)?,
        t: num(raw, "run.T", d.t, count)?,
        b: num(raw, "run.b", d.b, count)?,
        eta,
        eps: num(raw, "run.eps", d.eps, real)?,
        eps_prime: num(raw, "run.eps_prime", d.eps_prime, real)?,
        attack,
        objective,
        full_batch,
        seed: num(raw, "seed", d.seed, count)?,
        sampling,
        x0,
        aggregator,
        rage_solver,
        score_multiplier: num(raw, "rage.score_multiplier", d.score_multiplier, real)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file, then applies `BYZSIM_SEED` (when given) and the
/// `--set` overrides, in that order.
pub fn load_config(
    path: &Path,
    env_seed: Option<&str>,
    overrides: &[String],
) -> Result<ExperimentConfig, CliError> {
    let mut raw = RawConfig::load(path)?;
    if let Some(seed) = env_seed {
        raw.set(&format!("seed={seed}"))?;
    }
    for o in overrides {
        raw.set(o)?;
    }
    raw.into_config()
}

/// Reproducibility metadata stored in the manifest's own section.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestInfo {
    pub code_version: String,
    pub started_at: u64,
    pub csv_path: String,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// The config as INI text; floats use the shortest round-trip form so the
/// text parses back to the same values.
pub fn to_ini(cfg: &ExperimentConfig, info: Option<&ManifestInfo>) -> String {
    let mut ini = Ini::new();
    ini.with_general_section().set("seed", cfg.seed.to_string());
    let eta = match cfg.eta {
        StepSize::Auto => "auto".to_string(),
        StepSize::Fixed(e) => e.to_string(),
    };
    ini.with_section(Some("run"))
        .set("R", cfg.r.to_string())
        .set("K", cfg.k.to_string())
        .set("H", cfg.h.to_string())
        .set("T", cfg.t.to_string())
        .set("b", cfg.b.to_string())
        .set("eta", eta)
        .set("eps", cfg.eps.to_string())
        .set("eps_prime", cfg.eps_prime.to_string())
        .set("full_batch", cfg.full_batch.to_string())
        .set("sampling", cfg.sampling.name())
        .set("x0", join(&cfg.x0));
    ini.with_section(Some("attack"))
        .set("kind", cfg.attack.name())
        .set("magnitude", cfg.attack.magnitude().to_string());
    let o = &cfg.objective;
    ini.with_section(Some("objective"))
        .set("kind", o.kind.name())
        .set("dim", o.dim.to_string())
        .set("points_per_client", o.points_per_client.to_string())
        .set("heterogeneity", o.heterogeneity.to_string())
        .set("spread", o.spread.to_string())
        .set("mu", o.mu.to_string())
        .set("L", o.smoothness.to_string())
        .set("center", o.center.to_string())
        .set("beta", o.beta.to_string());
    ini.with_section(Some("rage"))
        .set("aggregator", cfg.aggregator.name())
        .set("solver", cfg.rage_solver.name())
        .set("score_multiplier", cfg.score_multiplier.to_string());
    if let Some(m) = info {
        ini.with_section(Some(MANIFEST_SECTION))
            .set("code_version", m.code_version.clone())
            .set("started_at", m.started_at.to_string())
            .set("csv_path", m.csv_path.clone());
    }
    let mut buf = Vec::new();
    ini.write_to(&mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ini output is utf-8")
}
