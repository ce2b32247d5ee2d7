use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use byzsim_cli::config;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_byzsim"));
    c.env_remove("BYZSIM_SEED");
    c
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = "seed = 5\n[run]\nR = 4\nK = 4\nH = 3\nT = 30\nb = 2\neps = 0.25\nsampling = all\nx0 = 2\n[objective]\ndim = 3\n";

#[test]
fn minimal_config_writes_eleven_rows() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["run", s(&example("minimal.ini")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,dist_sq,grad_norm_sq,loss,rage_removed,rage_rounds,sync_flag"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    for (t, row) in rows.iter().enumerate() {
        assert!(row.starts_with(&format!("{t},")));
    }
    assert!(out.join("manifest.ini").exists());
}

#[test]
fn reruns_and_manifest_reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let cfg = example("attacked.ini");
    assert_eq!(code(&run(&["run", s(&cfg), "--out", s(&a)])), 0);
    assert_eq!(code(&run(&["run", s(&cfg), "--out", s(&b)])), 0);
    let csv_a = std::fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("metrics.csv")).unwrap());

    let manifest = a.join("manifest.ini");
    assert_eq!(code(&run(&["run", s(&manifest), "--out", s(&c)])), 0);
    assert_eq!(csv_a, std::fs::read(c.join("metrics.csv")).unwrap());

    let original = config::load_config(&cfg, None, &[]).unwrap();
    let mut reread = config::load_config(&manifest, None, &[]).unwrap();
    assert_ne!(reread.eta, original.eta);
    reread.eta = original.eta;
    assert_eq!(reread, original);
}

#[test]
fn attack_changes_only_rows_from_first_sync() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "small.ini", SMALL);
    let (clean, attacked) = (tmp.path().join("clean"), tmp.path().join("attacked"));
    assert_eq!(code(&run(&["run", s(&cfg), "--out", s(&clean)])), 0);
    let o = run(&["run", s(&cfg), "--set", "attack.kind=sign_flip", "--set", "magnitude=50", "--out", s(&attacked)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = std::fs::read_to_string(clean.join("metrics.csv")).unwrap();
    let b = std::fs::read_to_string(attacked.join("metrics.csv")).unwrap();
    let (a, b): (Vec<&str>, Vec<&str>) = (a.lines().skip(1).collect(), b.lines().skip(1).collect());
    assert_eq!(a.len(), 31);
    assert_eq!(a[..3], b[..3]);
    assert_ne!(a[3], b[3]);
}

#[test]
fn bad_configs_exit_one() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let missing = tmp.path().join("missing.ini");
    assert_eq!(code(&run(&["run", s(&missing), "--out", s(&out)])), 1);
    let unknown = write_config(&tmp, "unknown.ini", "[run]\nbogus = 3\n");
    assert_eq!(code(&run(&["run", s(&unknown), "--out", s(&out)])), 1);
    let invalid = write_config(&tmp, "invalid.ini", "[run]\nR = 4\nK = 8\n");
    assert_eq!(code(&run(&["run", s(&invalid), "--out", s(&out)])), 1);
    let cfg = example("minimal.ini");
    assert_eq!(code(&run(&["run", s(&cfg), "--set", "run.H=zero", "--out", s(&out)])), 1);
}

#[test]
fn divergence_exits_two_and_keeps_partial_rows() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["run", s(&example("minimal.ini")), "--set", "eta=50", "--set", "T=2000", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stdout));
    let rows = std::fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count() - 1;
    assert!((1..2001).contains(&rows));
}

#[test]
fn seed_env_replaces_config_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "small.ini", SMALL);
    let dirs: Vec<PathBuf> = ["env5", "env6", "set6"].iter().map(|d| tmp.path().join(d)).collect();
    let mut c = bin();
    c.env("BYZSIM_SEED", "5").args(["run", s(&cfg), "--out", s(&dirs[0])]);
    assert!(c.output().unwrap().status.success());
    let mut c = bin();
    c.env("BYZSIM_SEED", "6").args(["run", s(&cfg), "--out", s(&dirs[1])]);
    assert!(c.output().unwrap().status.success());
    assert!(run(&["run", s(&cfg), "--set", "seed=6", "--out", s(&dirs[2])]).status.success());
    let read = |d: &PathBuf| std::fs::read(d.join("metrics.csv")).unwrap();
    let base = tmp.path().join("base");
    assert!(run(&["run", s(&cfg), "--out", s(&base)]).status.success());
    assert_eq!(read(&dirs[0]), read(&base));
    assert_ne!(read(&dirs[1]), read(&base));
    assert_eq!(read(&dirs[1]), read(&dirs[2]));
}

#[test]
fn sweep_writes_summary_independent_of_jobs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "gd.ini",
        "[run]\nR = 4\nK = 4\nH = 1\nT = 200\nfull_batch = true\nsampling = all\nx0 = 2\n[objective]\ndim = 3\nheterogeneity = 0.5\n",
    );
    let (one, four) = (tmp.path().join("j1"), tmp.path().join("j4"));
    for (dir, jobs) in [(&one, "1"), (&four, "4")] {
        let o = run(&["sweep", s(&cfg), "--axis", "H", "--values", "1,2", "--jobs", jobs, "--out", s(dir)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let summary = std::fs::read_to_string(one.join("sweep_summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let floor: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!(floor.is_finite());
    }
    assert_eq!(summary, std::fs::read_to_string(four.join("sweep_summary.csv")).unwrap());
    for v in ["H=1", "H=2"] {
        assert_eq!(
            std::fs::read(one.join(v).join("metrics.csv")).unwrap(),
            std::fs::read(four.join(v).join("metrics.csv")).unwrap()
        );
    }
}

#[test]
fn sweep_rejects_unknown_axis() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["sweep", s(&example("minimal.ini")), "--axis", "mu", "--values", "1", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn verify_fast_passes_and_detects_a_tampered_threshold() {
    let o = run(&["verify", "--suite", "fast"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);

    let o = run(&["verify", "--suite", "fast", "--rage-score-multiplier", "0.001"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_ne!(code(&o), 0);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL") && l.contains("rage_exactness")), "{stdout}");
}

#[test]
fn verify_full_without_calibration_exits_three() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["verify", "--suite", "full", "--calibration", s(&tmp.path().join("none.txt"))]);
    assert_eq!(code(&o), 3);
    let bad = write_config(&tmp, "bad.txt", "rage_c = nope\n");
    assert_eq!(code(&run(&["verify", "--suite", "full", "--calibration", s(&bad)])), 3);
}
