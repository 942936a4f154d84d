use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bsv-modes"));
    c.env("BSV_MODES_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn bsv-modes")
}

fn status_json(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().last().unwrap_or_else(|| panic!("no stdout; stderr: {}", stderr(out)));
    serde_json::from_str(line).expect("status line is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn acceptance_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance.json")
}

/// Small, fast configuration: coarse grid, short gap range.
const SMALL: &str = r#"{
  "schema_version": 1,
  "grid": { "theta_max": 0.02, "n_points": 121 },
  "gain": { "G": 4.0 },
  "sweep": { "L": 0.02, "L_start": 0.01, "L_stop": 0.04, "L_step": 0.002 }
}"#;

#[test]
fn negative_gap_exits_1_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"schema_version": 1, "sweep": {"L": -0.01}}"#);
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "kernel"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sweep.L"), "{}", stderr(&out));
    let status = status_json(&out);
    assert_eq!(status["status"], "error");
    assert_eq!(status["exit_code"], 1);
}

#[test]
fn unknown_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"schema_version": 1, "gain": {"G": 2, "gian": 1}}"#);
    let out = run(&["--config", cfg.to_str().unwrap(), "--dry-run", "sweep"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("gian"), "{}", stderr(&out));
}

#[test]
fn missing_config_file_exits_3() {
    let out = run(&["--config", "/nonexistent/bsv.json", "kernel"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        blocker.join("sub").to_str().unwrap(),
        "schmidt",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn underresolved_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"schema_version": 1, "grid": {"theta_max": 0.03, "n_points": 21}, "sweep": {"L": 0.17}}"#,
    );
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "kernel"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("grid too coarse"));
}

#[test]
fn zero_jobs_is_rejected() {
    let out = run(&["--jobs", "0", "--dry-run", "sweep"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out");
    for cmd in ["kernel", "schmidt", "sweep", "profile"] {
        let out = run(&["--out", target.to_str().unwrap(), "--dry-run", cmd]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", stderr(&out));
        let status = status_json(&out);
        assert_eq!(status["dry_run"], true);
        assert_eq!(status["config"]["schema_version"], 1);
    }
    assert!(!target.exists());
}

#[test]
fn kernel_and_schmidt_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let args = ["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
    let k = run(&[&args[..], &["kernel"]].concat());
    assert_eq!(k.status.code(), Some(0), "{}", stderr(&k));
    let s = run(&[&args[..], &["schmidt"]].concat());
    assert_eq!(s.status.code(), Some(0), "{}", stderr(&s));
    for f in ["kernel.csv", "kernel.json", "spectrum.csv", "modes.csv", "schmidt.json"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let spectrum = std::fs::read_to_string(out_dir.join("spectrum.csv")).unwrap();
    assert!(spectrum.starts_with("n,lambda,cumulative\n"));
    let k_num = status_json(&s)["schmidt_number"].as_f64().unwrap();
    assert!(k_num > 1.0);
}

#[test]
fn small_sweep_is_byte_identical_across_runs_and_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut csvs = Vec::new();
    for (i, jobs) in ["1", "3"].iter().enumerate() {
        let out_dir = dir.path().join(format!("run{i}"));
        let out = run(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--jobs", jobs, "sweep"]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        csvs.push(std::fs::read(out_dir.join("sweep.csv")).unwrap());
        let summary: Value =
            serde_json::from_slice(&std::fs::read(out_dir.join("sweep_summary.json")).unwrap()).unwrap();
        assert_eq!(summary["n_points"], 16);
        assert!(out_dir.join("g2_vs_L.svg").is_file());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    assert!(text.starts_with("L_m,total_photons,g2,k_eff_spatial,fwhm_theta_rad,central_dip\n"));
}

#[test]
fn cache_dir_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let body = SMALL.replace(
        r#""L_step": 0.002 }"#,
        &format!(r#""L_step": 0.002, "cache_dir": {:?} }}"#, cache.to_str().unwrap()),
    );
    let cfg = write_config(dir.path(), &body);
    let a = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().join("a").to_str().unwrap(), "sweep"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let entries = std::fs::read_dir(&cache).unwrap().count();
    assert_eq!(entries, 16);
    let b = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().join("b").to_str().unwrap(), "sweep"]);
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir.path().join("a/sweep.csv")).unwrap(),
        std::fs::read(dir.path().join("b/sweep.csv")).unwrap()
    );
}

#[test]
fn profile_reports_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "profile"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join("profile.json")).unwrap()).unwrap();
    assert!(meta["fwhm_theta"].as_f64().unwrap() > 0.0);
    assert!(meta["total_photons"].as_f64().unwrap() > 0.0);
    let first = std::fs::read(dir.path().join("profile.csv")).unwrap();
    let again = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "profile"]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(first, std::fs::read(dir.path().join("profile.csv")).unwrap());
}

#[test]
fn validate_passes_with_default_tolerances() {
    let out = run(&["validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let status = status_json(&out);
    assert_eq!(status["passed"], true);
    assert_eq!(status["n_cases"], 40);
}

#[test]
fn validate_with_impossible_tolerance_exits_2_and_reports_worst_case() {
    let out = run(&["validate", "--g2-tol", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let status = status_json(&out);
    assert_eq!(status["passed"], false);
    assert!(status["worst_case"]["seed"].is_u64());
    assert!(stderr(&out).contains("worst case"));
}

#[test]
fn acceptance_config_sweep_recovers_the_period() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--config",
        acceptance_config().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "sweep",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("sweep_summary.json")).unwrap()).unwrap();
    let period = summary["period_estimate_m"].as_f64().unwrap();
    assert!((0.033..=0.037).contains(&period), "period {period}");
    assert_eq!(summary["n_points"], 164);
    assert!(dir.path().join("intensity_vs_L.svg").is_file());
}
