//! End-to-end checks of the `catsim` binary: argument handling, collected
//! config validation, exit codes, and the file contracts of each experiment.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_catsim");
const TWO_OVER_PI: f64 = 0.636_619_772_367_581_4;

/// Writes a config file into `dir` and returns its path.
fn config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).expect("config written");
    path
}

/// Runs the binary with the given arguments.
fn catsim(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: PathBuf) -> String {
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&read(path)).expect("valid JSON")
}

/// Data rows of a CSV body: comment and header lines stripped, cells split.
fn csv_rows(body: &str) -> Vec<Vec<String>> {
    body.lines()
        .filter(|line| !line.starts_with('#') && !line.is_empty())
        .skip(1)
        .map(|line| line.split(',').map(str::to_string).collect())
        .collect()
}

/// Looks up one value in a two-column `quantity,value` summary.
fn summary_value(body: &str, key: &str) -> f64 {
    csv_rows(body)
        .iter()
        .find(|row| row[0] == key)
        .unwrap_or_else(|| panic!("summary row `{key}` present"))[1]
        .parse()
        .expect("numeric summary value")
}

#[test]
fn mbqc_enumerates_every_branch() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "experiment = \"mbqc\"\nalpha = 2.0\n\n[angles]\ntheta1 = 0.7\ntheta2 = 1.3\n",
    );
    let prefix = format!("{}/run_", dir.path().display());
    let out = catsim(&["mbqc", "--config", cfg.to_str().unwrap(), "--out", &prefix]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_text(&out));

    let rows = csv_rows(&read(dir.path().join("run_protocol.csv")));
    assert_eq!(rows.len(), 16, "one row per branch");
    let total: f64 = rows.iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() <= 1e-8, "branch probabilities sum to 1");
    for row in &rows {
        let overlap: f64 = row[4].parse().unwrap();
        assert!(overlap >= 0.995, "branch overlap {overlap} too low: {row:?}");
        assert!(!row[5].is_empty(), "expected gate labeled");
    }

    let summary = read(dir.path().join("run_summary.csv"));
    assert!((summary_value(&summary, "total_probability") - 1.0).abs() <= 1e-8);
    assert!(summary_value(&summary, "min_overlap") >= 0.995);

    let meta = read_json(dir.path().join("run_metadata.json"));
    assert_eq!(meta["experiment"], "mbqc");
    let outputs: Vec<String> = meta["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(outputs.iter().any(|p| p.ends_with("protocol.csv")));
    assert!(outputs.iter().any(|p| p.ends_with("summary.csv")));
}

#[test]
fn ideal2_fills_defaults_and_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "experiment = \"ideal2\"\nalpha = 2.0\n");
    let prefix = format!("{}/run_", dir.path().display());
    let out = catsim(&["ideal2", "--config", cfg.to_str().unwrap(), "--out", &prefix]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_text(&out));

    let meta = read_json(dir.path().join("run_metadata.json"));
    assert_eq!(meta["resolved"]["dim"], 24, "truncation defaulted from alpha");
    assert_eq!(meta["resolved"]["d"], 4, "qudit dimension defaulted");

    let summary = read(dir.path().join("run_summary.csv"));
    assert!(summary_value(&summary, "overlap_with_closed_form") >= 1.0 - 1e-9);
}

#[test]
fn reruns_write_identical_bytes() {
    let body = "experiment = \"ideal2\"\nalpha = 1.5\nd = 2\n";
    let mut summaries = Vec::new();
    for _ in 0..2 {
        let dir = TempDir::new().unwrap();
        let cfg = config(dir.path(), body);
        let prefix = format!("{}/run_", dir.path().display());
        let out = catsim(&["ideal2", "--config", cfg.to_str().unwrap(), "--out", &prefix]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_text(&out));
        summaries.push(read(dir.path().join("run_summary.csv")));
    }
    assert_eq!(summaries[0], summaries[1], "CSV bodies are byte-stable");
}

#[test]
fn validation_reports_every_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "experiment = \"mbqc\"\nalpha = -2.0\nd = 3\n");
    let out = catsim(&["mbqc", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_text(&out);
    let lines: Vec<&str> = err
        .lines()
        .filter(|l| l.starts_with("config error:"))
        .collect();
    assert_eq!(lines.len(), 3, "all errors collected, none duplicated: {err}");
    assert!(err.contains("alpha: must be positive and finite"));
    assert!(err.contains("d: only used by the ideal2 experiment"));
    assert!(err.contains("angles: required"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "experiment = \"ideal2\"\nalpha = 2.0\nbanana = 1\n");
    let out = catsim(&["ideal2", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_text(&out).contains("banana"), "offending key named");
}

#[test]
fn experiment_mismatch_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "experiment = \"ideal2\"\nalpha = 2.0\n");
    let out = catsim(&["mbqc", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_text(&out);
    assert!(err.contains("config names `ideal2`"), "stderr: {err}");
}

#[test]
fn truncation_failure_exits_three_without_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "experiment = \"ideal2\"\nalpha = 2.0\ndim = 10\n");
    let prefix = format!("{}/t_", dir.path().display());
    let out = catsim(&["ideal2", "--config", cfg.to_str().unwrap(), "--out", &prefix]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_text(&out));
    assert!(stderr_text(&out).contains("truncation"), "cause named");
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|name| name.starts_with("t_"))
        .collect();
    assert!(leftovers.is_empty(), "no partial outputs: {leftovers:?}");
}

#[test]
fn wigner_grid_has_documented_layout_and_scale() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "experiment = \"wigner\"\ndim = 8\n\n[wigner]\nstate = \"vacuum\"\n\n\
         [grid]\nhalf_width = 2.0\nresolution = 5\n",
    );
    let prefix = format!("{}/w_", dir.path().display());
    let out = catsim(&["wigner", "--config", cfg.to_str().unwrap(), "--out", &prefix]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_text(&out));

    let body = read(dir.path().join("w_wigner.csv"));
    let comments = body.lines().take_while(|l| l.starts_with("# ")).count();
    assert_eq!(comments, 2, "convention documented in the file");
    assert_eq!(
        body.lines().nth(2),
        Some("x,p,w"),
        "header follows the comments"
    );
    let rows = csv_rows(&body);
    assert_eq!(rows.len(), 25, "resolution^2 samples");
    let center = rows
        .iter()
        .find(|r| {
            r[0].parse::<f64>().unwrap().abs() < 1e-12
                && r[1].parse::<f64>().unwrap().abs() < 1e-12
        })
        .expect("odd resolution includes the origin");
    let w0: f64 = center[2].parse().unwrap();
    assert!((w0 - TWO_OVER_PI).abs() <= 1e-6, "vacuum W(0) = 2/pi, got {w0}");

    let summary = read(dir.path().join("w_summary.csv"));
    assert!(summary_value(&summary, "peak_x").abs() <= 1e-12);
    assert!(summary_value(&summary, "peak_p").abs() <= 1e-12);
    assert!((summary_value(&summary, "peak_w") - TWO_OVER_PI).abs() <= 1e-6);

    let meta = read_json(dir.path().join("w_metadata.json"));
    assert_eq!(meta["resolved"]["resolution"], 5);
    assert_eq!(meta["resolved"]["dim"], 8);
}

#[test]
fn jc_study_reports_revival_gate_and_conventions() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "experiment = \"jc\"\nalpha = 2.0\n\n[jc]\nomega_a = 5.5\nomega_b = 8.5\n\
         omega_m = 4.0\nlambda_am = 0.12\nlambda_bm = 0.15\nk_m = -0.6\n\
         dim_a = 21\ndim_b = 21\ncoarse_points = 192\ntrajectory_points = 81\n\
         snapshot_count = 7\n",
    );
    let prefix = format!("{}/jc_", dir.path().display());
    let out = catsim(&["jc", "--config", cfg.to_str().unwrap(), "--out", &prefix]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_text(&out));

    let trajectory = read(dir.path().join("jc_trajectory.csv"));
    assert_eq!(
        trajectory.lines().next(),
        Some("time,re_aA,im_aA,re_aB,im_aB,nM"),
        "trajectory column contract"
    );
    assert_eq!(csv_rows(&trajectory).len(), 81);

    let summary = read(dir.path().join("jc_summary.csv"));
    let revival = summary_value(&summary, "revival_time_us");
    assert!((120.0..=200.0).contains(&revival), "revival near 160 us, got {revival}");
    assert!(summary_value(&summary, "gate_fidelity") >= 0.95);
    let fraction = summary_value(&summary, "gate_time_fraction");
    assert!((0.2..=0.32).contains(&fraction), "gate fraction, got {fraction}");
    for k in 0..4 {
        assert!(summary_value(&summary, &format!("fock_{k}_fidelity")) >= 0.90);
    }

    let meta = read_json(dir.path().join("jc_metadata.json"));
    assert_eq!(meta["unit_convention"], "angular");
    assert_eq!(meta["rotation_sense"], "clockwise");
}

#[test]
fn seeded_sampling_is_reproducible_and_consistent() {
    let body = "experiment = \"mbqc\"\nalpha = 2.0\n\n[angles]\ntheta1 = 0.7\ntheta2 = 1.3\n";
    let mut samples = Vec::new();
    let mut protocols = Vec::new();
    for _ in 0..2 {
        let dir = TempDir::new().unwrap();
        let cfg = config(dir.path(), body);
        let prefix = format!("{}/s_", dir.path().display());
        let out = catsim(&[
            "mbqc",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            &prefix,
            "--seed",
            "11",
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_text(&out));
        samples.push(read(dir.path().join("s_sample.csv")));
        protocols.push(read(dir.path().join("s_protocol.csv")));
        let meta = read_json(dir.path().join("s_metadata.json"));
        assert_eq!(meta["seed"], 11, "seed echoed in metadata");
    }
    assert_eq!(samples[0], samples[1], "same seed, same sampled branch");

    let sampled = csv_rows(&samples[0]);
    assert_eq!(sampled.len(), 1, "one sampled trajectory");
    let enumerated = csv_rows(&protocols[0]);
    assert!(
        enumerated.contains(&sampled[0]),
        "sampled branch matches an enumerated one"
    );
}
