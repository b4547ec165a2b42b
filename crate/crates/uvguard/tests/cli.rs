use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use uvguard::config::RunFile;
use uvguard::csv_out::{
    BENCH_HEADER, BREAKDOWN_HEADER, GOVERNOR_LOG_HEADER, POWER_CURVE_HEADER, SWEEP_HEADER, VERDICTS_HEADER,
};

fn uvguard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uvguard"))
        .args(args)
        .output()
        .expect("run uvguard")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

/// Parses a CSV file into its header and rows of raw fields.
fn read_csv(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

/// Value of a `label   value unit` line in a command summary.
fn summary_value(text: &str, label: &str) -> String {
    let line = text.lines().find(|l| l.starts_with(label)).unwrap_or_else(|| panic!("no {label} in {text}"));
    line[label.len()..].split_whitespace().next().unwrap().to_string()
}

#[test]
fn help_documents_every_csv_schema() {
    for args in [&["--help"][..], &["sweep", "--help"], &["govern", "--help"]] {
        let o = uvguard(args);
        assert!(o.status.success());
        let text = stdout(&o);
        for h in [
            SWEEP_HEADER,
            BREAKDOWN_HEADER,
            POWER_CURVE_HEADER,
            GOVERNOR_LOG_HEADER,
            VERDICTS_HEADER,
            BENCH_HEADER,
        ] {
            assert!(text.contains(h), "{args:?} help lacks {h}");
        }
    }
}

#[test]
fn dump_default_config_round_trips() {
    let flag = uvguard(&["--dump-default-config"]);
    let sub = uvguard(&["dump-default-config"]);
    assert!(flag.status.success() && sub.status.success());
    assert_eq!(flag.stdout, sub.stdout);
    let parsed: RunFile = serde_json::from_slice(&flag.stdout).unwrap();
    assert_eq!(parsed, RunFile::default());
}

#[test]
fn missing_calibration_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = uvguard(&["sweep", "--freq", "1500", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("1500"), "{}", stderr(&o));
    assert!(!dir.path().join("sweep.csv").exists());
}

#[test]
fn unreadable_calibration_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let calib = dir.path().join("calib.json");
    fs::write(&calib, "{ not json").unwrap();
    let o = uvguard(&["govern", "--calib", calib.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_passes_and_flags_a_tolerance_below_the_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let ok = uvguard(&["verify", "--quick", "--out", &out]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    let (header, rows) = read_csv(&dir.path().join("verdicts.csv"));
    assert_eq!(header, VERDICTS_HEADER);
    assert!(rows.iter().all(|r| r[2] == "true"));

    let tight = uvguard(&["verify", "--quick", "--tau", "1e-16", "--out", &out]);
    assert_eq!(tight.status.code(), Some(1));
    let soundness = stdout(&tight).lines().find(|l| l.starts_with("soundness")).unwrap().to_string();
    assert!(soundness.contains("FAIL"), "{soundness}");
}

#[test]
fn forced_faults_are_caught_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let o = uvguard(&["verify", "--quick", "--force-faults", "--out", &out_arg(dir.path())]);
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("end-to-end")).unwrap();
    assert!(line.contains("PASS"), "{line}");
    // the forced flip shows up in the per-layer verdicts
    let (_, rows) = read_csv(&dir.path().join("verdicts.csv"));
    assert!(rows.iter().any(|r| r[2] == "false"));
}

#[test]
fn sweep_writes_consistent_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let o = uvguard(&["sweep", "--out", &out_arg(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));

    let (header, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(header, SWEEP_HEADER);
    assert_eq!(rows[0][0], "960");
    let p960: f64 = rows[0][1].parse().unwrap();
    assert!((p960 - 142.0).abs() < 1e-9);
    for r in &rows {
        let v: u32 = r[0].parse().unwrap();
        let (detected, actual): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        if v > 835 {
            assert_eq!(detected, 0.0, "{v} mV");
        }
        assert!(detected >= actual, "{v} mV");
    }
    let poff: u32 = summary_value(&stdout(&o), "PoFF").parse().unwrap();
    assert!(poff.abs_diff(835) <= 5);

    let (header, breakdown) = read_csv(&dir.path().join("sweep_breakdown.csv"));
    assert_eq!(header, BREAKDOWN_HEADER);
    assert_eq!(breakdown.len(), rows.len());
    let (header, curve) = read_csv(&dir.path().join("power_curve.csv"));
    assert_eq!(header, POWER_CURVE_HEADER);
    for r in &curve {
        let (off, on): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        assert!(on > off);
    }
}

#[test]
fn govern_defaults_settle_in_the_band() {
    let dir = tempfile::tempdir().unwrap();
    let o = uvguard(&["govern", "--out", &out_arg(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let settled: u32 = summary_value(&text, "settled voltage").parse().unwrap();
    assert!((835..=845).contains(&settled), "{text}");
    let savings: f64 = summary_value(&text, "savings").trim_end_matches('%').parse().unwrap();
    assert!((15.0..=25.0).contains(&savings), "{text}");
    assert_eq!(summary_value(&text, "unsafe accepted"), "0");

    let (header, rows) = read_csv(&dir.path().join("governor_log.csv"));
    assert_eq!(header, GOVERNOR_LOG_HEADER);
    assert_eq!(rows.len(), 200);
}

#[test]
fn one_input_at_nominal_needs_no_retries() {
    let dir = tempfile::tempdir().unwrap();
    let o = uvguard(&["govern", "--inputs", "1", "--out", &out_arg(dir.path())]);
    assert!(o.status.success());
    let (_, rows) = read_csv(&dir.path().join("governor_log.csv"));
    assert_eq!(rows, vec![vec!["0", "960", "true", "0", "25.753120000000003"]]);
}

#[test]
fn faults_disabled_settles_at_the_configured_floor() {
    let dir = tempfile::tempdir().unwrap();
    let mut rf = RunFile::default();
    for f in &mut rf.calibration.faults.frequencies {
        f.p_max = 0.0;
    }
    rf.governor.floor_voltage_mv = 850;
    let calib = dir.path().join("calib.json");
    fs::write(&calib, rf.to_json()).unwrap();

    let o = uvguard(&[
        "govern",
        "--inputs",
        "60",
        "--calib",
        calib.to_str().unwrap(),
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_csv(&dir.path().join("governor_log.csv"));
    let volts: Vec<u32> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(volts.windows(2).all(|w| w[1] <= w[0]), "never retracts");
    assert!(rows.iter().all(|r| r[2] == "true" && r[3] == "0"));
    assert_eq!(*volts.last().unwrap(), 850);
    assert_eq!(summary_value(&stdout(&o), "final voltage"), "850");
}

#[test]
fn exported_model_runs_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = uvguard(&["export", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let model_json = stdout(&o).trim().to_string();
    assert!(Path::new(&model_json).is_file());

    let a = dir.path().join("builtin");
    let b = dir.path().join("file");
    for (model, d) in [("lenet", &a), (model_json.as_str(), &b)] {
        let o = uvguard(&["govern", "--model", model, "--inputs", "30", "--out", &out_arg(d)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(a.join("governor_log.csv")).unwrap(),
        fs::read(b.join("governor_log.csv")).unwrap()
    );
}

#[test]
fn single_precision_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = uvguard(&["govern", "--precision", "f32", "--inputs", "40", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = uvguard(&["bench", "--precision", "f32", "--inputs", "2", "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&dir.path().join("bench.csv"));
    assert_eq!(header, BENCH_HEADER);
    assert_eq!(rows.len(), 2);
}

#[test]
fn unknown_model_path_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = uvguard(&["bench", "--model", missing.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}
