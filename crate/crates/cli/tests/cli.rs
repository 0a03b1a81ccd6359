use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mee"))
        .args(args)
        .env_remove("MEE_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["synth", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    stdout(&mee(&args));
    path
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn analyze_default_mee2_has_four_columns_and_one_row_per_beat() {
    let dir = TempDir::new().unwrap();
    let rec = synth(dir.path(), "ten.csv", &["--duration", "9", "--seed", "3"]);
    let rows = csv_rows(&stdout(&mee(&["analyze", rec.to_str().unwrap()])));
    assert_eq!(rows[0], ["beat_index", "r_index", "label", "mee2"]);
    assert_eq!(rows.len() - 1, 10);
    assert!(rows[1..].iter().all(|r| r.len() == 4 && r[3].parse::<f64>().is_ok()));
}

#[test]
fn analyze_all_metrics_gives_thirteen_columns() {
    let dir = TempDir::new().unwrap();
    let rec = synth(dir.path(), "r.csv", &["--duration", "9"]);
    let metrics = "pe,ae,se,fe,bwe,wse1,wse2,mee1,mee2,mee3";
    let rows = csv_rows(&stdout(&mee(&["analyze", rec.to_str().unwrap(), "--metrics", metrics])));
    assert!(rows.iter().all(|r| r.len() == 13));
}

#[test]
fn unknown_metric_is_rejected_with_valid_names() {
    let dir = TempDir::new().unwrap();
    let rec = synth(dir.path(), "r.csv", &["--duration", "9"]);
    let o = mee(&["analyze", rec.to_str().unwrap(), "--metrics", "mee2,xyz"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("xyz") && err.contains("mee2"), "{err}");
}

#[test]
fn bench_needs_at_least_100_repetitions() {
    let o = mee(&["bench", "--repetitions", "50"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("100"));
}

#[test]
fn bench_reports_each_requested_metric() {
    let out = stdout(&mee(&["bench", "--metrics", "bwe,wse2,fusion", "--beat-length", "128"]));
    let names: Vec<String> = csv_rows(&out)[1..].iter().map(|r| r[0].clone()).collect();
    assert_eq!(names, ["bwe", "wse2", "fusion", "bwe+wse2+fusion"]);
}

#[test]
fn robustness_zero_noise_has_zero_drift() {
    let dir = TempDir::new().unwrap();
    let rec = synth(dir.path(), "r.csv", &["--duration", "12"]);
    let out = stdout(&mee(&["robustness", rec.to_str().unwrap(), "--std", "0", "--metrics", "pe,fe,mee2"]));
    let rows = csv_rows(&out);
    assert_eq!(rows[0], ["sigma", "drift_pe", "drift_fe", "drift_mee2"]);
    assert!(rows[1][1..].iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
}

#[test]
fn robustness_default_noise_levels() {
    let dir = TempDir::new().unwrap();
    let rec = synth(dir.path(), "r.csv", &["--duration", "12"]);
    let out = stdout(&mee(&["robustness", rec.to_str().unwrap(), "--metrics", "bwe"]));
    let sigmas: Vec<f64> = csv_rows(&out)[1..].iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(sigmas, [0.01, 0.02, 0.03]);
}

#[test]
fn screen_at_max_alpha_on_normal_record_finds_nothing() {
    let dir = TempDir::new().unwrap();
    let rec = synth(dir.path(), "n.csv", &["--duration", "20"]);
    let rows = csv_rows(&stdout(&mee(&["screen", rec.to_str().unwrap(), "--alpha", "5"])));
    let h = &rows[0];
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let r = &rows[1];
    assert_eq!(r[col("flagged")], "0");
    assert_eq!(r[col("tp")], "0");
    assert_eq!(r[col("sen")].parse::<f64>().unwrap(), 0.0);
    assert_eq!(r[col("spe")].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn screen_grid_finds_inverted_beats() {
    let dir = TempDir::new().unwrap();
    let rec = synth(dir.path(), "v.csv", &["--duration", "30", "--inverted", "4,12,25"]);
    let curve = dir.path().join("curve.csv");
    let out = stdout(&mee(&[
        "screen",
        rec.to_str().unwrap(),
        "--grid",
        "--curve-out",
        curve.to_str().unwrap(),
        "--format",
        "json",
    ]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["records"][0]["scores"]["f1"].as_f64(), Some(1.0));
    assert!(v["pooled"].is_null(), "pooled row only for several records");
    assert_eq!(std::fs::read_to_string(curve).unwrap().lines().count(), 502);
}

#[test]
fn prune_writes_a_partitioning_manifest() {
    let dir = TempDir::new().unwrap();
    let group = dir.path().join("group");
    std::fs::create_dir(&group).unwrap();
    for k in 0..6 {
        let seed = k.to_string();
        let mut extra = vec!["--duration", "10", "--seed", &seed, "--label", "Normal"];
        if k >= 4 {
            extra.extend(["--inverted", "1,2,3,4,5,6,7,8,9,10"]);
        }
        synth(&group, &format!("r{k}.csv"), &extra);
    }
    let manifest = dir.path().join("m.json");
    stdout(&mee(&[
        "prune",
        group.to_str().unwrap(),
        "--manifest-out",
        manifest.to_str().unwrap(),
        "--format",
        "json",
    ]));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    let kept = m["kept"].as_array().unwrap().len();
    let dropped = m["dropped"].as_array().unwrap().len();
    assert_eq!(kept + dropped, 6);
    assert!(kept >= 2, "both modes represented");
}

#[test]
fn prune_refuses_mixed_labels_without_selection() {
    let dir = TempDir::new().unwrap();
    let a = synth(dir.path(), "a.csv", &["--duration", "10", "--label", "Normal"]);
    let b = synth(dir.path(), "b.csv", &["--duration", "10", "--label", "AF"]);
    let o = mee(&["prune", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let ok = mee(&["prune", a.to_str().unwrap(), b.to_str().unwrap(), "--label", "AF"]);
    assert_eq!(csv_rows(&stdout(&ok)).len(), 2);
}

#[test]
fn quality_csv_flags_inverted_beats_only() {
    let dir = TempDir::new().unwrap();
    let rec = synth(dir.path(), "q.csv", &["--duration", "30", "--inverted", "7"]);
    let rows = csv_rows(&stdout(&mee(&["quality", rec.to_str().unwrap()])));
    let h = &rows[0];
    let noisy = h.iter().position(|c| c == "noisy").unwrap();
    let flagged: Vec<&Vec<String>> = rows[1..].iter().filter(|r| r[noisy] == "1").collect();
    assert_eq!(flagged.len(), 1);
}

#[test]
fn thread_count_from_environment_gives_identical_output() {
    let dir = TempDir::new().unwrap();
    let rec = synth(dir.path(), "r.csv", &["--duration", "12"]);
    let single = Command::new(env!("CARGO_BIN_EXE_mee"))
        .args(["analyze", rec.to_str().unwrap()])
        .env("MEE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(stdout(&single), stdout(&mee(&["analyze", rec.to_str().unwrap()])));
}

#[test]
fn missing_record_is_an_error() {
    let o = mee(&["analyze", "/nonexistent/record.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn seeded_commands_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = synth(dir.path(), "a.csv", &["--duration", "12", "--seed", "5"]);
    let b = synth(dir.path(), "b.csv", &["--duration", "12", "--seed", "6"]);
    let c = synth(dir.path(), "c.csv", &["--duration", "12", "--seed", "7"]);
    let (a, b, c) = (a.to_str().unwrap(), b.to_str().unwrap(), c.to_str().unwrap());
    let runs: [&[&str]; 3] = [
        &["robustness", a, "--seed", "3", "--metrics", "pe,mee2"],
        &["prune", a, b, c, "--random-target", "2", "--seed", "9"],
        &["screen", a, b, "--grid", "0:1:0.05"],
    ];
    for args in runs {
        assert_eq!(stdout(&mee(args)), stdout(&mee(args)), "{args:?}");
    }
    assert_eq!(std::fs::read(a).unwrap(), {
        let again = synth(dir.path(), "a2.csv", &["--duration", "12", "--seed", "5"]);
        std::fs::read(again).unwrap()
    });
}
