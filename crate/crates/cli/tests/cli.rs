use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ecshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecshare"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A generated dataset in a temp dir: `config.json` and `data.csv`.
fn dataset(extra: &[&str]) -> (TempDir, PathBuf, PathBuf) {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["generate", "--seed", "42", "--days", "2", "--out", path(dir.path())];
    args.extend_from_slice(extra);
    let out = ecshare(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = dir.path().join("config.json");
    let data = dir.path().join("data.csv");
    (dir, config, data)
}

fn simulate_all(config: &Path, data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate",
        "--config",
        path(config),
        "--data",
        path(data),
        "--strategy",
        "both",
        "--scheme",
        "all",
        "--method",
        "both",
        "--out",
        path(out),
    ];
    args.extend_from_slice(extra);
    ecshare(&args)
}

fn read_reports(dir: &Path) -> Vec<(String, String)> {
    ["community.csv", "feeders.csv", "participants.csv", "run.json"]
        .iter()
        .map(|f| (f.to_string(), fs::read_to_string(dir.join(f)).unwrap()))
        .collect()
}

fn community_rows(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("community.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn all_flags_give_twelve_rows_with_identical_maximal_energy() {
    let (dir, config, data) = dataset(&[]);
    let out = dir.path().join("out");
    let run = simulate_all(&config, &data, &out, &[]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let rows = community_rows(&out);
    assert_eq!(rows.len(), 12);
    let maximal: Vec<&[String]> = rows
        .iter()
        .filter(|r| {
            matches!(
                (r[1].as_str(), r[2].as_str()),
                ("proportional", "dynamic") | ("rank", _)
            )
        })
        .map(|r| &r[3..6])
        .collect();
    assert_eq!(maximal.len(), 6);
    assert!(maximal.windows(2).all(|w| w[0] == w[1]), "{maximal:?}");
}

#[test]
fn reruns_are_byte_identical() {
    let (dir, config, data) = dataset(&[]);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(simulate_all(&config, &data, &a, &["--omit-timings"]).status.success());
    assert!(simulate_all(&config, &data, &b, &["--omit-timings"]).status.success());
    assert!(simulate_all(&config, &data, &c, &["--omit-timings", "--sequential"])
        .status
        .success());
    assert_eq!(read_reports(&a), read_reports(&b));
    assert_eq!(read_reports(&a), read_reports(&c));
}

#[test]
fn defaults_come_from_the_config() {
    let (dir, config, data) = dataset(&[]);
    let out = dir.path().join("out");
    let run = ecshare(&[
        "simulate",
        "--config",
        path(&config),
        "--data",
        path(&data),
        "--out",
        path(&out),
    ]);
    assert!(run.status.success());
    let rows = community_rows(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][..3], ["feeder-aware", "proportional", "dynamic"]);

    let run_json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run_json["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(run_json["config"]["participants"].as_array().unwrap().len(), 15);
    assert_eq!(run_json["timings"].as_array().unwrap().len(), 1);
}

#[test]
fn resampling_coarsens_the_interval() {
    let (dir, config, data) = dataset(&[]);
    let (fine, coarse) = (dir.path().join("fine"), dir.path().join("coarse"));
    let base = [
        "simulate",
        "--config",
        path(&config),
        "--data",
        path(&data),
        "--scheme",
        "rank",
    ];
    assert!(ecshare(&[&base[..], &["--out", path(&fine)]].concat()).status.success());
    let out = ecshare(&[&base[..], &["--out", path(&coarse), "--resample", "15"]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let run_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(coarse.join("run.json")).unwrap()).unwrap();
    assert_eq!(run_json["data"]["step_minutes"], 15);
    assert_eq!(run_json["data"]["intervals"], 2 * 96);
    // Netting over 15 minutes can only reduce gross imports.
    let imported = |dir: &Path| community_rows(dir)[0][3].parse::<f64>().unwrap();
    assert!(imported(&coarse) <= imported(&fine));
}

#[test]
fn usage_errors_exit_2() {
    let (dir, config, data) = dataset(&[]);
    let out = dir.path().join("out");
    let bad_scheme = ecshare(&[
        "simulate",
        "--config",
        path(&config),
        "--data",
        path(&data),
        "--scheme",
        "fair",
        "--out",
        path(&out),
    ]);
    assert_eq!(bad_scheme.status.code(), Some(2));
    assert_eq!(ecshare(&["simulate", "--config", path(&config)]).status.code(), Some(2));
    let zero = ecshare(&[
        "simulate",
        "--config",
        path(&config),
        "--data",
        path(&data),
        "--resample",
        "0",
        "--out",
        path(&out),
    ]);
    assert_eq!(zero.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bad_data_exits_1_with_json_errors() {
    let (_dir, config, data) = dataset(&[]);
    let text = fs::read_to_string(&data).unwrap();
    // Drop one mid-series row to open a gap. Rows are timestamp-major.
    let broken: Vec<&str> = text
        .lines()
        .enumerate()
        .filter(|(i, _)| *i != 100)
        .map(|(_, l)| l)
        .collect();
    fs::write(&data, broken.join("\n") + "\n").unwrap();

    let out = ecshare(&["verify", "--config", path(&config), "--data", path(&data)]);
    assert_eq!(out.status.code(), Some(1));
    let errors: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    let first = &errors["errors"][0];
    assert_eq!(first["kind"], "gap");
    assert!(first["row"].as_u64().is_some());
}

#[test]
fn bad_config_exits_1() {
    let (dir, config, data) = dataset(&[]);
    let text = fs::read_to_string(&config)
        .unwrap()
        .replacen("\"interval_minutes\": 1", "\"interval_minutes\": 0", 1);
    fs::write(&config, text).unwrap();
    let out = ecshare(&[
        "simulate",
        "--config",
        path(&config),
        "--data",
        path(&data),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let errors: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(errors["errors"][0]["subject"], "interval_minutes");
}

#[test]
fn verify_passes_on_the_reference_scenario() {
    let (_dir, config, data) = dataset(&[]);
    let out = ecshare(&["verify", "--config", path(&config), "--data", path(&data)]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.matches("[PASS]").count(), 8, "{stdout}");
    assert!(!stdout.contains("[FAIL]"));
}

#[test]
fn verify_reports_an_injected_fault() {
    let (_dir, config, data) = dataset(&[]);
    let out = ecshare(&[
        "verify",
        "--config",
        path(&config),
        "--data",
        path(&data),
        "--inject-fault",
        "700",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(3), "{stdout}");
    let failed: Vec<&str> = stdout.lines().filter(|l| l.starts_with("[FAIL]")).collect();
    assert_eq!(failed.len(), 1, "{stdout}");
    assert!(failed[0].contains("per-interval energy conservation") && failed[0].contains("interval 700"));
}

#[test]
fn consumers_only_shares_nothing() {
    let (dir, config, data) = dataset(&["--consumers-only"]);
    let out = dir.path().join("out");
    assert!(simulate_all(&config, &data, &out, &[]).status.success());
    for row in community_rows(&out) {
        assert_eq!(row[4], "0.000", "{row:?}");
        assert_eq!(row[5], "0.000", "{row:?}");
    }
    let verify = ecshare(&["verify", "--config", path(&config), "--data", path(&data)]);
    assert!(verify.status.success(), "{}", String::from_utf8_lossy(&verify.stdout));
}
