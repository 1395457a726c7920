use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn simgap(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_simgap"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("SIMGAP_")) {
        cmd.env_remove(k);
    }
    cmd.args(args).envs(env.iter().copied()).output().expect("spawn simgap")
}

fn bounded_dataset(dir: &Path, m: usize, second: bool) -> PathBuf {
    let mut text = String::new();
    for j in 0..m {
        let p = -0.9 + 1.8 * j as f64 / m as f64;
        let q = (p + 0.1 * ((j % 7) as f64 - 3.0) / 3.0).clamp(-1.0, 1.0);
        let q2 = if second {
            format!(r#","q_hat_2":{}"#, (q + 0.4).clamp(-1.0, 1.0))
        } else {
            String::new()
        };
        text.push_str(&format!(
            r#"{{"scenario_id":"s{j}","family":"bounded","domain":[-1,1],"n":400,"k":40,"p_hat":{p},"q_hat":{q}{q2}}}"#
        ));
        text.push('\n');
    }
    let path = dir.join("data.jsonl");
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn calibrate_is_deterministic_up_to_timestamp_and_out_dir() {
    let dir = TempDir::new().unwrap();
    let data = bounded_dataset(dir.path(), 120, false);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = simgap(&["calibrate", "-i", s(&data), "-o", s(out)], &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["curve.csv", "calibrated.csv", "summary.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (mut ra, mut rb) = (read_json(&a.join("report.json")), read_json(&b.join("report.json")));
    for r in [&mut ra, &mut rb] {
        r["provenance"]["timestamp"] = Value::Null;
        // the output directory is the one intended difference
        r["config"]["out"] = Value::Null;
    }
    assert_eq!(ra, rb);

    let curve = fs::read_to_string(a.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("alpha,threshold"));
    assert_eq!(curve.lines().count(), 100);
    assert_eq!(fs::read_to_string(a.join("calibrated.csv")).unwrap().lines().count(), 102);
    assert_eq!(ra["provenance"]["dataset_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn summary_numbers_appear_in_report() {
    let dir = TempDir::new().unwrap();
    let data = bounded_dataset(dir.path(), 80, false);
    let out = dir.path().join("out");
    let o = simgap(&["calibrate", "-i", s(&data), "-o", s(&out)], &[]);
    assert!(o.status.success());
    let report = read_json(&out.join("report.json"));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    let auc: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("AUC_cal: "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(auc, report["auc_cal"].as_f64().unwrap());
    assert_eq!(report["m"].as_u64(), Some(80));
}

#[test]
fn compare_prints_certificate() {
    let dir = TempDir::new().unwrap();
    let data = bounded_dataset(dir.path(), 200, true);
    let out = dir.path().join("out");
    let o = simgap(&["compare", "-i", s(&data), "-o", s(&out), "--alpha-grid", "0.2,0.5"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(
        stdout.contains("simulator 1 at least as good as simulator 2, certified on >= "),
        "{stdout}"
    );
    assert!(out.join("pairwise.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let data = bounded_dataset(dir.path(), 20, false);
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(simgap(&["calibrate", "-i", s(&missing)], &[]).status.code(), Some(4));
    let out = dir.path().join("o");
    assert_eq!(simgap(&["calibrate", "-i", s(&data), "-o", s(&out), "--gamma", "2"], &[]).status.code(), Some(2));
    // compare needs a second simulator
    assert_eq!(simgap(&["compare", "-i", s(&data), "-o", s(&out)], &[]).status.code(), Some(2));
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"scenario_id\":\"a\",\"family\":\"bounded\"}\n").unwrap();
    let o = simgap(&["calibrate", "-i", s(&bad), "-o", s(&out)], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn flags_override_env_override_config() {
    let dir = TempDir::new().unwrap();
    let data = bounded_dataset(dir.path(), 60, false);
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!("input = \"{}\"\nout = \"{}\"\ngamma = 0.3\neta = 0.1\nloss = \"absolute\"\n", s(&data), s(&out)),
    )
    .unwrap();
    let o = simgap(&["calibrate", "--config", s(&cfg), "--eta", "0.2"], &[("SIMGAP_GAMMA", "0.4")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["config"]["gamma"].as_f64(), Some(0.4));
    assert_eq!(r["config"]["eta"].as_f64(), Some(0.2));
    assert_eq!(r["config"]["loss"].as_str(), Some("absolute"));
    assert_eq!(r["params"]["gamma"].as_f64(), Some(0.4));

    fs::write(&cfg, "gamma = 0.3\nbogus = 1\n").unwrap();
    let o = simgap(&["calibrate", "--config", s(&cfg), "-i", s(&data), "-o", s(&out)], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn band_and_new_scenario_run() {
    let dir = TempDir::new().unwrap();
    let data = bounded_dataset(dir.path(), 100, false);
    let out = dir.path().join("out");
    let o = simgap(&["band", "-i", s(&data), "-o", s(&out), "--tau-grid", "0.25,0.5"], &[]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("band.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').take(3).map(|x| x.parse().unwrap()).collect();
        assert!(cols[1] <= cols[2], "{line}");
    }
    let o = simgap(&["new-scenario", "-i", s(&data), "-o", s(&out), "--q-hat", "0.1", "--alpha", "0.2"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let set = read_json(&out.join("new_scenario.json"));
    let (lo, hi) = (set["region"]["lo"].as_f64().unwrap(), set["region"]["hi"].as_f64().unwrap());
    assert!(lo <= 0.1 && 0.1 <= hi);
}

#[test]
fn simulate_generate_round_trips_through_calibrate() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("gen");
    let cfg = dir.path().join("sim.toml");
    fs::write(
        &cfg,
        r#"
[simulate]
experiment = "generate"

[simulate.generator]
seed = 5
m_calibration = 40
m_holdout = 10
k = 50
simulator_bias = 0.3
replications = 1
family = { kind = "bernoulli" }
n_law = { kind = "fixed", n = 300 }
truth_law = { kind = "uniform", lo = 0.1, hi = 0.9 }
"#,
    )
    .unwrap();
    let run = |seed: &str, out: &Path| simgap(&["simulate", "--config", s(&cfg), "-o", s(out), "--seed", seed], &[]);
    let o = run("5", &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = out.join("dataset.jsonl");
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 40);

    let again = dir.path().join("gen2");
    assert!(run("5", &again).status.success());
    assert_eq!(fs::read(&data).unwrap(), fs::read(again.join("dataset.jsonl")).unwrap());

    let cal = dir.path().join("cal");
    let o = simgap(&["calibrate", "-i", s(&data), "-o", s(&cal), "--smoothing", "0.001"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&cal.join("report.json"))["m"].as_u64(), Some(40));
}
