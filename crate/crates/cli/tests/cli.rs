use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kljn-lab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn data_section(dir: &Path) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
    v["data"].clone()
}

#[test]
fn list_scenarios_names_all_eight() {
    let out = lab(&["list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "kljn_ideal",
        "kljn_wire",
        "kljn_injection",
        "kljn_coupler",
        "kljn_transient",
        "br_ideal",
        "br_damped",
        "br_wire_johnson",
    ] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn unknown_key_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "beps = 10\n[kljn]\ntau = 0.1\nbandwith = 500.0\n");
    let out = lab(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bandwith") && err.contains("line 4"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn non_monotone_sweep_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&[
        "sweep",
        "--parameter",
        "sigma",
        "--values",
        "0.01,0.03,0.02,0.04",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3_and_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "beps = 4\n[kljn]\nr_h = 1e300\nt_eff = 1e290\n");
    let out_dir = dir.path().join("o");
    let out = lab(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_dir.exists() || fs::read_dir(&out_dir).unwrap().next().is_none());
}

#[test]
fn run_writes_reports_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scenario = \"kljn_wire\"\n[kljn]\nr_wire = 200.0\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = lab(&["run", "--config", &cfg, "--seed", "9", "--trials", "60", "--out", d.to_str().unwrap(), "--quiet"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
    for f in ["records.csv", "verdicts.csv", "config.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(data_section(&a), data_section(&b));
    let records = fs::read_to_string(a.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 62);
    let echoed = fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 9") && echoed.contains("beps = 60"));
}

#[test]
fn embedded_config_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = lab(&["run", "--trials", "40", "--seed", "5", "--out", first.to_str().unwrap(), "--quiet"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(first.join("report.json")).unwrap()).unwrap();
    let cfg = write_config(dir.path(), v["provenance"]["config_toml"].as_str().unwrap());
    let second = dir.path().join("second");
    assert!(lab(&["run", "--config", &cfg, "--out", second.to_str().unwrap(), "--quiet"]).status.success());
    assert_eq!(data_section(&first), data_section(&second));
}

#[test]
fn sweep_writes_two_column_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "scenario = \"kljn_wire\"\nbeps = 200\n[sweep]\nparameter = \"r_wire_fraction\"\nvalues = [0.01, 0.02, 0.03, 0.04]\n",
    );
    let out = lab(&["sweep", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    let mut lines = series.lines().skip(1);
    assert_eq!(lines.next(), Some("r_wire_fraction,q_hat"));
    assert_eq!(lines.count(), 4);
    let data = data_section(dir.path());
    assert_eq!(data["scaling"]["attack"], "wire_resistance");
    assert_eq!(data["points"].as_array().unwrap().len(), 4);
}

#[test]
fn report_security_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["report-security", "--q", "0.05", "--pa-rounds", "2", "--n", "500,1000", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("delta_linear=9.33e-303"), "{text}");
    assert!(text.contains("delta_linear=1.53e-152"), "{text}");
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("security.json")).unwrap()).unwrap();
    assert_eq!(v["data"][1]["delta_exact"], "9.81e-303");
}

#[test]
fn report_security_zero_advantage() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["report-security", "--q", "0", "--n", "10,1000,100000", "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("security.json")).unwrap()).unwrap();
    for row in v["data"].as_array().unwrap() {
        assert_eq!(row["delta_exact"], "0");
        assert_eq!(row["delta_linear"], "0");
        assert_eq!(row["satisfied"], true);
    }
}

#[test]
fn br_run_cracks_every_selected_attack() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scenario = \"br_ideal\"\nbeps = 12\ncomplementary_only = true\n");
    assert!(lab(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--quiet"]).status.success());
    let data = data_section(dir.path());
    let attacks = data["points"][0]["attacks"].as_object().unwrap();
    assert_eq!(attacks.len(), 6);
    for (name, a) in attacks {
        assert_eq!(a["estimate"]["p_hat"], 1.0, "{name}");
    }
}
