use std::path::Path;
use std::process::{Command, Output};

use crowdflow::scenario::{run_scenario, Overrides, ScenarioConfig};

const SMALL: &str = r#"
[domain]
a = 1.0
R = 3.0
weight = "radial"
has_exit = true

[initial]
kind = "table"
r = [1.0, 2.0, 3.0]
rho = [0.3, 0.8]

[run]
tau = 0.05
T = 1.0
snapshots = [0.25, 1.0]

[grid]
n_cells = 128
n_nodes = 256
"#;

fn crowdflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_output_matches_library_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = crowdflow(&["run", "--config", &cfg_path, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = ScenarioConfig::from_toml(SMALL)
        .unwrap()
        .for_run(&Overrides {
            out: Some(out.to_string_lossy().into_owned()),
            ..Overrides::default()
        })
        .unwrap();
    let lib = run_scenario(&cfg).unwrap();
    for (name, body) in &lib.files {
        let written = std::fs::read_to_string(out.join(name)).unwrap();
        assert_eq!(&written, body, "{name}");
    }
    assert_eq!(String::from_utf8_lossy(&o.stdout), lib.summary.to_text());
}

#[test]
fn overrides_reach_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let o = crowdflow(&[
        "run",
        "--config",
        &cfg_path,
        "--out",
        out.to_str().unwrap(),
        "--tau",
        "0.1",
        "--T",
        "0.5",
        "--snapshots",
        "0.2,0.5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("rho_t0.200.svg").exists());
    assert!(out.join("rho_t0.500.csv").exists());
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("steps = 5\n"), "{summary}");
}

#[test]
fn missing_radius_is_a_named_parse_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), &SMALL.replace("R = 3.0\n", ""));
    let o = crowdflow(&["run", "--config", &cfg_path, "--dry-run"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing field `R`"), "{err}");
}

#[test]
fn dry_run_validates_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let o = crowdflow(&["study", "--preset", "saturated", "--dry-run", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
    let o = crowdflow(&["run", "--preset", "fig4", "--dry-run"]);
    assert!(o.status.success());
}

#[test]
fn study_needs_four_step_sizes() {
    let o = crowdflow(&["study", "--preset", "saturated", "--tau", "0.1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 4"));
}

#[test]
fn study_prints_order_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("study");
    let o = crowdflow(&["study", "--preset", "saturated", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = String::from_utf8_lossy(&o.stdout);
    let order: f64 = line
        .trim()
        .strip_prefix("order=")
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("bad summary {line:?}"));
    assert!((0.85..=1.1).contains(&order), "{order}");
    let csv = std::fs::read_to_string(out.join("study.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn fig3_preset_writes_four_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fig3");
    let o = crowdflow(&["run", "--preset", "fig3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for t in ["0.500", "1.500", "3.000", "6.000"] {
        let svg = std::fs::read_to_string(out.join(format!("rho_t{t}.svg"))).unwrap();
        assert!(svg.contains(r#"width="800" height="400""#));
    }
}

#[test]
fn unknown_preset_and_conflicting_sources_fail() {
    assert!(!crowdflow(&["run", "--preset", "fig9"]).status.success());
    assert!(!crowdflow(&["run"]).status.success());
    assert!(!crowdflow(&["run", "--preset", "fig3", "--config", "x.toml"]).status.success());
}

#[test]
fn campaign_reports_and_is_deterministic() {
    let a = crowdflow(&["campaign", "--seed", "5", "--cases", "2"]);
    let b = crowdflow(&["campaign", "--seed", "5", "--cases", "2"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
