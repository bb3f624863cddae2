use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> (i32, Value) {
    let status = Command::new(env!("CARGO_BIN_EXE_fbma"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("FBMA_OUT")
        .env_remove("FBMA_THREADS")
        .output()
        .expect("binary runs");
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).expect("manifest written")).unwrap();
    (status.status.code().unwrap(), manifest)
}

fn output_paths(m: &Value) -> Vec<String> {
    m["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap().to_string()).collect()
}

#[test]
fn reconstruction_config_exits_zero_with_profile() {
    let dir = tempfile::tempdir().unwrap();
    let (code, m) = run(&configs().join("reconstruct_1d.json"), dir.path(), &[]);
    assert_eq!(code, 0, "{m}");
    assert_eq!(m["status"], "converged");
    assert!(output_paths(&m).contains(&"u_profile.csv".to_string()));
    let text = std::fs::read_to_string(dir.path().join("u_profile.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for row in rdr.records() {
        let row = row.unwrap();
        let (x, u): (f64, f64) = (row[0].parse().unwrap(), row[1].parse().unwrap());
        assert!((u - 0.5 * (x * x - 1.0)).abs() < 1e-2);
    }
}

#[test]
fn non_example_config_exits_one_diverged() {
    let dir = tempfile::tempdir().unwrap();
    let (code, m) = run(&configs().join("non_example_1d.json"), dir.path(), &[]);
    assert_eq!(code, 1);
    assert_eq!(m["status"], "diverged-diam");
    assert!(dir.path().join("nodes.csv").exists());
}

#[test]
fn landscape_config_emits_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let (code, m) = run(&configs().join("landscape_fig1.json"), dir.path(), &[]);
    assert_eq!(code, 0, "{m}");
    let paths = output_paths(&m);
    assert!(paths.contains(&"landscape.csv".into()) && paths.contains(&"landscape.svg".into()));
    assert!(m["summary"]["two_component_level"].is_object());
}

#[test]
fn schema_violations_exit_two_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"schema\": 1,\n  \"subcommand\": \"solve\",\n  \"nodes\": 12\n}\n").unwrap();
    let out = dir.path().join("out");
    let (code, m) = run(&cfg, &out, &[]);
    assert_eq!(code, 2);
    assert_eq!(m["status"], "invalid-config");
    assert_eq!(m["summary"]["line"], 4);
    assert!(m["message"].as_str().unwrap().contains(":4:"));

    std::fs::write(&cfg, "{\n  \"schema\": 1,\n  \"subcommand\": \"lift-ot\"\n}\n").unwrap();
    let (code, m) = run(&cfg, &out, &[]);
    assert_eq!(code, 2);
    assert_eq!(m["summary"]["line"], 3);
}

#[test]
fn reruns_are_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = configs().join("lift_ot_1d.json");
    let (_, ma) = run(&cfg, a.path(), &["--seed", "5"]);
    let (_, mb) = run(&cfg, b.path(), &["--seed", "5", "--threads", "2"]);
    assert_eq!(ma["status"], mb["status"]);
    assert_eq!(ma["seed"], 5);
    for p in output_paths(&ma) {
        assert_eq!(std::fs::read(a.path().join(&p)).unwrap(), std::fs::read(b.path().join(&p)).unwrap(), "{p} differs");
    }
}

#[test]
fn env_overrides_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-env");
    let status = Command::new(env!("CARGO_BIN_EXE_fbma"))
        .arg("--config")
        .arg(configs().join("check_non_example.json"))
        .env("FBMA_OUT", &out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["summary"]["property"], "none");
}

#[test]
fn every_sample_config_parses() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(fbma::cli::parse_config(&text).is_ok(), "{}", path.display());
    }
}
