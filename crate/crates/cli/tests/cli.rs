use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn trustpc(args: &[&str], config: Option<&str>, dir: &TempDir) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trustpc"));
    cmd.args(args).arg("--out").arg(dir.path().join("runs"));
    if let Some(text) = config {
        let path = dir.path().join("config.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn run_dir(out: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const COSINE: &str = "n_batches = 2\nseeds = [0, 1]\n";

#[test]
fn cosine_writes_manifest_and_tables() {
    let tmp = TempDir::new().unwrap();
    let out = trustpc(&["cosine"], Some(COSINE), &tmp);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    let m = manifest(&dir);
    assert_eq!(m["command"], "cosine");
    assert_eq!(m["seed_offset"], 0);
    assert_eq!(m["diverged"], false);
    assert_eq!(m["config"]["n_batches"], 2);
    let hash = m["config_hash"].as_str().unwrap();
    assert!(dir.file_name().unwrap().to_str().unwrap().ends_with(&hash[..12]));
    for f in m["files"].as_array().unwrap() {
        assert!(dir.join(f.as_str().unwrap()).is_file(), "{f}");
    }
    let rows = fs::read_to_string(dir.join("directions.csv")).unwrap();
    // header plus 2 seeds × 2 batches × 3 algorithms
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn seed_offset_changes_the_run() {
    let tmp = TempDir::new().unwrap();
    let a = trustpc(&["cosine"], Some(COSINE), &tmp);
    let b = trustpc(&["cosine", "--seed", "7"], Some(COSINE), &tmp);
    let (da, db) = (run_dir(&a), run_dir(&b));
    assert_ne!(da, db);
    let mb = manifest(&db);
    assert_eq!(mb["seed_offset"], 7);
    assert_eq!(mb["config"]["seeds"], serde_json::json!([7, 8]));
    assert_ne!(fs::read(da.join("directions.csv")).unwrap(), fs::read(db.join("directions.csv")).unwrap());
}

#[test]
fn reruns_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let a = run_dir(&trustpc(&["cosine"], Some(COSINE), &tmp));
    let first = fs::read(a.join("directions.csv")).unwrap();
    let b = run_dir(&trustpc(&["cosine"], Some(COSINE), &tmp));
    assert_eq!(a, b);
    assert_eq!(first, fs::read(b.join("directions.csv")).unwrap());
}

#[test]
fn landscape_writes_both_surfaces() {
    let tmp = TempDir::new().unwrap();
    let out = trustpc(&["landscape"], Some("landscape_resolution = 11\n"), &tmp);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    assert!(dir.join("loss_landscape.csv").is_file());
    assert!(dir.join("energy_landscape.csv").is_file());
}

#[test]
fn unknown_config_key_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let out = trustpc(&["cosine"], Some("no_such_key = 1\n"), &tmp);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn missing_config_file_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_trustpc"))
        .args(["toy", "--config"])
        .arg(tmp.path().join("absent.toml"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_mnist_data_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = format!("data_dir = {:?}\n", tmp.path().join("nowhere").display().to_string());
    let out = trustpc(&["mnist"], Some(&cfg), &tmp);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MNIST"));
}

#[test]
fn divergence_exits_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = "learning_rate = 1e6\nmax_batches = 50\n";
    let out = trustpc(&["perturb"], Some(cfg), &tmp);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
