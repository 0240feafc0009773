use std::path::Path;
use std::process::{Command, Output};

fn loadcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadcast"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

const SMALL: [&str; 4] = ["--set", "synth.households=20", "--set", "synth.days=9"];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(SMALL).collect()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        loadcast(dir.path(), &["no-such-command"]).status.code(),
        Some(2)
    );
    let out = loadcast(dir.path(), &["config", "--set", "clustering.nope=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_upstream_artifact_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let out = loadcast(dir.path(), &["cluster", "--out", "out"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("run `ingest` first"), "{stderr}");
}

#[test]
fn missing_input_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = loadcast(
        dir.path(),
        &["ingest", "--out", "out", "--electricity", "absent.csv"],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn infeasible_clustering_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    for step in ["synth", "ingest"] {
        let out = loadcast(dir.path(), &with_small(&[step, "--out", "out"]));
        assert!(
            out.status.success(),
            "{step}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let mut args = with_small(&["cluster", "--out", "out"]);
    args.extend(["--set", "clustering.k=500"]);
    assert_eq!(loadcast(dir.path(), &args).status.code(), Some(4));
}

#[test]
fn config_prints_effective_toml_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = loadcast(
        dir.path(),
        &["config", "--set", "clustering.k=7", "--seed", "11"],
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let value: toml::Table = text.parse().unwrap();
    assert_eq!(value["clustering"]["k"].as_integer(), Some(7));
    assert_eq!(value["seed"].as_integer(), Some(11));
    assert_eq!(value["synth"]["seed"].as_integer(), Some(11));
}

#[test]
fn run_manifest_records_every_output_of_the_chain() {
    let dir = tempfile::tempdir().unwrap();
    for step in ["synth", "ingest", "cluster", "extract", "features"] {
        let out = loadcast(dir.path(), &with_small(&[step, "--out", "out"]));
        assert!(
            out.status.success(),
            "{step}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out_dir = dir.path().join("out");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("run.json")).unwrap()).unwrap();
    let commands = manifest["commands"].as_object().unwrap();
    assert_eq!(commands.len(), 5);
    for run in commands.values() {
        for entry in run["outputs"].as_array().unwrap() {
            let path = out_dir.join(entry["path"].as_str().unwrap());
            let bytes = std::fs::read(&path).unwrap();
            let digest = sha2_hex(&bytes);
            assert_eq!(
                entry["sha256"].as_str().unwrap(),
                digest,
                "{}",
                path.display()
            );
        }
    }
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("pattern_model.json")).unwrap())
            .unwrap();
    assert_eq!(model["config_hash"], manifest["config_hash"]);
}

fn sha2_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
