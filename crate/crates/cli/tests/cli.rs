use std::path::Path;
use std::process::{Command, Output};

use radlabel::corpus::to_radgraph_json;
use radlabel::fixtures::generate_reports;

fn radlabel(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_radlabel"));
    cmd.current_dir(dir).args(args);
    for key in ["RADLABEL_CONFIG", "RADLABEL_OUT", "RADLABEL_CORPUS", "RADLABEL_PROPORTION", "RADLABEL_SEED"] {
        cmd.env_remove(key);
    }
    cmd.envs(env.iter().copied());
    cmd.output().unwrap()
}

fn write_corpus(dir: &Path) {
    let json = to_radgraph_json(&generate_reports(5, 1)).unwrap();
    std::fs::write(dir.join("radgraph.json"), serde_json::to_vec(&json).unwrap()).unwrap();
}

#[test]
fn missing_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = radlabel(dir.path(), &["--corpus", "absent.json", "ingest"], &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_and_malformed_input_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let out = radlabel(dir.path(), &["--corpus", "radgraph.json", "--proportion", "1.5", "ingest"], &[]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.json"), b"{not json").unwrap();
    let out = radlabel(dir.path(), &["--corpus", "bad.json", "ingest"], &[]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn flag_beats_env_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    std::fs::write(dir.path().join("run.toml"), "out = \"from-file\"\nseed = 7\ncorpus = \"radgraph.json\"\n").unwrap();

    let out = radlabel(dir.path(), &["--config", "run.toml", "ingest"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("from-file/reports.jsonl").exists());

    let out = radlabel(dir.path(), &["--config", "run.toml", "ingest"], &[("RADLABEL_OUT", "from-env")]);
    assert!(out.status.success());
    assert!(dir.path().join("from-env/reports.jsonl").exists());

    let out = radlabel(dir.path(), &["--config", "run.toml", "--out", "from-flag", "ingest"], &[("RADLABEL_OUT", "from-env")]);
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("from-flag/manifest-ingest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "ingest");
    assert_eq!(manifest["config"]["seed"], 7);
    assert!(manifest["inputs"][0]["sha256"].as_str().is_some_and(|h| h.len() == 64));
}
