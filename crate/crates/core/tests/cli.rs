//! End-to-end checks of the binary, the config format and the CSV schema.
//! Set `UPDATE_GOLDEN=1` to rewrite the golden files.

use std::path::{Path, PathBuf};
use std::process::Command;

use aaggff::config::ConfigFile;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, want, "golden {name} differs");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aaggff"))
}

#[test]
fn canonical_config_matches_golden() {
    let text = std::fs::read_to_string(golden("tiny.toml")).unwrap();
    let canon = ConfigFile::parse(&text).unwrap().canonical().to_toml().unwrap();
    check_golden("tiny.canonical.toml", &canon);
    // and the canonical form is a fixed point
    let again = ConfigFile::parse(&canon).unwrap().canonical().to_toml().unwrap();
    assert_eq!(canon, again);
}

#[test]
fn run_writes_golden_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run", "--config"])
        .arg(golden("tiny.toml"))
        .arg("--output")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for name in ["rounds_seed7.csv", "summary.csv"] {
        check_golden(name, &std::fs::read_to_string(tmp.path().join(name)).unwrap());
    }
}

#[test]
fn seeds_flag_and_thread_count_do_not_change_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let dir = tmp.path().join(threads);
        let ok = bin()
            .args(["run", "--seeds", "2,5", "--threads", threads, "--config"])
            .arg(golden("tiny.toml"))
            .arg("--output")
            .arg(&dir)
            .status()
            .unwrap();
        assert!(ok.success());
        let read = |f: &str| std::fs::read(dir.join(f)).unwrap();
        outputs.push((read("rounds_seed2.csv"), read("rounds_seed5.csv"), read("summary.csv")));
        assert!(!dir.join("rounds_seed7.csv").exists());
    }
    assert_eq!(outputs[0], outputs[1]);
    let summary = String::from_utf8(outputs[0].2.clone()).unwrap();
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn bad_config_exits_nonzero_with_key_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "K = 3\nT = 1\nmethod = \"Static\"\nlearning_rate = 0.1\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("learning_rate") && err.contains("bad.toml"), "{err}");
}

#[test]
fn missing_config_file_names_path() {
    let out = bin().args(["run", "--config", "/nonexistent/x.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/x.toml"));
}

#[test]
fn bench_subcommands_succeed() {
    let out = bin().args(["unify-check", "--instances", "20"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.ends_with(",true")).count(), 5);

    let out = bin().args(["regret-bench", "--horizons", "50,100"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1 + 2 * 4 * 2);
}
