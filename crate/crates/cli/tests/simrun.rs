use std::path::PathBuf;
use std::process::Command;

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn simrun(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_simrun")).args(args).output().unwrap();
    (out.status.success(), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn scenario_run_prints_a_passing_report() {
    let file = scenarios().join("lesson-600.toml");
    let (ok, text) = simrun(&["--scenario", file.to_str().unwrap(), "--seed", "7"]);
    assert!(ok, "{text}");
    assert!(text.contains("PASS ledger_conservation"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}

#[test]
fn fuzz_run_writes_a_log() {
    let dir = tempdir();
    let log = dir.join("run.log");
    let (ok, text) = simrun(&["--seed", "3", "--events", "300", "--log", log.to_str().unwrap()]);
    assert!(ok, "{text}");
    let written = std::fs::read_to_string(&log).unwrap();
    assert!(written.starts_with("{\"format\":\"peerlingo-log\""), "{}", &written[..80.min(written.len())]);
    // same seed, same bytes
    let again = dir.join("again.log");
    simrun(&["--seed", "3", "--events", "300", "--log", again.to_str().unwrap()]);
    assert_eq!(written, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn bad_scenario_exits_with_usage_error() {
    let dir = tempdir();
    let file = dir.join("bad.toml");
    std::fs::write(&file, "seed = \"x\"").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_simrun"))
        .args(["--scenario", file.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("simrun-test-{}-{:?}", std::process::id(), std::thread::current().id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
