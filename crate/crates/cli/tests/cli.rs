use std::path::Path;
use std::process::{Command, Output};

fn wptirs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wptirs")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = "[experiment]\nscenario = \"idc_vs_N\"\nalgorithms = [\"mu_fs\", \"mu_ff\", \"no_irs\"]\n\
sweep = [1, 2]\ntrials = 2\nseed = 11\n[system]\nelements = 3\n";

#[test]
fn defaults_output_validates() {
    let dir = tempfile::tempdir().unwrap();
    let out = wptirs(&["defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[experiment]") && text.contains("power_dbm = 36.0"));
    let path = write(dir.path(), "defaults.toml", &text);
    assert!(wptirs(&["validate", &path]).status.success());
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[experiment]\nfoo = 1\n");
    let out = wptirs(&["validate", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));
    assert_eq!(wptirs(&["run", &bad]).status.code(), Some(1));
    let missing = dir.path().join("missing.toml");
    assert_eq!(wptirs(&["validate", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn run_is_deterministic_across_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("p{threads}.csv"));
        let status = wptirs(&["run", &cfg, "--out", out.to_str().unwrap(), "--parallel", threads, "--no-timing"]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.starts_with("scenario,algorithm,sweep_name,sweep_value,trial,current_amps,iterations,converged,wall_ms\n"));
    assert_eq!(text.lines().count(), 1 + 2 * (2 * 3 + 3));
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let a = wptirs(&["run", &cfg, "--no-timing"]).stdout;
    let b = wptirs(&["run", &cfg, "--no-timing", "--seed", "12"]).stdout;
    let c = wptirs(&["run", &cfg, "--no-timing", "--seed", "11"]).stdout;
    assert_ne!(a, b);
    assert_eq!(a, c);
}

#[test]
fn json_output_has_metadata_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = wptirs(&["run", &cfg, "--format", "json", "--no-timing"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"metadata\"") && text.contains("\"config_hash\"") && text.contains("\"AGGREGATE\""));
    assert!(text.contains("\"seed\": 11"));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = wptirs(&["validate", path.to_str().unwrap()]);
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
            count += 1;
        }
    }
    assert!(count >= 8);
}
