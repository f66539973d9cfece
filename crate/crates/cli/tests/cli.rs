use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_BIMODAL: &str = r#"
experiment = "bimodal"
seed = 3

[bimodal]
particles = [1, 4]
n_gold = 40
n_target = 40
n_diagnostic = 40
"#;

fn aide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aide"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn writes_csv_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "b.toml", SMALL_BIMODAL);
    let csv = dir.path().join("out.csv");
    let out = aide(&["bimodal", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().count() > 1);
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out.csv.meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["config"]["seed"], 3);
    assert_eq!(meta["config"]["experiment"], "bimodal");
    assert!(meta["git_describe"].is_string());
    assert!(meta["version"].is_string());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "b.toml", SMALL_BIMODAL);
    let with_flag = aide(&["bimodal", "--config", &cfg, "--seed", "11"]);
    let cfg11 = write(
        dir.path(),
        "b11.toml",
        &SMALL_BIMODAL.replace("seed = 3", "seed = 11"),
    );
    let from_file = aide(&["bimodal", "--config", &cfg11]);
    let original = aide(&["bimodal", "--config", &cfg]);
    assert_eq!(with_flag.stdout, from_file.stdout);
    assert_ne!(with_flag.stdout, original.stdout);
}

#[test]
fn output_is_independent_of_thread_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "b.toml", SMALL_BIMODAL);
    let one = aide(&["bimodal", "--config", &cfg, "--threads", "1"]);
    let three = aide(&["bimodal", "--config", &cfg, "--threads", "3"]);
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, three.stdout);
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let zero = write(
        dir.path(),
        "zero.toml",
        "experiment = \"property-suite\"\n[property]\nreplications = 0\n",
    );
    let out = aide(&["property-suite", "--config", &zero]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("property.replications"));

    let unknown = write(
        dir.path(),
        "unknown.toml",
        "experiment = \"bimodal\"\n[bimodal]\nparticels = [4]\n",
    );
    assert_eq!(code(&aide(&["bimodal", "--config", &unknown])), 2);

    let cfg = write(dir.path(), "b.toml", SMALL_BIMODAL);
    assert_eq!(code(&aide(&["hmm-sweep", "--config", &cfg])), 2);
    assert_eq!(
        code(&aide(&["bimodal", "--config", &cfg, "--threads", "0"])),
        2
    );
}

#[test]
fn injected_bias_fails_the_suite() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "p.toml",
        "experiment = \"property-suite\"\n[property]\nreplications = 4000\nsymmetry_replications = 2000\n",
    );
    let clean = aide(&["property-suite", "--config", &cfg]);
    assert_eq!(
        code(&clean),
        0,
        "{}",
        String::from_utf8_lossy(&clean.stdout)
    );
    let biased = aide(&["property-suite", "--config", &cfg, "--inject-bias"]);
    assert_eq!(code(&biased), 1);
    let report: serde_json::Value = serde_json::from_slice(&biased.stdout).unwrap();
    assert_eq!(report["passed"], false);
}
