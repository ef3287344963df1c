//! Exit codes and output files of the `speclab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn speclab(args: &[&str], config: Option<(&Path, &str)>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_speclab"));
    if let Some((path, text)) = config {
        std::fs::write(path, text).unwrap();
    }
    cmd.args(args).env("RUST_LOG", "warn").output().unwrap()
}

#[test]
fn lipschitz_energy_above_threshold_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let out_dir = dir.path().join("out");
    let out = speclab(
        &["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        Some((&cfg, "suite = \"lipschitz\"\n[lipschitz]\nenergies = [0.1, 0.3]\n")),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("E0"));
    assert!(!out_dir.exists(), "nothing is written before validation passes");
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let out = speclab(
        &["run", "--config", cfg.to_str().unwrap()],
        Some((&cfg, "suite = \"wegner\"\n[wegner]\nkapas = [1.0]\n")),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixed_site_rejects_neumann() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("neumann.toml");
    let text = "suite = \"fixed_site\"\n[domain]\nd = 1\nL = 2\nm = 4\nbc = \"neumann\"\n";
    let out = speclab(&["run", "--config", cfg.to_str().unwrap()], Some((&cfg, text)));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn small_run_writes_summary_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ok.toml");
    let out_dir = dir.path().join("out");
    let text = "suite = \"wegner\"\nn_samples = 100\n[wegner]\nrerun_samples = 200\n";
    let out = speclab(
        &["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", "5"],
        Some((&cfg, text)),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["master_seed"], 5);
    assert_eq!(summary["suites"][0]["suite"], "wegner");
    let csv = std::fs::read_to_string(out_dir.join("wegner.csv")).unwrap();
    assert!(csv.starts_with("check,instance,lhs,rhs,margin,passed,seed,params"));
    assert!(out_dir.join("ldos.csv").exists());
}

#[test]
fn constants_out_of_domain_exits_2() {
    let out = speclab(&["constants", "--d", "1", "--b", "0.3"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = speclab(&["constants", "--d", "2", "--b", "0.1", "--m", "8"], None);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("E0_h"));
}
