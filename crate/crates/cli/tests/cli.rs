//! End-to-end checks of the command-line surface: JSON summaries, CSV
//! artifacts, exit codes and byte-level reproducibility.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hesslab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn hesslab")
}

fn json_of(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hesslab-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn rank_logrho_matches_lemma() {
    let v = json_of(&run(&["rank", "--op", "logrho", "--k", "2", "--n", "3"]));
    assert_eq!(v["rank"], 2);
}

#[test]
fn rank_sigmak_matches_remark() {
    let v = json_of(&run(&["rank", "--op", "sigmak", "--k", "2", "--n", "3"]));
    assert_eq!(v["rank"], 2); // n - k + 1
}

#[test]
fn summaries_are_byte_identical_across_runs() {
    let a = run(&["dichotomy", "--op", "logrho", "--k", "1", "--n", "2", "--sigma", "0",
                  "--mu", "2,2", "--seed", "7", "--threads", "1"]);
    let b = run(&["dichotomy", "--op", "logrho", "--k", "1", "--n", "2", "--sigma", "0",
                  "--mu", "2,2", "--seed", "7", "--threads", "1"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn solve_recovers_manufactured_solution() {
    let dir = tmp_dir("solve");
    let config = r#"{
        "dimension": 2,
        "resolution": 16,
        "operator": {"family": "log_rho_k", "k": 1},
        "chi": {"kind": "constant", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
        "metric": {"kind": "flat"},
        "psi": {"kind": "manufactured",
                "u_star": {"terms": [{"amp": 0.05, "fn": "cos", "axis": 0},
                                     {"amp": 0.03, "fn": "sin", "axis": 3}]}}
    }"#;
    let cfg_path = dir.join("problem.json");
    fs::write(&cfg_path, config).unwrap();
    let out = run(&["solve", "--config", cfg_path.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    let v = json_of(&out);
    let err = v["report"]["u_error_linf"].as_f64().unwrap();
    assert!(err <= 1e-6, "u error {err}");
    assert!(v["report"]["b"].as_f64().unwrap().abs() <= 1e-8);
    assert!(dir.join("u.field").exists());
    assert!(dir.join("residuals.csv").exists());
    assert!(dir.join("summary.json").exists());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn hprofile_emits_csv() {
    let dir = tmp_dir("hprofile");
    let out = run(&["hprofile", "--op", "logrho", "--k", "1", "--n", "2", "--sigma", "0",
                    "--mu", "2,2", "--radii", "5,10,20,40", "--out", dir.to_str().unwrap()]);
    let v = json_of(&out);
    assert_eq!(v["profile"].as_array().unwrap().len(), 4);
    let csv = fs::read_to_string(dir.join("h_profile.csv")).unwrap();
    assert!(csv.starts_with("r,h_mu,branch_samples"));
    assert_eq!(csv.lines().count(), 5);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn verify_flags_out_witness_with_exit_two() {
    let dir = tmp_dir("verify");
    // chi with a strongly negative eigenvalue past the asymptotic plane:
    // ubar = 0 must come back "out" and the process must exit 2
    let config = r#"{
        "dimension": 2,
        "resolution": 4,
        "operator": {"family": "log_rho_k", "k": 1},
        "chi": {"kind": "z_dependent", "base": [[5.0, 0.0], [0.0, -1.0]]},
        "metric": {"kind": "flat"},
        "psi": {"kind": "expression", "expr": {"constant": 0.0}}
    }"#;
    let cfg_path = dir.join("witness.json");
    fs::write(&cfg_path, config).unwrap();
    let out = run(&["verify", "--config", cfg_path.to_str().unwrap(), "--trials", "200",
                    "--samples", "50"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["subsolution"]["ctilde_out"].as_u64().unwrap() > 0);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn verify_passes_admissible_instance() {
    let dir = tmp_dir("verify-ok");
    let config = r#"{
        "dimension": 2,
        "resolution": 4,
        "operator": {"family": "log_rho_k", "k": 1},
        "chi": {"kind": "constant", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
        "metric": {"kind": "flat"},
        "psi": {"kind": "expression", "expr": {"constant": -0.5}}
    }"#;
    let cfg_path = dir.join("ok.json");
    fs::write(&cfg_path, config).unwrap();
    let out = run(&["verify", "--config", cfg_path.to_str().unwrap(), "--trials", "200",
                    "--samples", "50"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn missing_config_exits_one() {
    let out = run(&["solve", "--config", "/nonexistent/p.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gauduchon_command_reports_identities() {
    let dir = tmp_dir("gaud");
    let config = r#"{
        "dimension": 2,
        "resolution": 16,
        "operator": {"family": "log_rho_k", "k": 1},
        "chi": {"kind": "gauduchon", "omega0": "identity", "c": 1.0},
        "metric": {"kind": "conformal",
                   "phi": {"terms": [{"amp": 0.1, "fn": "cos", "axis": 0}]}},
        "psi": {"kind": "gauduchon_h",
                "h": {"terms": [{"amp": 0.05, "fn": "sin", "axis": 2}]}}
    }"#;
    let cfg_path = dir.join("gauduchon.json");
    fs::write(&cfg_path, config).unwrap();
    let out = run(&["gauduchon", "--config", cfg_path.to_str().unwrap(), "--samples", "16"]);
    let v = json_of(&out);
    assert!(v["gradient_slot_defect"].as_f64().unwrap() <= 1e-9);
    assert!(v["report"]["residual_linf"].as_f64().unwrap() <= 1e-8);
    let _ = fs::remove_dir_all(&dir);
}
