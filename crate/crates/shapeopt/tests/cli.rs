use std::fs;
use std::path::Path;
use std::process::Command as Process;

use shapeopt::commands::{read_json, run, Command};
use shapeopt::config::RunConfig;

fn config(dir: &Path, body: &str) -> RunConfig {
    let text = format!("output_dir = {:?}\n{body}", dir.display().to_string());
    RunConfig::from_toml(&text, None).unwrap()
}

const FAST: &str = r#"
problem = "validation"
[optimization]
mu = 1e-2
u_ref = 0
coarse_cells = [4, 4]
"#;

/// Coarsest settings that still resolve the optimal shape.
const OPTIMIZE: &str = r#"
problem = "validation"
[optimization]
mu = 1e-2
u_ref = 0
"#;

#[test]
fn unknown_keys_are_rejected() {
    let err = RunConfig::from_toml("problem = \"validation\"\n[optimization]\nmu_fes = 1e-3\n", None).unwrap_err();
    assert!(format!("{err:#}").contains("mu_fes"), "{err:#}");
    assert!(RunConfig::from_toml("problem = \"validation\"\ncolour = 1\n", None).is_err());
}

#[test]
fn problem_sections_must_match() {
    assert!(RunConfig::from_toml("problem = \"validation\"\n[cooling]\nt_max = 70.0\n", None).is_err());
    assert!(RunConfig::from_toml("problem = \"cooling\"\n[validation]\nupper = 0.3\n", None).is_err());
    assert!(RunConfig::from_toml("problem = \"validation\"\n[design]\nalpha = [0.1]\n", None).is_err());
    assert!(RunConfig::from_toml("schema = 2\nproblem = \"validation\"\n", None).is_err());
}

#[test]
fn threads_come_from_the_environment_first() {
    let text = "problem = \"validation\"\nthreads = 2\n";
    assert_eq!(RunConfig::from_toml(text, None).unwrap().threads, 2);
    assert_eq!(RunConfig::from_toml(text, Some("5")).unwrap().threads, 5);
    assert!(RunConfig::from_toml(text, Some("many")).is_err());
    assert!(RunConfig::from_toml(text, Some("0")).is_err());
}

#[test]
fn cooling_defaults_resolve() {
    let cfg = RunConfig::from_toml("problem = \"cooling\"\n", None).unwrap();
    let c = cfg.cooling.as_ref().unwrap();
    assert_eq!(c.t_max, 80.0);
    assert!((cfg.optimization.mu_feas - 8e-5).abs() < 1e-18);
    assert_eq!(cfg.gradient_check.constraints, vec![0]);
    assert_eq!(cfg.optimization.coarse_cells, [14, 7]);
}

#[test]
fn solve_on_the_flat_domain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &format!("{FAST}[design]\nalpha = [0.0, 0.0, 0.0, 0.0]\n"));
    run(Command::Solve, &cfg).unwrap();
    let mut rows = csv::Reader::from_path(dir.path().join("field_samples.csv")).unwrap();
    let header: Vec<String> = rows.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["xi", "eta", "x", "y", "det_j", "u"]);
    let mut n = 0;
    for r in rows.records() {
        let v: Vec<f64> = r.unwrap().iter().map(|s| s.parse().unwrap()).collect();
        assert!((v[0] - v[2]).abs() < 1e-8 && (v[1] - v[3]).abs() < 1e-8);
        assert!((v[4] - 1.0).abs() < 1e-8 && (v[5] - 1.0).abs() < 1e-8, "{v:?}");
        n += 1;
    }
    assert_eq!(n, 101 * 101);
    let s = read_json(&dir.path().join("solve_summary.json")).unwrap();
    assert!((s["objective"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    let m = read_json(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m["command"], "solve");
    assert_eq!(m["config"]["optimization"]["coarse_cells"][0], 4);
}

#[test]
fn check_gradient_reports_small_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &format!("{FAST}[design]\nalpha = [0.1, 0.2, 0.05, 0.3]\n"));
    run(Command::CheckGradient, &cfg).unwrap();
    let s = read_json(&dir.path().join("gradient_check.json")).unwrap();
    assert!(s["max_relative_error"].as_f64().unwrap() <= 1e-5);
    assert_eq!(s["failures"], 0);
    let rows = fs::read_to_string(dir.path().join("gradient_check.csv")).unwrap();
    assert_eq!(rows.lines().count(), 5);
}

#[test]
fn parameterize_writes_a_fold_free_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &format!("{FAST}[design]\nalpha = [0.4, 0.4, 0.4, 0.4]\n"));
    run(Command::Parameterize, &cfg).unwrap();
    let r = read_json(&dir.path().join("parameterize_report.json")).unwrap();
    assert!(r["min_det_j_samples"].as_f64().unwrap() > 0.0);
    assert!(r["egg_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn optimize_summary_is_complete_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(Command::Optimize, &config(a.path(), OPTIMIZE)).unwrap();
    run(Command::Optimize, &config(b.path(), OPTIMIZE)).unwrap();
    let s = read_json(&a.path().join("summary.json")).unwrap();
    for key in ["status", "iterations", "objective", "objective_error", "kkt", "average_geometry_dofs", "alpha"] {
        assert!(!s[key].is_null(), "missing {key}");
    }
    assert_eq!(s["alpha"].as_array().unwrap().len(), 4);
    assert_eq!(s["status"], "converged");
    assert!(s["objective_error"].as_f64().unwrap() < 0.05);
    for f in ["summary.json", "final_design.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
    let log = fs::read_to_string(a.path().join("convergence.csv")).unwrap();
    assert!(log.lines().next().unwrap().starts_with("evaluation,iteration,kind,objective"));
    assert!(log.lines().nth(1).unwrap().contains(",start,"));
}

#[test]
fn binary_reports_bad_configurations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "problem = \"validation\"\nbogus = true\n").unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_shapeopt")).args(["solve", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn binary_solves_with_an_output_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, format!("{FAST}[design]\nalpha = [0.2, 0.2, 0.2, 0.2]\n")).unwrap();
    let out_dir = dir.path().join("elsewhere");
    let out = Process::new(env!("CARGO_BIN_EXE_shapeopt"))
        .args(["solve", "--config"])
        .arg(&path)
        .arg("--output")
        .arg(&out_dir)
        .env("SHAPEOPT_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_json(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(m["threads"], 3);
    assert!(out_dir.join("field_samples.csv").exists());
}
