//! End-to-end checks of the command-line surface: exit codes, produced
//! files, and output formats.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eigentopo"))
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = eigentopo::config::example_config();
    cfg.mesh.nx = 6;
    cfg.mesh.ny = 3;
    cfg.optimizer.max_iter = 5;
    cfg.optimizer.vi_probes = 10;
    cfg.output.directory = dir.join("out").to_string_lossy().into_owned();
    let path = dir.join("run.toml");
    eigentopo::config::write_config(&path, &cfg).unwrap();
    path
}

#[test]
fn version_and_help() {
    assert!(bin().arg("--version").output().unwrap().status.success());
    assert!(bin().arg("--help").output().unwrap().status.success());
}

#[test]
fn missing_config_exits_2() {
    let out = bin()
        .args(["optimize-eigen", "/no/such/config.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let mut cfg = eigentopo::config::example_config();
    cfg.constraints.mean = vec![0.6, 0.5];
    // write_config validates nothing; serialize by hand
    std::fs::write(
        &path,
        eigentopo::config::write_config_str(&cfg).unwrap(),
    )
    .unwrap();
    let out = bin().args(["verify"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("constraints.mean"), "stderr: {err}");
}

#[test]
fn numerical_failure_exits_3() {
    // no Dirichlet boundary anywhere: the eigenvalue problem is singular
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = eigentopo::config::example_config();
    cfg.mesh.left = vec![eigentopo::config::TagName::Neumann0];
    cfg.mesh.nx = 4;
    cfg.mesh.ny = 4;
    cfg.optimizer.max_iter = 3;
    cfg.output.directory = dir.path().join("out").to_string_lossy().into_owned();
    let path = dir.path().join("singular.toml");
    eigentopo::config::write_config(&path, &cfg).unwrap();
    let out = bin().args(["optimize-eigen"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn optimize_eigen_produces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = tiny_config(dir.path());
    let out = bin().args(["optimize-eigen"]).arg(&cfg_path).output().unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out_dir = dir.path().join("out");
    let history = std::fs::read_to_string(out_dir.join("history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,J,psi,gl_energy,lambda_1,step,vi_residual"
    );
    let mut previous = f64::INFINITY;
    for line in lines {
        let j: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(j <= previous + 1e-12);
        previous = j;
    }
    let vtk = std::fs::read_to_string(out_dir.join("phi_final.vtk")).unwrap();
    assert!(vtk.contains("SCALARS phi_1 double 1"));
    assert!(vtk.contains("SCALARS phi_2 double 1"));
}

#[test]
fn optimize_combined_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = eigentopo::config::example_config();
    cfg.mesh.nx = 6;
    cfg.mesh.ny = 3;
    cfg.optimizer.max_iter = 4;
    cfg.optimizer.vi_probes = 5;
    cfg.output.directory = dir.path().join("out").to_string_lossy().into_owned();
    let path = dir.path().join("combined.toml");
    eigentopo::config::write_config(&path, &cfg).unwrap();
    let out = bin().args(["optimize-combined"]).arg(&path).output().unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn laplace_validate_reports_and_passes() {
    let out = bin().args(["laplace-validate", "16"]).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("analytic"));
    assert!(stdout.contains("worst relative error"));
}
