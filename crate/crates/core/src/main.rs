//! Command-line driver.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eigentopo::compliance::combined_optimize;
use eigentopo::config::{parse_config, RunConfig};
use eigentopo::grid::{build_dof_map, BoundaryTag, Mesh};
use eigentopo::io::{write_history, write_vtk, NodalField};
use eigentopo::opt::{projected_gradient_solve_with, OptResult, Termination};
use eigentopo::phasefield::PhaseField;
use eigentopo::verify::{laplace_validation, run_verification, LAPLACE_REL_ERR};
use eigentopo::{Error, Result};

#[derive(Parser)]
#[command(
    name = "eigentopo",
    version,
    about = "Multi-phase-field topology optimization of eigenvalue and compliance objectives"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the eigenvalue objective over the admissible phase fields.
    OptimizeEigen { config: PathBuf },
    /// Minimize the combined compliance / deviation / eigenvalue objective.
    OptimizeCombined { config: PathBuf },
    /// Run the built-in solver, derivative, and projection checks.
    Verify { config: PathBuf },
    /// Check the scalar validation operator against its analytic spectrum.
    LaplaceValidate { nx: usize },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::OptimizeEigen { config } => optimize(&config, false),
        Command::OptimizeCombined { config } => optimize(&config, true),
        Command::Verify { config } => verify(&config),
        Command::LaplaceValidate { nx } => laplace(nx),
    }
}

fn write_snapshot(dir: &Path, stem: &str, mesh: &Mesh, phi: &PhaseField) -> Result<()> {
    let nv = phi.n_vertices();
    // node-major storage: stride out one scalar column per component
    let columns: Vec<(String, Vec<f64>)> = (0..phi.n_components())
        .map(|i| {
            let values = (0..nv).map(|v| phi.node(v)[i]).collect();
            (format!("phi_{}", i + 1), values)
        })
        .collect();
    let fields: Vec<NodalField> = columns
        .iter()
        .map(|(name, values)| NodalField::Scalar(name, values))
        .collect();
    write_vtk(dir.join(format!("{stem}.vtk")), mesh, &fields)
}

fn optimize(config_path: &Path, combined: bool) -> Result<ExitCode> {
    let cfg = parse_config(config_path)?;
    let mesh = cfg.build_mesh()?;
    let mats = cfg.build_materials()?;
    let p = cfg.cutoff_params()?;
    let spec = cfg.objective_spec();
    let admissible = cfg.admissible_set(&mesh)?;
    let opts = cfg.opt_options();
    let phi0 = cfg.initial_field(&mesh, &admissible)?;
    let dofmap_d = build_dof_map(&mesh, BoundaryTag::DirichletD);

    let out_dir = PathBuf::from(&cfg.output.directory);
    std::fs::create_dir_all(&out_dir)?;
    let cadence = cfg.output.vtk_every;
    let on_iterate = |iter: usize, phi: &PhaseField| {
        if cadence > 0 && iter % cadence == 0 {
            let _ = write_snapshot(&out_dir, &format!("phi_{iter:05}"), &mesh, phi);
        }
    };

    let result: OptResult = if combined {
        let dofmap_c = build_dof_map(&mesh, BoundaryTag::DirichletC);
        let load = cfg.load_case()?;
        combined_optimize(
            &mesh, &dofmap_d, &dofmap_c, &phi0, &spec, &mats, &p, &load, &admissible, &opts,
            on_iterate,
        )?
    } else {
        projected_gradient_solve_with(
            &mesh, &dofmap_d, &phi0, &spec, &mats, &p, &admissible, &opts, on_iterate,
        )?
    };

    write_history(
        out_dir.join("history.csv"),
        &result.records,
        spec.targets.len(),
    )?;
    write_snapshot(&out_dir, "phi_final", &mesh, &result.phi)?;

    let last = result.records.last().expect("at least one iterate");
    println!(
        "{} after {} iterations: J = {:.6e}, vi residual = {:.3e}",
        match result.termination {
            Termination::Converged => "converged",
            Termination::MaxIter => "stopped at the iteration budget",
            Termination::EigenvalueDegenerated => "stopped on a degenerate target eigenvalue",
        },
        last.iter,
        last.objective,
        result.vi_residual,
    );
    if !last.lambdas.is_empty() {
        let lambdas: Vec<String> = last.lambdas.iter().map(|l| format!("{l:.6e}")).collect();
        println!("target eigenvalues: {}", lambdas.join(", "));
    }
    println!("results in {}", out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn verify(config_path: &Path) -> Result<ExitCode> {
    let cfg: RunConfig = parse_config(config_path)?;
    let reports = run_verification(&cfg)?;
    let mut all_passed = true;
    for report in &reports {
        println!("{}", report.line());
        all_passed &= report.passed;
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn laplace(nx: usize) -> Result<ExitCode> {
    if nx < 4 {
        return Err(Error::InvalidArg("laplace-validate needs nx >= 4".into()));
    }
    let report = laplace_validation(nx, 6)?;
    println!("scalar validation operator on the {nx} x {nx} unit square");
    println!("{:>4} {:>16} {:>16} {:>12}", "k", "computed", "analytic", "rel err");
    let mut worst: f64 = 0.0;
    for (i, (c, e)) in report.computed.iter().zip(&report.exact).enumerate() {
        if i == 0 {
            println!("{:>4} {:>16.9e} {:>16.9e} {:>12}", i + 1, c, e, "-");
            continue;
        }
        let rel = (c - e).abs() / e;
        worst = worst.max(rel);
        println!("{:>4} {:>16.9e} {:>16.9e} {:>12.3e}", i + 1, c, e, rel);
    }
    if report.computed[0].abs() > 1e-7 {
        println!("kernel eigenvalue came out as {:.3e}", report.computed[0]);
        return Ok(ExitCode::from(1));
    }
    if worst >= LAPLACE_REL_ERR {
        println!("worst relative error {worst:.3e} exceeds {LAPLACE_REL_ERR}");
        return Ok(ExitCode::from(1));
    }
    println!("worst relative error {worst:.3e}");
    Ok(ExitCode::SUCCESS)
}
