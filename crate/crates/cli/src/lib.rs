//! Library layer of the `fracfield` command line tool: configuration
//! parsing, report writers and the command implementations (kept in a
//! library so integration tests can drive them directly).

pub mod config;
pub mod output;

use anyhow::{Context, Result};
use config::RunConfig;
use fracfield_core::sim::{
    adaptive_loop, convergence_study, efficiency_study, run_timeline, Simulation,
};
use std::fs;
use std::path::{Path, PathBuf};

/// Exit status classes: user errors (bad config, unreadable files) map to
/// exit code 1, numerical failures to 2.
#[derive(Debug)]
pub enum AppError {
    User(String),
    Numerical(String),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::User(m) => write!(f, "{m}"),
            AppError::Numerical(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for AppError {}

pub fn load_config(path: &Path, preset: fracfield_core::sim::Preset) -> Result<RunConfig, AppError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::User(format!("cannot read {}: {e}", path.display())))?;
    config::parse_config(&path.display().to_string(), &text, preset)
        .map_err(|e| AppError::User(e.0))
}

fn numerical(e: fracfield_core::Error) -> AppError {
    AppError::Numerical(e.to_string())
}

fn io_user(e: anyhow::Error) -> AppError {
    AppError::User(format!("{e:#}"))
}

/// `run`: a single timeline (stages = 0) or the adaptive loop, with CSV and
/// optional VTK output per stage. Prints a per-stage summary table.
pub fn cmd_run(rc: &RunConfig, vtk_every: Option<usize>) -> Result<(), AppError> {
    fs::create_dir_all(&rc.out_dir)
        .with_context(|| format!("creating {}", rc.out_dir.display()))
        .map_err(io_user)?;
    println!(
        "benchmark {} eps={} tau={} steps={} stages={} theta={} estimator={} splitting={}",
        rc.cfg.benchmark.name(),
        rc.cfg.mat.eps,
        rc.cfg.tau,
        rc.cfg.steps,
        rc.cfg.stages,
        rc.cfg.theta,
        rc.cfg.estimator.name(),
        if rc.cfg.splitting { "on" } else { "off" },
    );
    println!("stage     cells     nodes     eta_phi      eta_u   peak_load");

    let write_stage = |dir: &PathBuf,
                       mesh: &fracfield_core::mesh::Mesh,
                       summaries: &[fracfield_core::sim::StepSummary]|
     -> Result<(), AppError> {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(io_user)?;
        output::write_quantities_csv(&dir.join("quantities.csv"), summaries).map_err(io_user)?;
        output::write_estimator_csv(&dir.join("estimator.csv"), summaries).map_err(io_user)?;
        let _ = mesh;
        Ok(())
    };

    let print_summary = |stage: usize,
                         mesh: &fracfield_core::mesh::Mesh,
                         nodes: usize,
                         summaries: &[fracfield_core::sim::StepSummary]| {
        let last = summaries.last();
        let (eta_phi, eta_u) = last
            .and_then(|s| s.totals)
            .map(|t| (t.eta_phi_total, t.eta_u_total))
            .unwrap_or((0.0, 0.0));
        let peak = summaries.iter().map(|s| s.quantities.load).fold(f64::MIN, f64::max);
        println!(
            "{stage:>5} {:>9} {:>9} {eta_phi:>11.4e} {eta_u:>10.4e} {peak:>11.4e}",
            mesh.n_cells(),
            nodes,
        );
    };

    if rc.cfg.stages == 0 {
        let mesh = rc.cfg.build_mesh().map_err(numerical)?;
        let summaries = if let Some(k) = vtk_every {
            run_with_vtk(rc, &mesh, &rc.out_dir, k)?
        } else {
            run_timeline(&rc.cfg, &mesh).map_err(numerical)?.summaries
        };
        write_stage(&rc.out_dir, &mesh, &summaries)?;
        print_summary(0, &mesh, mesh.n_vertices(), &summaries);
        return Ok(());
    }

    let result = adaptive_loop(&rc.cfg, None).map_err(numerical)?;
    for (stage, s) in result.stages.iter().enumerate() {
        let dir = rc.out_dir.join(format!("stage{stage}"));
        write_stage(&dir, &s.mesh, &s.summaries)?;
        print_summary(stage, &s.mesh, s.n_nodes, &s.summaries);
        if let Some(k) = vtk_every {
            // rerun this stage's timeline to produce field snapshots
            run_with_vtk(rc, &s.mesh, &dir, k)?;
        }
    }
    Ok(())
}

fn run_with_vtk(
    rc: &RunConfig,
    mesh: &fracfield_core::mesh::Mesh,
    dir: &Path,
    every: usize,
) -> Result<Vec<fracfield_core::sim::StepSummary>, AppError> {
    let every = every.max(1);
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(io_user)?;
    let mut sim = Simulation::new(&rc.cfg, mesh);
    let mut summaries = Vec::new();
    for _ in 0..rc.cfg.steps {
        let out = sim.step().map_err(numerical)?;
        let n = out.summary.n;
        if n % every == 0 || n == rc.cfg.steps {
            let fields = output::VtkFields {
                phi: Some(sim.phi()),
                u: Some(sim.u()),
                report: out.report.as_ref(),
            };
            output::write_vtk(&dir.join(format!("step_{n:05}.vtk")), mesh, &sim.dofs, &fields)
                .map_err(io_user)?;
        }
        summaries.push(out.summary);
    }
    Ok(summaries)
}

/// `study convergence`: adaptive and uniform series against a nested
/// reference solution.
pub fn cmd_study_convergence(rc: &RunConfig) -> Result<(), AppError> {
    fs::create_dir_all(&rc.out_dir)
        .with_context(|| format!("creating {}", rc.out_dir.display()))
        .map_err(io_user)?;
    let study = convergence_study(&rc.cfg, 3).map_err(numerical)?;
    output::write_convergence_csv(&rc.out_dir.join("convergence.csv"), &study).map_err(io_user)?;
    println!("series    stage    nodes    err_phi_energy    err_u_energy");
    for r in &study.rows {
        println!(
            "{:<9} {:>5} {:>8} {:>17.6e} {:>15.6e}",
            r.series, r.stage, r.nodes, r.err_phi_energy, r.err_u_energy
        );
    }
    println!("reference nodes: {}", study.reference_nodes);
    Ok(())
}

/// `study efficiency`: efficiency indices of the robust and standard
/// estimators over the `eps` list.
pub fn cmd_study_efficiency(rc: &RunConfig) -> Result<(), AppError> {
    fs::create_dir_all(&rc.out_dir)
        .with_context(|| format!("creating {}", rc.out_dir.display()))
        .map_err(io_user)?;
    let study = efficiency_study(&rc.cfg, &rc.eps_list, 3).map_err(numerical)?;
    output::write_efficiency_csv(&rc.out_dir.join("efficiency.csv"), &study).map_err(io_user)?;
    println!("eps        stage    nodes     eff_robust    eff_std");
    for r in &study.rows {
        println!(
            "{:<10} {:>5} {:>8} {:>12.4} {:>10.4}",
            r.eps, r.stage, r.nodes, r.eff_robust, r.eff_std
        );
    }
    Ok(())
}
