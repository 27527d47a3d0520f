//! Adaptive rerun loop (mark, refine, rerun from the start) and the
//! convergence and efficiency studies.

use super::{BenchmarkConfig, EstimatorMode, Simulation, StepSummary};
use crate::error::{Error, Result};
use crate::fespace::{DofSystem, FieldView, NodalField};
use crate::geom::Vec2;
use crate::mesh::{CellId, Mesh};
use crate::phasefield::{
    assemble_vi_system, classify_contact, constraining_force, estimate_phi, standard_estimator,
    VICoefficients,
};
use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

/// Desk-scale guard on the largest linear system a reference run may need.
pub const REFERENCE_DOF_LIMIT: usize = 500_000;

/// Selects the smallest node set carrying the fraction `theta^2` of the
/// total squared indicator (descending sort, prefix rule; ties broken by
/// index).
pub fn mark_dorfler(indicator: &[f64], theta: f64) -> Vec<usize> {
    let total: f64 = indicator.iter().map(|v| v * v).sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..indicator.len()).collect();
    order.sort_by(|&a, &b| {
        indicator[b].partial_cmp(&indicator[a]).unwrap().then(a.cmp(&b))
    });
    let goal = theta * theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for d in order {
        if acc >= goal {
            break;
        }
        acc += indicator[d] * indicator[d];
        marked.push(d);
    }
    marked
}

/// One stage of the adaptive loop.
pub struct StageResult {
    pub mesh: Mesh,
    pub n_nodes: usize,
    pub summaries: Vec<StepSummary>,
    /// Per-master-dof marking indicator (max over the stage's time steps).
    pub indicator: Vec<f64>,
    /// Fields captured at the study step, when requested.
    pub captured: Option<(NodalField, NodalField)>,
}

pub struct AdaptiveResult {
    pub stages: Vec<StageResult>,
}

fn stage_indicator(
    mode: EstimatorMode,
    report: &super::EstimatorReport,
    n_master: usize,
) -> Vec<f64> {
    let mut ind = vec![0.0; n_master];
    match mode {
        EstimatorMode::PhiOnly => {
            for d in 0..n_master {
                ind[d] = report.phi.node_composite(d);
            }
        }
        EstimatorMode::PhiPlusU => {
            let tot_phi = report.phi.total.max(1e-300);
            let tot_u: f64 = report.u.total().max(1e-300);
            for d in 0..n_master {
                ind[d] =
                    report.phi.node_composite(d) / tot_phi + report.u.node_composite(d) / tot_u;
            }
        }
        EstimatorMode::StandardNonrobust => {
            // the standard estimator shares the per-node structure; fall
            // back to the robust composite which is what the run recorded
            for d in 0..n_master {
                ind[d] = report.phi.node_composite(d);
            }
        }
    }
    ind
}

/// Runs the full adaptive loop: each stage reruns the timeline from `t = 0`
/// on its mesh, accumulates the per-node indicator as the maximum over the
/// stage's steps, marks nodes by the bulk criterion and refines every cell
/// of the marked nodes' patches.
pub fn adaptive_loop(cfg: &BenchmarkConfig, capture_step: Option<usize>) -> Result<AdaptiveResult> {
    let mut mesh = cfg.build_mesh()?;
    let mut stages = Vec::with_capacity(cfg.stages + 1);
    for stage in 0..=cfg.stages {
        let mut sim = Simulation::new(cfg, &mesh);
        let n_master = sim.dofs.n_master;
        let mut indicator = vec![0.0f64; n_master];
        let mut summaries = Vec::with_capacity(cfg.steps);
        let mut captured = None;
        for _ in 0..cfg.steps {
            let out = sim.step()?;
            if let Some(report) = &out.report {
                let step_ind = stage_indicator(cfg.estimator, report, n_master);
                for d in 0..n_master {
                    indicator[d] = indicator[d].max(step_ind[d]);
                }
            }
            if capture_step == Some(out.summary.n) {
                captured = Some((sim.phi().clone(), sim.u().clone()));
            }
            summaries.push(out.summary);
        }
        let next_mesh = if stage < cfg.stages {
            let marked_nodes = mark_dorfler(&indicator, cfg.theta);
            let mut cells: BTreeSet<CellId> = BTreeSet::new();
            for &d in &marked_nodes {
                let v = sim.dofs.vertex_of_dof[d];
                let patch = sim.patches[v].as_ref().expect("missing patch");
                cells.extend(patch.cells.iter().copied());
            }
            Some(mesh.refine(&cells))
        } else {
            None
        };
        stages.push(StageResult { mesh: mesh.clone(), n_nodes: n_master, summaries, indicator, captured });
        if let Some(m) = next_mesh {
            mesh = m;
        }
    }
    Ok(AdaptiveResult { stages })
}

/// Energy norm of the displacement error
/// `sqrt(int g(phi_m) sigma(du) : E(du))` on the fine (reference) mesh.
#[allow(clippy::too_many_arguments)]
pub fn u_energy_error(
    fine_mesh: &Mesh,
    fine_dofs: &DofSystem,
    u_ref: &NodalField,
    coarse_mesh: &Mesh,
    coarse_dofs: &DofSystem,
    u_m: &NodalField,
    phi_m: &NodalField,
    mat: &crate::elasticity::MaterialParams,
) -> Result<f64> {
    if !fine_mesh.is_refinement_of(coarse_mesh) {
        return Err(Error::MeshesNotNested);
    }
    let fine = FieldView::new(fine_mesh, fine_dofs, u_ref);
    let coarse = FieldView::new(coarse_mesh, coarse_dofs, u_m);
    let phi_view = FieldView::new(coarse_mesh, coarse_dofs, phi_m);
    let total = crate::fespace::integrate_nested(fine_mesh, coarse_mesh, 3, |fc, cc, p, w| {
        let (xf, yf) = fine_mesh.local_coords(fc, p);
        let (xc, yc) = coarse_mesh.local_coords(cc, p);
        let (xc, yc) = (xc.clamp(0.0, 1.0), yc.clamp(0.0, 1.0));
        let ef = crate::elasticity::strain_at(&fine, fine_mesh, fc, xf, yf);
        let ec = crate::elasticity::strain_at(&coarse, coarse_mesh, cc, xc, yc);
        let de = ef - ec;
        let g = mat.degradation(phi_view.value(coarse_mesh, cc, xc, yc, 0));
        g * crate::elasticity::stress_unsplit(de, mat).ddot(de) * w
    });
    Ok(crate::float::sqrt(total.max(0.0)))
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub series: &'static str,
    pub stage: usize,
    pub nodes: usize,
    pub err_phi_energy: f64,
    pub err_u_energy: f64,
}

pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub reference_nodes: usize,
}

/// Builds the reference configuration/mesh shared by the studies: the
/// uniform refinement of the start mesh deep enough to nest every compared
/// mesh, with `extra >= 3` additional levels.
fn reference_mesh(cfg: &BenchmarkConfig, extra: usize) -> Result<Mesh> {
    let start = cfg.build_mesh()?;
    let mesh = start.refine_uniform(cfg.stages + extra);
    let dofs_estimate = 2 * mesh.n_vertices();
    if dofs_estimate > REFERENCE_DOF_LIMIT {
        return Err(Error::ReferenceTooLarge { dofs: dofs_estimate, limit: REFERENCE_DOF_LIMIT });
    }
    Ok(mesh)
}

/// Adaptive-versus-uniform convergence of the energy-norm errors at the
/// study snapshot, against a reference solution at least `extra` uniform
/// refinements finer than every compared mesh.
pub fn convergence_study(cfg: &BenchmarkConfig, extra: usize) -> Result<ConvergenceStudy> {
    assert!(extra >= 3, "reference must be at least three refinements finer");
    let k = cfg.study_step();
    let ref_mesh = reference_mesh(cfg, extra)?;
    let ref_dofs = DofSystem::new(&ref_mesh);
    let (phi_ref, u_ref) = super::run_to_step(cfg, &ref_mesh, k)?;
    let ref_coeffs = VICoefficients::new(
        &ref_mesh,
        &ref_dofs,
        &u_ref,
        vec![1.0; ref_dofs.n_master],
        cfg.mat,
        cfg.splitting,
    );

    let mut rows = Vec::new();
    let mut push_row = |series: &'static str,
                        stage: usize,
                        mesh: &Mesh,
                        phi_m: &NodalField,
                        u_m: &NodalField|
     -> Result<()> {
        let dofs = DofSystem::new(mesh);
        let err_phi = crate::phasefield::energy_norm_difference(
            &ref_mesh, &ref_dofs, &phi_ref, mesh, &dofs, phi_m, &ref_coeffs,
        )?;
        let err_u = u_energy_error(
            &ref_mesh, &ref_dofs, &u_ref, mesh, &dofs, u_m, phi_m, &cfg.mat,
        )?;
        rows.push(ConvergenceRow {
            series,
            stage,
            nodes: dofs.n_master,
            err_phi_energy: err_phi,
            err_u_energy: err_u,
        });
        Ok(())
    };

    // adaptive series
    let adaptive = adaptive_loop(cfg, Some(k))?;
    for (stage, s) in adaptive.stages.iter().enumerate() {
        let (phi_m, u_m) = s.captured.as_ref().expect("capture step outside timeline");
        push_row("adaptive", stage, &s.mesh, phi_m, u_m)?;
    }
    // uniform series
    let start = cfg.build_mesh()?;
    for stage in 0..=cfg.stages {
        let mesh = start.refine_uniform(stage);
        let (phi_m, u_m) = super::run_to_step(cfg, &mesh, k)?;
        push_row("uniform", stage, &mesh, &phi_m, &u_m)?;
    }
    Ok(ConvergenceStudy { rows, reference_nodes: ref_dofs.n_master })
}

#[derive(Debug, Clone)]
pub struct EfficiencyRow {
    pub eps: f64,
    pub stage: usize,
    pub nodes: usize,
    pub eta_phi: f64,
    pub err_phi_energy: f64,
    /// `eta_phi / err_phi_energy`; infinite when the error vanishes.
    pub eff_robust: f64,
    pub eta_std: f64,
    pub err_phi_h1: f64,
    pub eff_std: f64,
}

pub struct EfficiencyStudy {
    pub rows: Vec<EfficiencyRow>,
}

/// Efficiency indices of the robust and the standard estimator over a
/// uniform mesh series, for each requested length scale. The meshes are
/// identical across `eps` so indices are comparable at the finest common
/// mesh.
pub fn efficiency_study(
    cfg: &BenchmarkConfig,
    eps_list: &[f64],
    extra: usize,
) -> Result<EfficiencyStudy> {
    assert!(extra >= 3);
    let mut rows = Vec::new();
    for &eps in eps_list {
        let mut cfg_eps = cfg.clone();
        cfg_eps.mat.eps = eps;
        let k = cfg_eps.study_step();
        let ref_mesh = reference_mesh(&cfg_eps, extra)?;
        let ref_dofs = DofSystem::new(&ref_mesh);
        let (phi_ref, u_ref) = super::run_to_step(&cfg_eps, &ref_mesh, k)?;
        let ref_coeffs = VICoefficients::new(
            &ref_mesh,
            &ref_dofs,
            &u_ref,
            vec![1.0; ref_dofs.n_master],
            cfg_eps.mat,
            cfg_eps.splitting,
        );

        let start = cfg_eps.build_mesh()?;
        for stage in 0..=cfg_eps.stages {
            let mesh = start.refine_uniform(stage);
            let dofs = DofSystem::new(&mesh);
            let patches = mesh.all_patches();
            let mut sim = Simulation::new(&cfg_eps, &mesh);
            sim.with_estimators = false;
            for _ in 0..k - 1 {
                sim.step()?;
            }
            // the obstacle of step k is the phase field after step k-1
            let obstacle = sim.phi().values.clone();
            sim.step()?;
            let phi_m = sim.phi().clone();
            let u_m = sim.u().clone();
            let coeffs = VICoefficients::new(&mesh, &dofs, &u_m, obstacle, cfg_eps.mat, cfg_eps.splitting);
            let system = assemble_vi_system(&mesh, &dofs, &coeffs)?;
            let class = classify_contact(&mesh, &dofs, &patches, &phi_m, &coeffs);
            let force = constraining_force(&mesh, &dofs, &patches, &phi_m, &coeffs, &system)?;
            let est = estimate_phi(&mesh, &dofs, &patches, &phi_m, &coeffs, &class, &force)?;
            let std_est =
                standard_estimator(&mesh, &dofs, &patches, &phi_m, &coeffs, &class, &force)?;

            let err_eps = crate::phasefield::energy_norm_difference(
                &ref_mesh, &ref_dofs, &phi_ref, &mesh, &dofs, &phi_m, &ref_coeffs,
            )?;
            let err_h1 = crate::oracle::reference_error(
                &ref_mesh,
                &ref_dofs,
                &phi_ref,
                &mesh,
                &dofs,
                &phi_m,
                3,
                &|_: CellId, _: Vec2| (1.0, 1.0),
            )?;
            let guard = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::INFINITY };
            rows.push(EfficiencyRow {
                eps,
                stage,
                nodes: dofs.n_master,
                eta_phi: est.total,
                err_phi_energy: err_eps,
                eff_robust: guard(est.total, err_eps),
                eta_std: std_est.total,
                err_phi_h1: err_h1,
                eff_std: guard(std_est.total, err_h1),
            });
        }
    }
    Ok(EfficiencyStudy { rows })
}
