//! Quasi-static time stepping for the three benchmarks, with adaptive
//! rerun loops and the convergence/efficiency studies.

mod adaptive;

pub use adaptive::{
    adaptive_loop, convergence_study, efficiency_study, mark_dorfler, u_energy_error,
    AdaptiveResult, ConvergenceRow, ConvergenceStudy, EfficiencyRow, EfficiencyStudy,
    StageResult,
};

use crate::elasticity::{
    estimate_u, strain_at, stress_split, stress_unsplit, MaterialParams,
    UEstimate,
};
use crate::error::Result;
use crate::fespace::{DofSystem, FieldView, NodalField};
use crate::geom::Vec2;
use crate::mesh::{build_initial_mesh, BoundaryTag, Domain, Mesh, Patch, SideId};
use crate::phasefield::{
    assemble_vi_system, classify_contact, constraining_force, estimate_phi, Classification,
    ConstrainingForce, PhiEstimate, VICoefficients, VISolution,
};
use crate::quadrature::CellRule;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Tension,
    Shear,
    LShape,
}

impl Benchmark {
    pub fn parse(name: &str) -> Result<Benchmark> {
        match name {
            "tension" => Ok(Benchmark::Tension),
            "shear" => Ok(Benchmark::Shear),
            "lshape" => Ok(Benchmark::LShape),
            other => Err(crate::error::Error::UnknownDomain(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Tension => "tension",
            Benchmark::Shear => "shear",
            Benchmark::LShape => "lshape",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Benchmark::Tension | Benchmark::Shear => Domain::UnitSquare,
            Benchmark::LShape => Domain::LShape,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMode {
    /// Mark by the robust phase-field estimator alone.
    PhiOnly,
    /// Normalize the phase-field and displacement estimators and add them.
    PhiPlusU,
    /// Mark by the non-robust (plain mesh-size weighted) estimator.
    StandardNonrobust,
}

impl EstimatorMode {
    pub fn parse(name: &str) -> Result<EstimatorMode> {
        match name {
            "phi-only" => Ok(EstimatorMode::PhiOnly),
            "phi-plus-u" => Ok(EstimatorMode::PhiPlusU),
            "standard-nonrobust" => Ok(EstimatorMode::StandardNonrobust),
            other => Err(crate::error::Error::UnknownDomain(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorMode::PhiOnly => "phi-only",
            EstimatorMode::PhiPlusU => "phi-plus-u",
            EstimatorMode::StandardNonrobust => "standard-nonrobust",
        }
    }
}

/// Step-count scaling: `Paper` reproduces the full experiment protocol,
/// `Desk` multiplies the step size by five for affordable reruns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

/// Full description of a benchmark run.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub benchmark: Benchmark,
    pub mat: MaterialParams,
    /// Time step size in s.
    pub tau: f64,
    pub steps: usize,
    /// Start-mesh cell diameter in mm.
    pub h0: f64,
    /// Adaptive refinement stages.
    pub stages: usize,
    /// Bulk-marking fraction.
    pub theta: f64,
    pub estimator: EstimatorMode,
    pub splitting: bool,
}

impl BenchmarkConfig {
    /// Benchmark defaults; `eps` is the phase-field length scale in mm.
    pub fn preset(benchmark: Benchmark, preset: Preset, eps: f64) -> BenchmarkConfig {
        let (mu, lambda, g_c) = match benchmark {
            Benchmark::Tension | Benchmark::Shear => (80.77, 121.15, 2.7e-3),
            Benchmark::LShape => (10.95, 6.16, 8.9e-5),
        };
        let mat = MaterialParams { mu, lambda, g_c, kappa: 1e-8, eps };
        let (tau, steps, h0, stages, splitting) = match (benchmark, preset) {
            (Benchmark::Tension, Preset::Paper) => (1e-5, 330, 0.044, 6, false),
            (Benchmark::Tension, Preset::Desk) => (5e-5, 74, 0.0884, 3, false),
            (Benchmark::Shear, Preset::Paper) => (1e-4, 180, 0.044, 5, true),
            (Benchmark::Shear, Preset::Desk) => (5e-4, 36, 0.0884, 3, true),
            (Benchmark::LShape, Preset::Paper) => (1e-3, 300, 17.67, 5, true),
            (Benchmark::LShape, Preset::Desk) => (5e-3, 60, 35.36, 3, true),
        };
        BenchmarkConfig {
            benchmark,
            mat,
            tau,
            steps,
            h0,
            stages,
            theta: 0.5,
            estimator: EstimatorMode::PhiOnly,
            splitting,
        }
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        build_initial_mesh(self.benchmark.domain(), self.h0)
    }

    /// Physical time of the benchmark study snapshots (fixed per
    /// benchmark, independent of the configured step size).
    pub fn study_time(&self) -> f64 {
        match self.benchmark {
            Benchmark::Tension => 280.0 * 1e-5,
            Benchmark::Shear => 107.0 * 1e-4,
            Benchmark::LShape => 200.0 * 1e-3,
        }
    }

    /// Step index of the study snapshot under this configuration's step
    /// size.
    pub fn study_step(&self) -> usize {
        let k = (self.study_time() / self.tau + 0.5) as usize;
        k.clamp(1, self.steps)
    }
}

const GEOM_TOL: f64 = 1e-9;

/// Per-component Dirichlet membership of a boundary point.
fn dirichlet_mask_at(benchmark: Benchmark, p: Vec2, side: f64) -> [bool; 2] {
    let tol = GEOM_TOL * side;
    match benchmark {
        Benchmark::Tension => {
            if p.y.abs() < tol || (p.y - 1.0).abs() < tol {
                [true, true]
            } else {
                [false, false]
            }
        }
        Benchmark::Shear => {
            let top_or_bottom = p.y.abs() < tol || (p.y - 1.0).abs() < tol;
            // y is clamped on the whole boundary; x only top and bottom
            [top_or_bottom, true]
        }
        Benchmark::LShape => {
            if p.y.abs() < tol {
                [true, true]
            } else if (p.y - 250.0).abs() < tol && p.x >= 470.0 - tol {
                [false, true]
            } else {
                [false, false]
            }
        }
    }
}

/// Prescribed boundary displacement at load time `t`.
fn dirichlet_value_at(benchmark: Benchmark, p: Vec2, side: f64, t: f64) -> [f64; 2] {
    let tol = GEOM_TOL * side;
    match benchmark {
        Benchmark::Tension => {
            if (p.y - 1.0).abs() < tol {
                [0.0, 2.0 * t]
            } else {
                [0.0, 0.0]
            }
        }
        Benchmark::Shear => {
            if (p.y - 1.0).abs() < tol {
                [-t, 0.0]
            } else {
                [0.0, 0.0]
            }
        }
        Benchmark::LShape => {
            if (p.y - 250.0).abs() < tol && p.x >= 470.0 - tol {
                [0.0, t]
            } else {
                [0.0, 0.0]
            }
        }
    }
}

/// Dirichlet pairs `(system dof, value)` for the displacement solve.
pub fn dirichlet_values(
    benchmark: Benchmark,
    mesh: &Mesh,
    dofs: &DofSystem,
    t: f64,
) -> Vec<(usize, f64)> {
    let side = benchmark.domain().side();
    let mut out = Vec::new();
    for d in 0..dofs.n_master {
        let v = dofs.vertex_of_dof[d];
        if !mesh.vertices[v].on_boundary {
            continue;
        }
        let p = mesh.vertices[v].pos;
        let mask = dirichlet_mask_at(benchmark, p, side);
        if mask[0] || mask[1] {
            let val = dirichlet_value_at(benchmark, p, side, t);
            for c in 0..2 {
                if mask[c] {
                    out.push((2 * d + c, val[c]));
                }
            }
        }
    }
    out
}

/// Per-component Neumann mask of a boundary side: a component is natural
/// unless both endpoints carry Dirichlet data for it.
pub fn neumann_side_mask(benchmark: Benchmark, mesh: &Mesh, sid: SideId) -> [bool; 2] {
    let side = &mesh.sides[sid];
    if !side.is_boundary() {
        return [false, false];
    }
    let s = benchmark.domain().side();
    let ma = dirichlet_mask_at(benchmark, mesh.vertices[side.a].pos, s);
    let mb = dirichlet_mask_at(benchmark, mesh.vertices[side.b].pos, s);
    [!(ma[0] && mb[0]), !(ma[1] && mb[1])]
}

/// The initial phase field: 1 everywhere except on the benchmark's slit
/// line, where it vanishes (tension: `y = 0.5, x >= 0.25`; shear:
/// `y = 0.5, x >= 0.5`; the L-shape panel has no slit).
pub fn initial_phase_field(benchmark: Benchmark, mesh: &Mesh, dofs: &DofSystem) -> NodalField {
    let side = benchmark.domain().side();
    let tol = GEOM_TOL * side;
    let slit_x0 = match benchmark {
        Benchmark::Tension => Some(0.25),
        Benchmark::Shear => Some(0.5),
        Benchmark::LShape => None,
    };
    NodalField::from_fn(mesh, dofs, 1, |p, _| match slit_x0 {
        Some(x0) if (p.y - 0.5).abs() < tol && p.x >= x0 - tol => 0.0,
        _ => 1.0,
    })
}

/// Scalar quantities of interest of one converged step.
#[derive(Debug, Clone, Copy)]
pub struct StepQuantities {
    pub crack_energy: f64,
    pub bulk_energy: f64,
    /// Resultant boundary force in the direction of the applied
    /// displacement.
    pub load: f64,
}

/// Crack and bulk energy plus the load resultant on the driven boundary.
pub fn quantities(
    cfg: &BenchmarkConfig,
    mesh: &Mesh,
    dofs: &DofSystem,
    u: &NodalField,
    phi: &NodalField,
) -> StepQuantities {
    quantities_with_order(cfg, mesh, dofs, u, phi, 4)
}

/// [`quantities`] at an explicit quadrature order (the default is exact for
/// unsplit runs; higher orders serve as a recomputation cross-check).
pub fn quantities_with_order(
    cfg: &BenchmarkConfig,
    mesh: &Mesh,
    dofs: &DofSystem,
    u: &NodalField,
    phi: &NodalField,
    order: usize,
) -> StepQuantities {
    let mat = &cfg.mat;
    let u_view = FieldView::new(mesh, dofs, u);
    let phi_view = FieldView::new(mesh, dofs, phi);
    let rule = CellRule::tensor(order);
    let mut crack = 0.0;
    let mut bulk = 0.0;
    for cell in 0..mesh.n_cells() {
        let area = mesh.cells[cell].area();
        for &(xi, eta, w) in &rule.points {
            let phi_v = phi_view.value(mesh, cell, xi, eta, 0);
            let phi_g = phi_view.grad(mesh, cell, xi, eta, 0);
            crack += 0.5
                * mat.g_c
                * ((1.0 - phi_v) * (1.0 - phi_v) / mat.eps + mat.eps * phi_g.dot(phi_g))
                * w
                * area;
            let e = strain_at(&u_view, mesh, cell, xi, eta);
            let g = mat.degradation(phi_v);
            bulk += if cfg.splitting {
                let p = stress_split(e, mat);
                (0.5 * g * p.plus_contract_e + 0.5 * p.minus.ddot(e)) * w * area
            } else {
                0.5 * g * stress_unsplit(e, mat).ddot(e) * w * area
            };
        }
    }

    // load: integrate the boundary traction over the driven segment
    let side_len = cfg.benchmark.domain().side();
    let tol = GEOM_TOL * side_len;
    let (dir, on_segment): (Vec2, alloc::boxed::Box<dyn Fn(Vec2) -> bool>) = match cfg.benchmark {
        Benchmark::Tension => (
            Vec2::new(0.0, 1.0),
            alloc::boxed::Box::new(move |p: Vec2| (p.y - 1.0).abs() < tol),
        ),
        Benchmark::Shear => (
            Vec2::new(-1.0, 0.0),
            alloc::boxed::Box::new(move |p: Vec2| (p.y - 1.0).abs() < tol),
        ),
        Benchmark::LShape => (
            Vec2::new(0.0, 1.0),
            alloc::boxed::Box::new(move |p: Vec2| {
                (p.y - 250.0).abs() < tol && p.x >= 470.0 - tol
            }),
        ),
    };
    let srule = crate::quadrature::gauss_01(order);
    let mut load = 0.0;
    for sid in 0..mesh.sides.len() {
        let side = &mesh.sides[sid];
        if !side.is_boundary() || !on_segment(side.midpoint(mesh)) {
            continue;
        }
        let cell = side.boundary_cell();
        let n = side.outward_normal();
        let (pa, pb) = (mesh.vertices[side.a].pos, mesh.vertices[side.b].pos);
        for &(t, w) in &srule {
            let p = Vec2::new(pa.x + t * (pb.x - pa.x), pa.y + t * (pb.y - pa.y));
            let (xi, eta) = {
                let (a, b) = mesh.local_coords(cell, p);
                (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0))
            };
            let e = strain_at(&u_view, mesh, cell, xi, eta);
            let g = mat.degradation(phi_view.value(mesh, cell, xi, eta, 0));
            let traction = if cfg.splitting {
                let pr = stress_split(e, mat);
                (pr.plus.scale(g) + pr.minus).apply(n)
            } else {
                stress_unsplit(e, mat).scale(g).apply(n)
            };
            load += traction.dot(dir) * w * side.length;
        }
    }
    StepQuantities { crack_energy: crack, bulk_energy: bulk, load }
}

/// Scalar estimator summary of one step.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorTotals {
    pub eta: [f64; 4],
    pub eta_u: [f64; 3],
    pub eta_phi_total: f64,
    pub eta_u_total: f64,
    pub n_semi: usize,
    pub n_full: usize,
}

/// Everything the estimators produce for one step.
#[derive(Debug, Clone)]
pub struct EstimatorReport {
    pub phi: PhiEstimate,
    pub u: UEstimate,
    pub classification: Classification,
    pub force: ConstrainingForce,
}

impl EstimatorReport {
    pub fn totals(&self) -> EstimatorTotals {
        EstimatorTotals {
            eta: self.phi.eta,
            eta_u: self.u.totals,
            eta_phi_total: self.phi.total,
            eta_u_total: self.u.total(),
            n_semi: self.classification.n_semi,
            n_full: self.classification.n_full,
        }
    }
}

/// Scalar summary of one time step.
#[derive(Debug, Clone, Copy)]
pub struct StepSummary {
    pub n: usize,
    pub t: f64,
    pub quantities: StepQuantities,
    pub totals: Option<EstimatorTotals>,
}

/// One benchmark timeline on a fixed mesh. Construct once, call
/// [`Simulation::step`] until done; current fields are available through
/// accessors between steps.
pub struct Simulation<'m> {
    pub cfg: BenchmarkConfig,
    pub mesh: &'m Mesh,
    pub dofs: DofSystem,
    pub patches: Vec<Option<Patch>>,
    /// Compute the per-step estimators (skippable for reference runs).
    pub with_estimators: bool,
    n: usize,
    phi: NodalField,
    u: NodalField,
    active: Vec<bool>,
    u_solver: Option<crate::fespace::PinnedSolver>,
    phi_solver: Option<crate::fespace::PinnedSolver>,
}

/// Borrowed view of the step results.
pub struct StepOutput {
    pub summary: StepSummary,
    pub report: Option<EstimatorReport>,
    /// Largest violation of `min(o - phi, lambda) = 0` over the nodes.
    pub complementarity_residual: f64,
}

impl<'m> Simulation<'m> {
    pub fn new(cfg: &BenchmarkConfig, mesh: &'m Mesh) -> Simulation<'m> {
        cfg.mat.validate();
        let dofs = DofSystem::new(mesh);
        let patches = mesh.all_patches();
        let phi = initial_phase_field(cfg.benchmark, mesh, &dofs);
        let u = NodalField::zeros(&dofs, 2);
        let active = vec![false; dofs.n_master];
        Simulation {
            cfg: cfg.clone(),
            mesh,
            dofs,
            patches,
            with_estimators: true,
            n: 0,
            phi,
            u,
            active,
            u_solver: None,
            phi_solver: None,
        }
    }

    pub fn step_index(&self) -> usize {
        self.n
    }

    /// Current phase field (after `n` steps).
    pub fn phi(&self) -> &NodalField {
        &self.phi
    }

    pub fn u(&self) -> &NodalField {
        &self.u
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Advances one time step: the displacement solve with the previous
    /// phase field, then the obstacle solve with irreversibility.
    pub fn step(&mut self) -> Result<StepOutput> {
        let n = self.n + 1;
        let t = n as f64 * self.cfg.tau;
        let step_err = |e: crate::error::Error| e.at_step(n);

        let bc = dirichlet_values(self.cfg.benchmark, self.mesh, &self.dofs, t);
        let phi_prev = self.phi.clone();
        let u = crate::elasticity::solve_displacement_cached(
            self.mesh,
            &self.dofs,
            &phi_prev,
            &bc,
            &self.cfg.mat,
            self.cfg.splitting,
            Some(&self.u),
            &mut self.u_solver,
        )
        .map_err(step_err)?;

        let obstacle = phi_prev.values.clone();
        let coeffs = VICoefficients::new(
            self.mesh,
            &self.dofs,
            &u,
            obstacle,
            self.cfg.mat,
            self.cfg.splitting,
        );
        let system = assemble_vi_system(self.mesh, &self.dofs, &coeffs).map_err(step_err)?;
        let sol: VISolution = crate::phasefield::solve_vi_cached(
            self.mesh,
            &self.dofs,
            &coeffs,
            &system,
            Some(&self.active),
            &mut self.phi_solver,
        )
        .map_err(step_err)?;

        let report = if self.with_estimators {
            let classification =
                classify_contact(self.mesh, &self.dofs, &self.patches, &sol.phi, &coeffs);
            let force =
                constraining_force(self.mesh, &self.dofs, &self.patches, &sol.phi, &coeffs, &system)
                    .map_err(step_err)?;
            let phi_est = estimate_phi(
                self.mesh,
                &self.dofs,
                &self.patches,
                &sol.phi,
                &coeffs,
                &classification,
                &force,
            )
            .map_err(step_err)?;
            let bench = self.cfg.benchmark;
            let u_est = estimate_u(
                self.mesh,
                &self.dofs,
                &self.patches,
                &u,
                &phi_prev,
                &self.cfg.mat,
                &move |m: &Mesh, s: SideId| neumann_side_mask(bench, m, s),
            );
            Some(EstimatorReport { phi: phi_est, u: u_est, classification, force })
        } else {
            None
        };

        debug_assert!(
            sol.phi
                .values
                .iter()
                .zip(&phi_prev.values)
                .all(|(now, prev)| *now <= prev + 1e-12),
            "irreversibility violated at step {n}"
        );
        let complementarity_residual = sol.complementarity_residual(&coeffs.obstacle);
        self.n = n;
        self.u = u;
        self.phi = sol.phi;
        self.active = sol.active;

        // reference runs (estimators off) only need the fields
        let q = if self.with_estimators {
            quantities(&self.cfg, self.mesh, &self.dofs, &self.u, &self.phi)
        } else {
            StepQuantities { crack_energy: 0.0, bulk_energy: 0.0, load: 0.0 }
        };
        let summary =
            StepSummary { n, t, quantities: q, totals: report.as_ref().map(|r| r.totals()) };
        Ok(StepOutput { summary, report, complementarity_residual })
    }
}

/// Result of a full fixed-mesh timeline.
pub struct TimelineResult {
    pub summaries: Vec<StepSummary>,
    pub final_phi: NodalField,
    pub final_u: NodalField,
}

/// Runs the configured number of steps on a fixed mesh.
pub fn run_timeline(cfg: &BenchmarkConfig, mesh: &Mesh) -> Result<TimelineResult> {
    let mut sim = Simulation::new(cfg, mesh);
    let mut summaries = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let out = sim.step()?;
        summaries.push(out.summary);
    }
    Ok(TimelineResult { summaries, final_phi: sim.phi, final_u: sim.u })
}

/// Runs a timeline up to `capture_at` and returns the fields there
/// (estimators skipped; used for reference solutions).
pub fn run_to_step(
    cfg: &BenchmarkConfig,
    mesh: &Mesh,
    capture_at: usize,
) -> Result<(NodalField, NodalField)> {
    let mut sim = Simulation::new(cfg, mesh);
    sim.with_estimators = false;
    for _ in 0..capture_at {
        sim.step()?;
    }
    Ok((sim.phi.clone(), sim.u.clone()))
}

/// Boundary tag helper re-exported for the VTK writer.
pub fn boundary_tag_name(tag: BoundaryTag) -> &'static str {
    match tag {
        BoundaryTag::Bottom => "bottom",
        BoundaryTag::Top => "top",
        BoundaryTag::Left => "left",
        BoundaryTag::Right => "right",
        BoundaryTag::InnerHorizontal => "inner-horizontal",
        BoundaryTag::InnerVertical => "inner-vertical",
    }
}

#[cfg(test)]
mod tests;
