use super::*;
use crate::mesh::build_initial_mesh;

fn desk(benchmark: Benchmark, eps: f64) -> BenchmarkConfig {
    BenchmarkConfig::preset(benchmark, Preset::Desk, eps)
}

#[test]
fn slit_node_count_on_tension_start_mesh() {
    let cfg = BenchmarkConfig::preset(Benchmark::Tension, Preset::Paper, 0.088);
    let mesh = cfg.build_mesh().unwrap();
    assert_eq!(mesh.n_cells(), 32 * 32);
    let dofs = DofSystem::new(&mesh);
    let phi0 = initial_phase_field(Benchmark::Tension, &mesh, &dofs);
    let slit = phi0.values.iter().filter(|&&v| v == 0.0).count();
    // gridline y = 0.5, x in [0.25, 1]: 25 nodes on the 32x32 mesh
    assert_eq!(slit, 25);
    assert!(phi0.values.iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn lshape_has_no_slit() {
    let cfg = BenchmarkConfig::preset(Benchmark::LShape, Preset::Desk, 20.0);
    let mesh = cfg.build_mesh().unwrap();
    let dofs = DofSystem::new(&mesh);
    let phi0 = initial_phase_field(Benchmark::LShape, &mesh, &dofs);
    assert!(phi0.values.iter().all(|&v| v == 1.0));
}

#[test]
fn shear_slit_on_degenerate_coarse_mesh() {
    let mesh = build_initial_mesh(Domain::UnitSquare, 0.71).unwrap();
    assert_eq!(mesh.n_cells(), 4);
    let dofs = DofSystem::new(&mesh);
    let phi0 = initial_phase_field(Benchmark::Shear, &mesh, &dofs);
    // only the nodes (0.5, 0.5) and (1, 0.5) lie on the slit
    let slit = phi0.values.iter().filter(|&&v| v == 0.0).count();
    assert_eq!(slit, 2);
}

#[test]
fn zero_boundary_motion_keeps_state() {
    // tau = 0: Dirichlet data stays zero and u = 0. The first step replaces
    // the sharp initial slit by the regularized layer (the obstacle problem
    // equilibrium); from then on the phase field and energies are constant.
    let mut cfg = desk(Benchmark::Tension, 0.088);
    cfg.tau = 0.0;
    cfg.steps = 3;
    let mesh = cfg.build_mesh().unwrap();
    let mut sim = Simulation::new(&cfg, &mesh);
    let mut crack_energies = alloc::vec::Vec::new();
    let mut phi_after_first = None;
    for _ in 0..3 {
        let out = sim.step().unwrap();
        assert!(out.summary.quantities.bulk_energy.abs() < 1e-14);
        assert!(out.summary.quantities.load.abs() < 1e-14);
        crack_energies.push(out.summary.quantities.crack_energy);
        if phi_after_first.is_none() {
            phi_after_first = Some(sim.phi().clone());
        }
    }
    assert!(sim.u().values.iter().all(|v| v.abs() < 1e-12));
    for (a, b) in sim.phi().values.iter().zip(&phi_after_first.unwrap().values) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!((crack_energies[1] - crack_energies[0]).abs() < 1e-12);
    assert!((crack_energies[2] - crack_energies[1]).abs() < 1e-12);
}

#[test]
fn quantities_closed_forms() {
    let cfg = desk(Benchmark::Tension, 0.088);
    let mesh = cfg.build_mesh().unwrap();
    let dofs = DofSystem::new(&mesh);

    // u = 0, phi = 1: everything vanishes
    let u = NodalField::zeros(&dofs, 2);
    let one = NodalField::constant(&dofs, 1, 1.0);
    let q = quantities(&cfg, &mesh, &dofs, &u, &one);
    assert_eq!(q.bulk_energy, 0.0);
    // partition-of-unity round-off leaves (1 - phi) ~ 1e-16 at quadrature
    // points even for the constant field
    assert!(q.crack_energy.abs() < 1e-20);
    assert_eq!(q.load, 0.0);

    // u = 0, phi = 0 on the unit square: crack energy Gc/(2 eps)
    let zero = NodalField::constant(&dofs, 1, 0.0);
    let q = quantities(&cfg, &mesh, &dofs, &u, &zero);
    let want = cfg.mat.g_c / (2.0 * cfg.mat.eps);
    assert!((q.crack_energy - want).abs() < 1e-14 * want.max(1.0));
}

#[test]
fn single_step_tension_keeps_phase_field_near_one_off_slit() {
    let mut cfg = desk(Benchmark::Tension, 0.088);
    cfg.steps = 1;
    let mesh = cfg.build_mesh().unwrap();
    let mut sim = Simulation::new(&cfg, &mesh);
    let out = sim.step().unwrap();
    // tiny load step: no new contact away from the slit band
    let dofs = &sim.dofs;
    for d in 0..dofs.n_master {
        let p = mesh.vertices[dofs.vertex_of_dof[d]].pos;
        let on_slit = (p.y - 0.5).abs() < 1e-9 && p.x >= 0.25 - 1e-9;
        if on_slit {
            assert!(sim.phi().values[d] <= 1e-12);
        } else if (p.y - 0.5).abs() > 4.0 * cfg.mat.eps {
            // outside the regularized slit band the material stays intact
            assert!(sim.phi().values[d] > 0.9, "phi = {}", sim.phi().values[d]);
        }
        assert!(sim.phi().values[d] <= 1.0 + 1e-12);
        assert!(sim.phi().values[d] >= -1e-9);
    }
    assert!(out.summary.quantities.crack_energy > 0.0);
    let report = out.report.unwrap();
    assert!(report.phi.total.is_finite());
    // totals compose from the per-node values
    let mut rss = [0.0f64; 4];
    for row in &report.phi.per_node {
        for k in 0..4 {
            rss[k] += row[k] * row[k];
        }
    }
    for k in 0..4 {
        assert!((crate::float::sqrt(rss[k]) - report.phi.eta[k]).abs() < 1e-12);
    }
    assert!((report.phi.eta.iter().sum::<f64>() - report.phi.total).abs() < 1e-12);
}

#[test]
fn irreversibility_and_feasibility_along_a_short_run() {
    let mut cfg = desk(Benchmark::Tension, 0.176);
    cfg.steps = 6;
    let mesh = cfg.build_mesh().unwrap();
    let mut sim = Simulation::new(&cfg, &mesh);
    let mut prev = sim.phi().clone();
    for _ in 0..cfg.steps {
        sim.step().unwrap();
        for (now, before) in sim.phi().values.iter().zip(&prev.values) {
            assert!(*now <= before + 1e-12);
        }
        for v in &sim.phi().values {
            assert!(*v <= 1.0 + 1e-12 && *v >= -1e-9);
        }
        prev = sim.phi().clone();
    }
}

#[test]
fn dorfler_marking_prefix_rule() {
    let ind = [3.0, 1.0, 2.0, 0.5, 0.0];
    // total squared = 9 + 1 + 4 + 0.25 = 14.25
    let marked = mark_dorfler(&ind, 0.5);
    // theta^2 * total = 3.5625: the largest indicator (9.0) already covers it
    assert_eq!(marked, alloc::vec![0]);
    // theta = 1 marks every node with positive indicator (and stops there)
    let all = mark_dorfler(&ind, 1.0);
    assert_eq!(all.len(), 4);
    // zero indicators mark nothing
    assert!(mark_dorfler(&[0.0; 4], 0.7).is_empty());
}

#[test]
fn theta_one_refines_uniformly() {
    let mut cfg = desk(Benchmark::Tension, 0.176);
    cfg.steps = 2;
    cfg.stages = 1;
    cfg.theta = 1.0;
    cfg.h0 = 0.36; // 4x4 start mesh
    let result = adaptive_loop(&cfg, None).unwrap();
    assert_eq!(result.stages.len(), 2);
    assert_eq!(result.stages[0].mesh.n_cells(), 16);
    // every node has positive indicator somewhere, so theta = 1 marks all
    assert_eq!(result.stages[1].mesh.n_cells(), 64);
}

#[test]
fn dirichlet_and_neumann_masks_per_benchmark() {
    let cfg = desk(Benchmark::Shear, 0.088);
    let mesh = cfg.build_mesh().unwrap();
    let dofs = DofSystem::new(&mesh);
    let bc = dirichlet_values(Benchmark::Shear, &mesh, &dofs, 1e-3);
    // every boundary node is clamped in y
    let n_boundary = (0..dofs.n_master)
        .filter(|&d| mesh.vertices[dofs.vertex_of_dof[d]].on_boundary)
        .count();
    let n_y = bc.iter().filter(|(dof, _)| dof % 2 == 1).count();
    assert_eq!(n_y, n_boundary);
    // left/right sides are Neumann in x only
    for sid in 0..mesh.sides.len() {
        if !mesh.sides[sid].is_boundary() {
            continue;
        }
        let mid = mesh.sides[sid].midpoint(&mesh);
        let mask = neumann_side_mask(Benchmark::Shear, &mesh, sid);
        if mid.x.abs() < 1e-9 || (mid.x - 1.0).abs() < 1e-9 {
            assert_eq!(mask, [true, false]);
        } else {
            assert_eq!(mask, [false, false]);
        }
    }

    // L-shape: pushed segment is Dirichlet in y only
    let cfg = desk(Benchmark::LShape, 20.0);
    let mesh = cfg.build_mesh().unwrap();
    let dofs = DofSystem::new(&mesh);
    let t = 0.05;
    let bc = dirichlet_values(Benchmark::LShape, &mesh, &dofs, t);
    let pushed: Vec<_> = bc.iter().filter(|(_, v)| (*v - t).abs() < 1e-15).collect();
    assert!(!pushed.is_empty());
    for (dof, _) in &pushed {
        assert_eq!(dof % 2, 1, "push acts on the y component");
        let p = mesh.vertices[dofs.vertex_of_dof[dof / 2]].pos;
        assert!((p.y - 250.0).abs() < 1e-6 && p.x >= 470.0 - 1e-6);
    }
}

#[test]
fn tension_study_step_matches_doubled_quadrature() {
    // start mesh, the study snapshot: estimator and quantities recomputed
    // at doubled quadrature order agree to 1e-8 relative
    let cfg = desk(Benchmark::Tension, 0.088);
    let mesh = cfg.build_mesh().unwrap();
    let k = cfg.study_step();
    let mut sim = Simulation::new(&cfg, &mesh);
    sim.with_estimators = false;
    for _ in 0..k - 1 {
        sim.step().unwrap();
    }
    let obstacle = sim.phi().values.clone();
    sim.step().unwrap();
    let dofs = DofSystem::new(&mesh);
    let patches = mesh.all_patches();
    let coeffs = crate::phasefield::VICoefficients::new(
        &mesh, &dofs, sim.u(), obstacle, cfg.mat, cfg.splitting,
    );
    let system = crate::phasefield::assemble_vi_system(&mesh, &dofs, &coeffs).unwrap();
    let class = crate::phasefield::classify_contact(&mesh, &dofs, &patches, sim.phi(), &coeffs);
    let force =
        crate::phasefield::constraining_force(&mesh, &dofs, &patches, sim.phi(), &coeffs, &system)
            .unwrap();
    let est = crate::phasefield::estimate_phi(&mesh, &dofs, &patches, sim.phi(), &coeffs, &class, &force)
        .unwrap();
    let est2 = crate::phasefield::estimate_phi_with_order(
        &mesh, &dofs, &patches, sim.phi(), &coeffs, &class, &force, 8,
    )
    .unwrap();
    assert!(est.total.is_finite() && est.total > 0.0);
    assert!(
        (est.total - est2.total).abs() <= 1e-8 * est.total,
        "{} vs {}",
        est.total,
        est2.total
    );

    let q = quantities(&cfg, &mesh, &dofs, sim.u(), sim.phi());
    let q2 = quantities_with_order(&cfg, &mesh, &dofs, sim.u(), sim.phi(), 8);
    for (a, b) in [
        (q.crack_energy, q2.crack_energy),
        (q.bulk_energy, q2.bulk_energy),
        (q.load, q2.load),
    ] {
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-12), "{a} vs {b}");
    }
}

#[test]
fn phi_plus_u_marking_concentrates_at_the_crack_origin() {
    // shear: adding the displacement estimator puts extra refinement at the
    // crack origin (the slit tip) and dilutes the concentration along the
    // crack path
    let mut base = desk(Benchmark::Shear, 0.088);
    base.stages = 2;
    let tip = crate::geom::Vec2::new(0.5, 0.5);
    let mut near_counts = alloc::vec::Vec::new();
    let mut path_fractions = alloc::vec::Vec::new();
    for mode in [EstimatorMode::PhiOnly, EstimatorMode::PhiPlusU] {
        let mut cfg = base.clone();
        cfg.estimator = mode;
        let result = adaptive_loop(&cfg, None).unwrap();
        let mesh = &result.stages.last().unwrap().mesh;
        let finest = mesh.max_level();
        let fine: alloc::vec::Vec<usize> =
            (0..mesh.n_cells()).filter(|&c| mesh.cells[c].key.level == finest).collect();
        let near = fine
            .iter()
            .filter(|&&c| mesh.cells[c].center().dist(tip) <= 0.15)
            .count();
        near_counts.push(near);
        path_fractions.push(near as f64 / fine.len() as f64);
    }
    assert!(
        near_counts[1] >= near_counts[0],
        "phi-plus-u should add refinement at the origin: {near_counts:?}"
    );
    assert!(
        path_fractions[1] <= path_fractions[0],
        "phi-plus-u should spread refinement beyond the crack path: {path_fractions:?}"
    );
}
