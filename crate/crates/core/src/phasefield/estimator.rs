//! The eps-robust residual error estimator for the phase-field variational
//! inequality, the associated energy norms, and the Galerkin-functional
//! consistency check.

use super::{
    basis_on_cell, clamp01, robust_weight, Classification, ConstrainingForce,
    ContactClass, Ctx, VICoefficients,
};
use crate::error::{Error, Result};
use crate::fespace::{DofSystem, FieldView, NodalField};
use crate::float;
use crate::geom::Vec2;
use crate::mesh::{CellId, Mesh, Patch};
use crate::quadrature::CellRule;
use alloc::vec;
use alloc::vec::Vec;

/// Per-node and total estimator contributions.
#[derive(Debug, Clone)]
pub struct PhiEstimate {
    /// Indexed by master dof: `[eta1, eta2, eta3, eta4]`.
    pub per_node: Vec<[f64; 4]>,
    /// Root-sum-square of each contribution over the nodes.
    pub eta: [f64; 4],
    /// `eta1 + eta2 + eta3 + eta4`.
    pub total: f64,
}

impl PhiEstimate {
    /// Per-node composite `sqrt(sum_k eta_k,p^2)` used for marking.
    pub fn node_composite(&self, dof: usize) -> f64 {
        float::sqrt(self.per_node[dof].iter().map(|v| v * v).sum())
    }

    fn from_per_node(per_node: Vec<[f64; 4]>) -> PhiEstimate {
        let mut eta = [0.0f64; 4];
        for row in &per_node {
            for k in 0..4 {
                eta[k] += row[k] * row[k];
            }
        }
        for e in &mut eta {
            *e = float::sqrt(*e);
        }
        let total = eta.iter().sum();
        PhiEstimate { per_node, eta, total }
    }
}

struct SkeletonIntegrals {
    /// per-cell `int r^2`
    cell_r2: Vec<f64>,
    /// per-cell min of the reaction coefficient over quadrature points
    cell_alpha: Vec<f64>,
    /// per-side `int (Gc eps [grad phi])^2`, interior sides only
    side_j2: Vec<f64>,
    /// per-boundary-side `int (Gc eps grad phi . n)^2`
    side_flux2: Vec<f64>,
}

fn skeleton_integrals(ctx: &Ctx, order: usize) -> SkeletonIntegrals {
    let mesh = ctx.mesh;
    let rule = CellRule::tensor(order);
    let side_rule = crate::quadrature::gauss_01(order);
    // alpha_p is defined as the reaction minimum over the default
    // quadrature grid; it is a fixed coefficient functional, independent of
    // the integration order used for the norm recomputation cross-checks
    let alpha_rule = CellRule::tensor(4);
    let mut cell_r2 = vec![0.0; mesh.n_cells()];
    let mut cell_alpha = vec![f64::MAX; mesh.n_cells()];
    for cell in 0..mesh.n_cells() {
        let area = mesh.cells[cell].area();
        let mut acc = 0.0;
        let mut alpha = f64::MAX;
        for &(xi, eta, w) in &rule.points {
            let r = ctx.residual(cell, xi, eta);
            acc += r * r * w * area;
        }
        for &(xi, eta, _) in &alpha_rule.points {
            alpha = alpha.min(ctx.coeffs.reaction(mesh, cell, xi, eta));
        }
        cell_r2[cell] = acc;
        cell_alpha[cell] = alpha;
    }
    let mut side_j2 = vec![0.0; mesh.sides.len()];
    let mut side_flux2 = vec![0.0; mesh.sides.len()];
    for sid in 0..mesh.sides.len() {
        let side = &mesh.sides[sid];
        let mut acc = 0.0;
        if side.is_boundary() {
            for &(t, w) in &side_rule {
                let f = ctx.boundary_flux(sid, t);
                acc += f * f * w * side.length;
            }
            side_flux2[sid] = acc;
        } else {
            for &(t, w) in &side_rule {
                let j = ctx.side_jump(sid, t);
                acc += j * j * w * side.length;
            }
            side_j2[sid] = acc;
        }
    }
    SkeletonIntegrals { cell_r2, cell_alpha, side_j2, side_flux2 }
}

fn patch_weight(patch: &Patch, ints: &SkeletonIntegrals, gc_eps: f64) -> f64 {
    let alpha = patch
        .cells
        .iter()
        .map(|&c| ints.cell_alpha[c])
        .fold(f64::MAX, f64::min);
    robust_weight(patch.h, alpha, gc_eps)
}

/// The robust a posteriori estimator for the phase-field obstacle problem.
///
/// Residual and jump contributions are skipped at full-contact nodes; the
/// complementarity contribution `eta4` lives on semi-contact nodes only.
pub fn estimate_phi(
    mesh: &Mesh,
    dofs: &DofSystem,
    patches: &[Option<Patch>],
    phi: &NodalField,
    coeffs: &VICoefficients,
    class: &Classification,
    force: &ConstrainingForce,
) -> Result<PhiEstimate> {
    estimate_phi_with_order(mesh, dofs, patches, phi, coeffs, class, force, 4)
}

/// [`estimate_phi`] at an explicit quadrature order (cross-check hook).
#[allow(clippy::too_many_arguments)]
pub fn estimate_phi_with_order(
    mesh: &Mesh,
    dofs: &DofSystem,
    patches: &[Option<Patch>],
    phi: &NodalField,
    coeffs: &VICoefficients,
    class: &Classification,
    force: &ConstrainingForce,
    order: usize,
) -> Result<PhiEstimate> {
    let ctx = Ctx::new(mesh, dofs, phi, coeffs);
    let ints = skeleton_integrals(&ctx, order);
    let gc_eps = coeffs.diffusion();
    let jump_scale = 1.0 / float::quartic_root(gc_eps);
    let sub_rule = CellRule::tensor(3);

    let mut per_node = vec![[0.0f64; 4]; dofs.n_master];
    for d in 0..dofs.n_master {
        let patch = patches[dofs.vertex_of_dof[d]].as_ref().expect("missing patch");
        match class.class[d] {
            ContactClass::Full => {}
            cls => {
                let w = patch_weight(patch, &ints, gc_eps);
                let r2: f64 = patch.cells.iter().map(|&c| ints.cell_r2[c]).sum();
                let j2: f64 = patch.interior_sides.iter().map(|&s| ints.side_j2[s]).sum();
                let f2: f64 = patch.boundary_sides.iter().map(|&s| ints.side_flux2[s]).sum();
                per_node[d][0] = w * float::sqrt(r2);
                per_node[d][1] = float::sqrt(w) * jump_scale * float::sqrt(j2);
                per_node[d][2] = float::sqrt(w) * jump_scale * float::sqrt(f2);
                if cls == ContactClass::Semi {
                    // int over the sub-patch of (obstacle - phi) phi_p
                    let mut gap_int = 0.0;
                    for sq in &patch.sub_squares {
                        let w_corner = basis_on_cell(mesh, dofs, d, sq.cell);
                        let area = mesh.cells[sq.cell].area() * sq.size * sq.size;
                        for &(xi, eta, w) in &sub_rule.points {
                            let (lx, ly) = (sq.x0 + xi * sq.size, sq.y0 + eta * sq.size);
                            let nb = crate::fespace::shapes(lx, ly);
                            let phi_p: f64 = (0..4).map(|i| w_corner[i] * nb[i]).sum();
                            let gap = ctx.obstacle_view.value(mesh, sq.cell, lx, ly, 0)
                                - ctx.phi_view.value(mesh, sq.cell, lx, ly, 0);
                            gap_int += gap * phi_p * w * area;
                        }
                    }
                    let radicand = force.s[d] * gap_int;
                    if radicand < -1e-12 {
                        return Err(Error::NegativeRadicand { node: d, value: radicand });
                    }
                    per_node[d][3] = float::sqrt(radicand.max(0.0));
                }
            }
        }
    }
    Ok(PhiEstimate::from_per_node(per_node))
}

/// The plain robust reaction-diffusion residual estimator with no contact
/// handling: an independent code path the full estimator must reduce to
/// when no node touches the obstacle.
pub fn robust_reaction_diffusion_estimator(
    mesh: &Mesh,
    dofs: &DofSystem,
    patches: &[Option<Patch>],
    phi: &NodalField,
    coeffs: &VICoefficients,
) -> PhiEstimate {
    let ctx = Ctx::new(mesh, dofs, phi, coeffs);
    let gc_eps = coeffs.diffusion();
    let rule = CellRule::tensor(4);
    let side_rule = crate::quadrature::gauss_01(4);
    let mut per_node = vec![[0.0f64; 4]; dofs.n_master];
    for d in 0..dofs.n_master {
        let patch = patches[dofs.vertex_of_dof[d]].as_ref().expect("missing patch");
        let mut r2 = 0.0;
        let mut alpha = f64::MAX;
        for &cell in &patch.cells {
            let area = mesh.cells[cell].area();
            for &(xi, eta, w) in &rule.points {
                let r = ctx.residual(cell, xi, eta);
                r2 += r * r * w * area;
                alpha = alpha.min(ctx.coeffs.reaction(mesh, cell, xi, eta));
            }
        }
        let mut j2 = 0.0;
        for &sid in &patch.interior_sides {
            let len = mesh.sides[sid].length;
            for &(t, w) in &side_rule {
                let j = ctx.side_jump(sid, t);
                j2 += j * j * w * len;
            }
        }
        let mut f2 = 0.0;
        for &sid in &patch.boundary_sides {
            let len = mesh.sides[sid].length;
            for &(t, w) in &side_rule {
                let f = ctx.boundary_flux(sid, t);
                f2 += f * f * w * len;
            }
        }
        let w = robust_weight(patch.h, alpha, gc_eps);
        per_node[d] = [
            w * float::sqrt(r2),
            float::sqrt(w) / float::quartic_root(gc_eps) * float::sqrt(j2),
            float::sqrt(w) / float::quartic_root(gc_eps) * float::sqrt(f2),
            0.0,
        ];
    }
    PhiEstimate::from_per_node(per_node)
}

/// Non-robust residual estimator: plain mesh-size weights against the
/// H1-norm error, used for the efficiency comparison.
pub fn standard_estimator(
    mesh: &Mesh,
    dofs: &DofSystem,
    patches: &[Option<Patch>],
    phi: &NodalField,
    coeffs: &VICoefficients,
    class: &Classification,
    force: &ConstrainingForce,
) -> Result<PhiEstimate> {
    let robust = estimate_phi(mesh, dofs, patches, phi, coeffs, class, force)?;
    let ctx = Ctx::new(mesh, dofs, phi, coeffs);
    let ints = skeleton_integrals(&ctx, 4);
    let mut per_node = vec![[0.0f64; 4]; dofs.n_master];
    for d in 0..dofs.n_master {
        let patch = patches[dofs.vertex_of_dof[d]].as_ref().expect("missing patch");
        if class.class[d] == ContactClass::Full {
            continue;
        }
        let r2: f64 = patch.cells.iter().map(|&c| ints.cell_r2[c]).sum();
        let j2: f64 = patch.interior_sides.iter().map(|&s| ints.side_j2[s]).sum();
        let f2: f64 = patch.boundary_sides.iter().map(|&s| ints.side_flux2[s]).sum();
        per_node[d] = [
            patch.h * float::sqrt(r2),
            float::sqrt(patch.h) * float::sqrt(j2),
            float::sqrt(patch.h) * float::sqrt(f2),
            // the complementarity term carries no weight; reuse it
            robust.per_node[d][3],
        ];
    }
    Ok(PhiEstimate::from_per_node(per_node))
}

/// Energy norm `sqrt(Gc eps |grad v|^2 + c v^2)` of a field on the mesh the
/// coefficients live on.
pub fn energy_norm(
    mesh: &Mesh,
    dofs: &DofSystem,
    v: &NodalField,
    coeffs: &VICoefficients,
) -> f64 {
    let view = FieldView::new(mesh, dofs, v);
    let rule = CellRule::tensor(4);
    let mut acc = 0.0;
    for cell in 0..mesh.n_cells() {
        let area = mesh.cells[cell].area();
        for &(xi, eta, w) in &rule.points {
            let g = view.grad(mesh, cell, xi, eta, 0);
            let val = view.value(mesh, cell, xi, eta, 0);
            let c = coeffs.reaction(mesh, cell, xi, eta);
            acc += (coeffs.diffusion() * g.dot(g) + c * val * val) * w * area;
        }
    }
    float::sqrt(acc)
}

/// Energy norm of the difference between a reference field on a fine mesh
/// and a field on a coarse mesh nested in it. The reaction weight comes
/// from coefficients on the fine mesh.
pub fn energy_norm_difference(
    fine_mesh: &Mesh,
    fine_dofs: &DofSystem,
    fine_field: &NodalField,
    coarse_mesh: &Mesh,
    coarse_dofs: &DofSystem,
    coarse_field: &NodalField,
    coeffs_fine: &VICoefficients,
) -> Result<f64> {
    crate::oracle::reference_error(
        fine_mesh,
        fine_dofs,
        fine_field,
        coarse_mesh,
        coarse_dofs,
        coarse_field,
        3,
        &|fc: CellId, p: Vec2| {
            let (xi, eta) = clamp01(fine_mesh.local_coords(fc, p));
            (coeffs_fine.diffusion(), coeffs_fine.reaction(fine_mesh, fc, xi, eta))
        },
    )
}

/// Evaluates the Galerkin functional at a probe field two ways: directly as
/// `<Gc/eps, psi> - a(phi, psi) - <Lambda_tilde, psi>`, and through the
/// per-patch representation with sub-patch means at the non-full-contact
/// nodes. Returns the absolute difference of the two routes.
#[allow(clippy::too_many_arguments)]
pub fn galerkin_functional_check(
    mesh: &Mesh,
    dofs: &DofSystem,
    patches: &[Option<Patch>],
    phi: &NodalField,
    coeffs: &VICoefficients,
    class: &Classification,
    force: &ConstrainingForce,
    probe_mesh: &Mesh,
    probe_dofs: &DofSystem,
    psi: &NodalField,
) -> Result<f64> {
    let (direct, rep) = galerkin_functional_values(
        mesh, dofs, patches, phi, coeffs, class, force, probe_mesh, probe_dofs, psi,
    )?;
    Ok((direct - rep).abs())
}

/// Both routes of the Galerkin functional evaluation: `(direct,
/// representation)`.
#[allow(clippy::too_many_arguments)]
pub fn galerkin_functional_values(
    mesh: &Mesh,
    dofs: &DofSystem,
    patches: &[Option<Patch>],
    phi: &NodalField,
    coeffs: &VICoefficients,
    class: &Classification,
    force: &ConstrainingForce,
    probe_mesh: &Mesh,
    probe_dofs: &DofSystem,
    psi: &NodalField,
) -> Result<(f64, f64)> {
    if !probe_mesh.is_refinement_of(mesh) {
        return Err(Error::MeshesNotNested);
    }
    let ctx = Ctx::new(mesh, dofs, phi, coeffs);
    let psi_view = FieldView::new(probe_mesh, probe_dofs, psi);
    let order = 4;
    let rule = CellRule::tensor(order);

    // probe cells grouped under their coarse parents
    let mut children: Vec<Vec<CellId>> = vec![Vec::new(); mesh.n_cells()];
    for pc in 0..probe_mesh.n_cells() {
        let cc = mesh.containing_cell(probe_mesh, pc).expect("nested");
        children[cc].push(pc);
    }

    // ---- direct route: <f, psi> - a(phi, psi) ----
    let mut direct = 0.0;
    for cc in 0..mesh.n_cells() {
        for &pc in &children[cc] {
            let area = probe_mesh.cells[pc].area();
            for &(xi, eta, w) in &rule.points {
                let p = probe_mesh.cells[pc].map(xi, eta);
                let (cxi, ceta) = clamp01(mesh.local_coords(cc, p));
                let psi_v = psi_view.value(probe_mesh, pc, xi, eta, 0);
                let psi_g = psi_view.grad(probe_mesh, pc, xi, eta, 0);
                let phi_v = ctx.phi_view.value(mesh, cc, cxi, ceta, 0);
                let phi_g = ctx.phi_view.grad(mesh, cc, cxi, ceta, 0);
                let c = coeffs.reaction(mesh, cc, cxi, ceta);
                direct += (coeffs.source() * psi_v
                    - c * phi_v * psi_v
                    - coeffs.diffusion() * phi_g.dot(psi_g))
                    * w
                    * area;
            }
        }
    }
    // ---- quasi-discrete constraining force <Lambda_tilde, psi> ----
    let mut lambda_tilde = 0.0;
    for d in 0..dofs.n_master {
        match class.class[d] {
            ContactClass::Semi => {
                let cp = subpatch_mean(mesh, dofs, d, patches, probe_mesh, &psi_view);
                lambda_tilde += force.lambda[d] * cp;
            }
            ContactClass::Full => {
                lambda_tilde += patch_functional(
                    mesh, dofs, d, patches, &ctx, probe_mesh, &children, &psi_view, None,
                );
            }
            ContactClass::NoContact => {}
        }
    }
    let direct_value = direct - lambda_tilde;

    // ---- representation route ----
    let mut rep = 0.0;
    for d in 0..dofs.n_master {
        if class.class[d] == ContactClass::Full {
            continue;
        }
        let cp = subpatch_mean(mesh, dofs, d, patches, probe_mesh, &psi_view);
        rep += patch_functional(
            mesh, dofs, d, patches, &ctx, probe_mesh, &children, &psi_view, Some(cp),
        );
    }
    Ok((direct_value, rep))
}

/// `c_p(psi) = int_{subpatch} psi phi_p / int_{subpatch} phi_p`.
fn subpatch_mean(
    mesh: &Mesh,
    dofs: &DofSystem,
    d: usize,
    patches: &[Option<Patch>],
    probe_mesh: &Mesh,
    psi_view: &FieldView,
) -> f64 {
    let patch = patches[dofs.vertex_of_dof[d]].as_ref().expect("missing patch");
    let rule = CellRule::tensor(3);
    let mut num = 0.0;
    let mut den = 0.0;
    for sq in &patch.sub_squares {
        let w_corner = basis_on_cell(mesh, dofs, d, sq.cell);
        let cell = &mesh.cells[sq.cell];
        // integrate over the dyadic square, splitting at probe cells
        integrate_dyadic(
            probe_mesh,
            Vec2::new(cell.origin.x + sq.x0 * cell.edge, cell.origin.y + sq.y0 * cell.edge),
            sq.size * cell.edge,
            &rule,
            &mut |p, w| {
                let (lx, ly) = clamp01(mesh.local_coords(sq.cell, p));
                let nb = crate::fespace::shapes(lx, ly);
                let phi_p: f64 = (0..4).map(|i| w_corner[i] * nb[i]).sum();
                let pc = probe_mesh.leaf_at_point(p).expect("point outside probe mesh");
                let (xi, eta) = clamp01(probe_mesh.local_coords(pc, p));
                let psi_v = psi_view.value(probe_mesh, pc, xi, eta, 0);
                num += psi_v * phi_p * w;
                den += phi_p * w;
            },
        );
    }
    num / den
}

/// Integrates over an axis-aligned dyadic square, recursively splitting
/// into quadrants until each piece lies within a single probe-mesh leaf.
fn integrate_dyadic(
    probe: &Mesh,
    origin: Vec2,
    size: f64,
    rule: &CellRule,
    f: &mut impl FnMut(Vec2, f64),
) {
    let center = Vec2::new(origin.x + 0.5 * size, origin.y + 0.5 * size);
    let leaf = probe.leaf_at_point(center).expect("square outside probe mesh");
    let cell = &probe.cells[leaf];
    let inside = origin.x >= cell.origin.x - 1e-12 * size
        && origin.y >= cell.origin.y - 1e-12 * size
        && origin.x + size <= cell.origin.x + cell.edge + 1e-12 * size
        && origin.y + size <= cell.origin.y + cell.edge + 1e-12 * size;
    if inside {
        let area = size * size;
        for &(xi, eta, w) in &rule.points {
            f(Vec2::new(origin.x + xi * size, origin.y + eta * size), w * area);
        }
        return;
    }
    let h = 0.5 * size;
    for (dx, dy) in [(0.0, 0.0), (h, 0.0), (0.0, h), (h, h)] {
        integrate_dyadic(probe, Vec2::new(origin.x + dx, origin.y + dy), h, rule, f);
    }
}

/// `int_{patch} r psi' phi_p + int_{skeleton} j psi' phi_p -
/// int_{boundary} flux psi' phi_p` with `psi' = psi - c_p` when a sub-patch
/// mean is supplied, else `psi` itself.
#[allow(clippy::too_many_arguments)]
fn patch_functional(
    mesh: &Mesh,
    dofs: &DofSystem,
    d: usize,
    patches: &[Option<Patch>],
    ctx: &Ctx,
    probe_mesh: &Mesh,
    children: &[Vec<CellId>],
    psi_view: &FieldView,
    shift: Option<f64>,
) -> f64 {
    let patch = patches[dofs.vertex_of_dof[d]].as_ref().expect("missing patch");
    let rule = CellRule::tensor(4);
    let c_p = shift.unwrap_or(0.0);
    let mut acc = 0.0;
    for &cc in &patch.cells {
        let w_corner = basis_on_cell(mesh, dofs, d, cc);
        for &pc in &children[cc] {
            let area = probe_mesh.cells[pc].area();
            for &(xi, eta, w) in &rule.points {
                let p = probe_mesh.cells[pc].map(xi, eta);
                let (cxi, ceta) = clamp01(mesh.local_coords(cc, p));
                let nb = crate::fespace::shapes(cxi, ceta);
                let phi_p: f64 = (0..4).map(|i| w_corner[i] * nb[i]).sum();
                let psi_v = psi_view.value(probe_mesh, pc, xi, eta, 0) - c_p;
                acc += ctx.residual(cc, cxi, ceta) * psi_v * phi_p * w * area;
            }
        }
    }
    let probe_ref: [&Mesh; 1] = [probe_mesh];
    for &sid in &patch.interior_sides {
        let side = &mesh.sides[sid];
        let owner = side.cells[0].unwrap();
        let w_corner = basis_on_cell(mesh, dofs, d, owner);
        let (pa, pb) = (mesh.vertices[side.a].pos, mesh.vertices[side.b].pos);
        acc += crate::fespace::integrate_segment(&probe_ref, pa, pb, 4, &mut |p, w| {
            let t = param_on_side(pa, pb, p);
            let (xi, eta) = clamp01(mesh.local_coords(owner, p));
            let nb = crate::fespace::shapes(xi, eta);
            let phi_p: f64 = (0..4).map(|i| w_corner[i] * nb[i]).sum();
            let pc = probe_mesh.leaf_at_point(nudge_inside(mesh, owner, p)).expect("probe");
            let (pxi, peta) = clamp01(probe_mesh.local_coords(pc, p));
            let psi_v = psi_view.value(probe_mesh, pc, pxi, peta, 0) - c_p;
            ctx.side_jump(sid, t) * psi_v * phi_p * w
        });
    }
    for &sid in &patch.boundary_sides {
        let side = &mesh.sides[sid];
        let owner = side.boundary_cell();
        let w_corner = basis_on_cell(mesh, dofs, d, owner);
        let (pa, pb) = (mesh.vertices[side.a].pos, mesh.vertices[side.b].pos);
        acc -= crate::fespace::integrate_segment(&probe_ref, pa, pb, 4, &mut |p, w| {
            let t = param_on_side(pa, pb, p);
            let (xi, eta) = clamp01(mesh.local_coords(owner, p));
            let nb = crate::fespace::shapes(xi, eta);
            let phi_p: f64 = (0..4).map(|i| w_corner[i] * nb[i]).sum();
            let pc = probe_mesh.leaf_at_point(nudge_inside(mesh, owner, p)).expect("probe");
            let (pxi, peta) = clamp01(probe_mesh.local_coords(pc, p));
            let psi_v = psi_view.value(probe_mesh, pc, pxi, peta, 0) - c_p;
            ctx.boundary_flux(sid, t) * psi_v * phi_p * w
        });
    }
    acc
}

fn param_on_side(pa: Vec2, pb: Vec2, p: Vec2) -> f64 {
    let len2 = (pb - pa).dot(pb - pa);
    (p - pa).dot(pb - pa) / len2
}

/// Pull a point on a cell side slightly into the cell so leaf lookup does
/// not land on the far neighbor (psi is continuous, so either side works;
/// this keeps the evaluation deterministic).
fn nudge_inside(mesh: &Mesh, cell: CellId, p: Vec2) -> Vec2 {
    let c = mesh.cells[cell].center();
    let d = 1e-9 * mesh.cells[cell].edge;
    let dir = Vec2::new(c.x - p.x, c.y - p.y);
    let n = dir.norm().max(1e-300);
    Vec2::new(p.x + d * dir.x / n, p.y + d * dir.y / n)
}
