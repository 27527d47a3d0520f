//! The per-time-step phase-field obstacle problem: variational-inequality
//! solve by a primal-dual active set method, contact classification,
//! constraining forces and the eps-robust residual error estimator.

mod estimator;

pub use estimator::{
    energy_norm, energy_norm_difference, estimate_phi, estimate_phi_with_order,
    galerkin_functional_check, galerkin_functional_values,
    robust_reaction_diffusion_estimator, standard_estimator, PhiEstimate,
};

use crate::elasticity::{strain_at, stress_split, stress_unsplit, MaterialParams};
use crate::error::{Error, Result};
use crate::fespace::{
    assemble_bilinear, assemble_load, Constant, DofSystem, FieldView, NodalField, PinnedSolver,
    SparseSystem,
};
use crate::float;
use crate::mesh::{CellId, Mesh, Patch};
use crate::quadrature::CellRule;
use alloc::vec;
use alloc::vec::Vec;

/// Coefficients of the per-step phase-field bilinear form
/// `a(z, w) = <(Gc/eps + (1-kappa) D(x)) z, w> + Gc eps <grad z, grad w>`
/// where `D` is the crack-driving density of the current displacement, plus
/// the nodal obstacle (the interpolated previous phase field).
pub struct VICoefficients {
    mesh_id: u64,
    pub mat: MaterialParams,
    pub splitting: bool,
    /// Obstacle values per master dof.
    pub obstacle: Vec<f64>,
    u_view: FieldView,
    /// With splitting the density `sigma_plus : E` involves eigenvalue
    /// positive parts and is not piecewise polynomial; it is replaced by
    /// its per-cell bilinear interpolant from corner samples so every
    /// quadrature in the solver/estimator pipeline stays exact and the
    /// dual-route identities hold to round-off.
    split_corner_density: Vec<[f64; 4]>,
}

impl VICoefficients {
    pub fn new(
        mesh: &Mesh,
        dofs: &DofSystem,
        u: &NodalField,
        obstacle: Vec<f64>,
        mat: MaterialParams,
        splitting: bool,
    ) -> VICoefficients {
        assert_eq!(u.ncomp, 2);
        assert_eq!(obstacle.len(), dofs.n_master);
        mat.validate();
        let u_view = FieldView::new(mesh, dofs, u);
        let split_corner_density = if splitting {
            (0..mesh.n_cells())
                .map(|cell| {
                    let mut c = [0.0; 4];
                    for (k, &(xi, eta)) in
                        [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)].iter().enumerate()
                    {
                        let e = strain_at(&u_view, mesh, cell, xi, eta);
                        c[k] = stress_split(e, &mat).plus_contract_e;
                    }
                    c
                })
                .collect()
        } else {
            Vec::new()
        };
        VICoefficients {
            mesh_id: mesh.id(),
            mat,
            splitting,
            obstacle,
            u_view,
            split_corner_density,
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    /// Crack-driving density: `sigma : E` exactly, or the cell-wise
    /// interpolant of `sigma_plus : E` with splitting. Nonnegative.
    pub fn density(&self, mesh: &Mesh, cell: CellId, xi: f64, eta: f64) -> f64 {
        if self.splitting {
            let n = crate::fespace::shapes(xi, eta);
            let c = &self.split_corner_density[cell];
            n[0] * c[0] + n[1] * c[1] + n[2] * c[2] + n[3] * c[3]
        } else {
            let e = strain_at(&self.u_view, mesh, cell, xi, eta);
            stress_unsplit(e, &self.mat).ddot(e)
        }
    }

    /// Reaction coefficient `Gc/eps + (1-kappa) density`.
    pub fn reaction(&self, mesh: &Mesh, cell: CellId, xi: f64, eta: f64) -> f64 {
        self.source() + (1.0 - self.mat.kappa) * self.density(mesh, cell, xi, eta)
    }

    /// Diffusion coefficient `Gc eps`.
    pub fn diffusion(&self) -> f64 {
        self.mat.g_c * self.mat.eps
    }

    /// Constant source `Gc/eps`.
    pub fn source(&self) -> f64 {
        self.mat.g_c / self.mat.eps
    }
}

/// Assembles the phase-field system `A phi = b` (before the obstacle).
pub fn assemble_vi_system(
    mesh: &Mesh,
    dofs: &DofSystem,
    coeffs: &VICoefficients,
) -> Result<SparseSystem> {
    let mut sys = assemble_bilinear(
        mesh,
        dofs,
        &|m: &Mesh, c: CellId, xi: f64, eta: f64| coeffs.reaction(m, c, xi, eta),
        coeffs.diffusion(),
    )?;
    sys.rhs = assemble_load(mesh, dofs, &Constant(coeffs.source()));
    Ok(sys)
}

/// Solution of the discrete obstacle problem.
#[derive(Debug, Clone)]
pub struct VISolution {
    pub phi: NodalField,
    /// Multiplier `lambda_p = (b - A phi)_p` per master dof; this is the
    /// algebraic constraining force `<Lambda, phi_p>`.
    pub multiplier: Vec<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
}

impl VISolution {
    /// Largest violation of `min(o - phi, lambda) = 0` over all nodes.
    pub fn complementarity_residual(&self, obstacle: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for d in 0..self.multiplier.len() {
            let gap = obstacle[d] - self.phi.values[d];
            let lam = self.multiplier[d];
            worst = worst.max(gap.min(lam).abs());
        }
        worst
    }
}

/// Solves the discrete variational inequality `A phi = b`, `phi <= o` by the
/// primal-dual active set method. `warm_active` seeds the active set (the
/// previous time step's set); at most 50 iterations.
pub fn solve_vi(
    mesh: &Mesh,
    dofs: &DofSystem,
    coeffs: &VICoefficients,
    system: &SparseSystem,
    warm_active: Option<&[bool]>,
) -> Result<VISolution> {
    let mut cache = None;
    solve_vi_cached(mesh, dofs, coeffs, system, warm_active, &mut cache)
}

/// [`solve_vi`] with an externally owned solver cache (symbolic analysis
/// and preconditioning factor reused across time steps).
pub fn solve_vi_cached(
    mesh: &Mesh,
    dofs: &DofSystem,
    coeffs: &VICoefficients,
    system: &SparseSystem,
    warm_active: Option<&[bool]>,
    cache: &mut Option<PinnedSolver>,
) -> Result<VISolution> {
    let n = dofs.n_master;
    let o = &coeffs.obstacle;
    let c_pen = 100.0 * coeffs.source();
    match cache {
        None => {
            let coords = dofs.dof_coords(mesh);
            *cache = Some(PinnedSolver::new(system.matrix.clone(), Some(&coords)));
        }
        Some(s) => s.update_values(system.matrix.clone()),
    }
    let solver = cache.as_mut().unwrap();
    let mut phi_warm: Option<Vec<f64>> = None;

    let mut active: Vec<bool> = match warm_active {
        Some(w) => w.to_vec(),
        None => vec![false; n],
    };
    let rhs_scale = system.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let obs_scale = o.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut history: Vec<Vec<bool>> = Vec::new();
    let mut iterations = 0;
    for it in 1..=50 {
        iterations = it;
        let pinned: Vec<(usize, f64)> =
            (0..n).filter(|&d| active[d]).map(|d| (d, o[d])).collect();
        let phi = solver.solve_pinned_warm(&system.rhs, &pinned, phi_warm.as_deref())?;
        phi_warm = Some(phi.clone());
        // multiplier: residual b - A phi
        let mut lambda = vec![0.0; n];
        system.matrix.matvec(&phi, &mut lambda);
        for d in 0..n {
            lambda[d] = system.rhs[d] - lambda[d];
        }
        let next: Vec<bool> =
            (0..n).map(|d| lambda[d] + c_pen * (phi[d] - o[d]) > 0.0).collect();
        // declare convergence on a stable set, or when the complementarity
        // system already holds to round-off (degenerate ties where phi = o
        // and lambda = 0 can flip set membership forever)
        let primal_violation = (0..n)
            .map(|d| phi[d] - o[d])
            .fold(0.0f64, f64::max);
        let dual_violation = (0..n)
            .filter(|&d| active[d])
            .map(|d| -lambda[d])
            .fold(0.0f64, f64::max);
        if next == active
            || (primal_violation <= 1e-12 * obs_scale && dual_violation <= 1e-12 * rhs_scale)
        {
            let phi = NodalField::from_values(dofs, 1, phi);
            return Ok(VISolution { phi, multiplier: lambda, active, iterations: it });
        }
        // off the M-matrix regime (strong diffusion) the full update can
        // cycle between sets; switch to the safeguarded pivoting phase
        if history.iter().any(|h| *h == next) {
            active = next;
            break;
        }
        history.push(next.clone());
        active = next;
    }
    solve_vi_pivoting(dofs, system, o, solver, active, phi_warm, iterations)
}

/// Safeguarded primal active-set phase: change one constraint per solve
/// (the worst primal violation first, otherwise the most negative
/// multiplier, ties broken by index). Each pivot strictly improves the
/// iterate for an SPD matrix, so the phase terminates.
fn solve_vi_pivoting(
    dofs: &DofSystem,
    system: &SparseSystem,
    o: &[f64],
    solver: &mut PinnedSolver,
    mut active: Vec<bool>,
    mut phi_warm: Option<Vec<f64>>,
    base_iterations: usize,
) -> Result<VISolution> {
    let n = dofs.n_master;
    let rhs_scale = system.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let dual_tol = 1e-13 * rhs_scale;
    let max_pivots = 10_000;
    for it in 1..=max_pivots {
        let pinned: Vec<(usize, f64)> =
            (0..n).filter(|&d| active[d]).map(|d| (d, o[d])).collect();
        let phi = solver.solve_pinned_warm(&system.rhs, &pinned, phi_warm.as_deref())?;
        phi_warm = Some(phi.clone());
        let mut lambda = vec![0.0; n];
        system.matrix.matvec(&phi, &mut lambda);
        for d in 0..n {
            lambda[d] = system.rhs[d] - lambda[d];
        }
        let mut worst_primal = (0.0f64, usize::MAX);
        let mut worst_dual = (dual_tol, usize::MAX);
        for d in 0..n {
            if active[d] {
                if -lambda[d] > worst_dual.0 {
                    worst_dual = (-lambda[d], d);
                }
            } else if phi[d] - o[d] > worst_primal.0 {
                worst_primal = (phi[d] - o[d], d);
            }
        }
        if worst_primal.1 == usize::MAX && worst_dual.1 == usize::MAX {
            let phi = NodalField::from_values(dofs, 1, phi);
            return Ok(VISolution {
                phi,
                multiplier: lambda,
                active,
                iterations: base_iterations + it,
            });
        }
        if worst_primal.1 != usize::MAX {
            active[worst_primal.1] = true;
        } else {
            active[worst_dual.1] = false;
        }
    }
    Err(Error::ActiveSetMaxIter { iterations: base_iterations + max_pivots, last_delta: 1 })
}

/// Contact state of a master node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactClass {
    NoContact,
    Semi,
    Full,
}

#[derive(Debug, Clone)]
pub struct Classification {
    /// Per master dof.
    pub class: Vec<ContactClass>,
    pub n_semi: usize,
    pub n_full: usize,
}

/// Nodal contact tolerance used throughout the classification.
pub const CONTACT_TOL: f64 = 1e-10;

/// Classifies every master node as full-contact, semi-contact or
/// no-contact.
///
/// Full contact requires the solution to sit on the obstacle at every node
/// of the closed patch and the local sign surrogate to hold: element
/// residual `>= -1e-10` at every quadrature point of the patch and side
/// jump `Gc eps [grad phi] >= -1e-10` on the interior skeleton.
pub fn classify_contact(
    mesh: &Mesh,
    dofs: &DofSystem,
    patches: &[Option<Patch>],
    phi: &NodalField,
    coeffs: &VICoefficients,
) -> Classification {
    let ctx = Ctx::new(mesh, dofs, phi, coeffs);
    let rule = CellRule::tensor(4);
    let side_rule = crate::quadrature::gauss_01(4);

    // per-cell: residual sign ok; touches-obstacle at all 4 corners
    let mut cell_sign_ok = vec![true; mesh.n_cells()];
    let mut cell_on_obstacle = vec![true; mesh.n_cells()];
    for cell in 0..mesh.n_cells() {
        for &(xi, eta, _) in &rule.points {
            if ctx.residual(cell, xi, eta) < -CONTACT_TOL {
                cell_sign_ok[cell] = false;
                break;
            }
        }
        for &v in &mesh.cells[cell].verts {
            let gap = ctx.obstacle_view.at_vertex(v, 0) - ctx.phi_view.at_vertex(v, 0);
            if gap.abs() > CONTACT_TOL {
                cell_on_obstacle[cell] = false;
                break;
            }
        }
    }
    // per interior side: jump sign ok
    let mut side_sign_ok = vec![true; mesh.sides.len()];
    for sid in 0..mesh.sides.len() {
        if mesh.sides[sid].is_boundary() {
            continue;
        }
        for &(t, _) in &side_rule {
            if ctx.side_jump(sid, t) < -CONTACT_TOL {
                side_sign_ok[sid] = false;
                break;
            }
        }
    }

    let mut class = vec![ContactClass::NoContact; dofs.n_master];
    let (mut n_semi, mut n_full) = (0, 0);
    for d in 0..dofs.n_master {
        let gap = coeffs.obstacle[d] - phi.values[d];
        if gap > CONTACT_TOL {
            continue;
        }
        let patch = patches[dofs.vertex_of_dof[d]].as_ref().expect("missing patch");
        let full = patch.cells.iter().all(|&c| cell_on_obstacle[c] && cell_sign_ok[c])
            && patch.interior_sides.iter().all(|&s| side_sign_ok[s]);
        if full {
            class[d] = ContactClass::Full;
            n_full += 1;
        } else {
            class[d] = ContactClass::Semi;
            n_semi += 1;
        }
    }
    Classification { class, n_semi, n_full }
}

/// Lumped constraining force: algebraic node values, their integral
/// recomputation, and the normalized `s_p`.
#[derive(Debug, Clone)]
pub struct ConstrainingForce {
    /// `<Lambda, phi_p>` from the assembled system residual.
    pub lambda: Vec<f64>,
    /// The same functional evaluated through the integral representation
    /// (element residual, interior jumps, boundary flux).
    pub lambda_integral: Vec<f64>,
    /// `s_p = <Lambda, phi_p> / int phi_p`.
    pub s: Vec<f64>,
    pub max_discrepancy: f64,
}

/// Computes the constraining force along both routes and checks agreement
/// to quadrature tolerance 1e-9 (scaled by the load size).
pub fn constraining_force(
    mesh: &Mesh,
    dofs: &DofSystem,
    patches: &[Option<Patch>],
    phi: &NodalField,
    coeffs: &VICoefficients,
    system: &SparseSystem,
) -> Result<ConstrainingForce> {
    let n = dofs.n_master;
    let mut lambda = vec![0.0; n];
    system.matrix.matvec(&phi.values, &mut lambda);
    for d in 0..n {
        lambda[d] = system.rhs[d] - lambda[d];
    }

    let ctx = Ctx::new(mesh, dofs, phi, coeffs);
    let rule = CellRule::tensor(4);
    let side_rule = crate::quadrature::gauss_01(4);
    let mut lambda_integral = vec![0.0; n];
    let mut basis_integral = vec![0.0; n];
    for d in 0..n {
        let patch = patches[dofs.vertex_of_dof[d]].as_ref().expect("missing patch");
        let mut acc = 0.0;
        for &cell in &patch.cells {
            let w_corner = basis_on_cell(mesh, dofs, d, cell);
            let area = mesh.cells[cell].area();
            basis_integral[d] += 0.25 * area * (w_corner.iter().sum::<f64>());
            for &(xi, eta, w) in &rule.points {
                let nb = crate::fespace::shapes(xi, eta);
                let phi_p: f64 = (0..4).map(|i| w_corner[i] * nb[i]).sum();
                acc += ctx.residual(cell, xi, eta) * phi_p * w * area;
            }
        }
        for &sid in &patch.interior_sides {
            let side = &mesh.sides[sid];
            let owner = side.cells[0].unwrap();
            let w_corner = basis_on_cell(mesh, dofs, d, owner);
            for &(t, w) in &side_rule {
                let p = side_point(mesh, sid, t);
                let (xi, eta) = clamp01(mesh.local_coords(owner, p));
                let nb = crate::fespace::shapes(xi, eta);
                let phi_p: f64 = (0..4).map(|i| w_corner[i] * nb[i]).sum();
                acc += ctx.side_jump(sid, t) * phi_p * w * side.length;
            }
        }
        for &sid in &patch.boundary_sides {
            let side = &mesh.sides[sid];
            let owner = side.boundary_cell();
            let w_corner = basis_on_cell(mesh, dofs, d, owner);
            let nrm = side.outward_normal();
            for &(t, w) in &side_rule {
                let p = side_point(mesh, sid, t);
                let (xi, eta) = clamp01(mesh.local_coords(owner, p));
                let nb = crate::fespace::shapes(xi, eta);
                let phi_p: f64 = (0..4).map(|i| w_corner[i] * nb[i]).sum();
                let flux = coeffs.diffusion() * ctx.phi_view.grad(mesh, owner, xi, eta, 0).dot(nrm);
                acc -= flux * phi_p * w * side.length;
            }
        }
        lambda_integral[d] = acc;
    }

    let scale = system.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut max_discrepancy = 0.0f64;
    let mut worst = 0;
    for d in 0..n {
        let diff = (lambda[d] - lambda_integral[d]).abs();
        if diff > max_discrepancy {
            max_discrepancy = diff;
            worst = d;
        }
    }
    if max_discrepancy > 1e-9 * scale {
        return Err(Error::DualPathMismatch { node: worst, difference: max_discrepancy });
    }
    let s = (0..n).map(|d| lambda[d] / basis_integral[d]).collect();
    Ok(ConstrainingForce { lambda, lambda_integral, s, max_discrepancy })
}

/// Element residual `r(phi) = Gc/eps + Gc eps lap(phi) - Gc/eps phi -
/// (1-kappa) D phi` at a reference point of a cell.
pub fn element_residual(
    mesh: &Mesh,
    dofs: &DofSystem,
    phi: &NodalField,
    coeffs: &VICoefficients,
    cell: CellId,
    xi: f64,
    eta: f64,
) -> f64 {
    let ctx = Ctx::new(mesh, dofs, phi, coeffs);
    ctx.residual(cell, xi, eta)
}

/// Shared per-call evaluation context.
pub(crate) struct Ctx<'a> {
    pub mesh: &'a Mesh,
    pub coeffs: &'a VICoefficients,
    pub phi_view: FieldView,
    pub obstacle_view: FieldView,
}

impl<'a> Ctx<'a> {
    pub fn new(
        mesh: &'a Mesh,
        dofs: &DofSystem,
        phi: &NodalField,
        coeffs: &'a VICoefficients,
    ) -> Ctx<'a> {
        debug_assert_eq!(coeffs.mesh_id(), mesh.id());
        let obstacle = NodalField::from_values(dofs, 1, coeffs.obstacle.clone());
        Ctx {
            mesh,
            coeffs,
            phi_view: FieldView::new(mesh, dofs, phi),
            obstacle_view: FieldView::new(mesh, dofs, &obstacle),
        }
    }

    /// Element residual at a reference point. The Laplacian of a bilinear
    /// function on an axis-aligned square vanishes identically, so only the
    /// zeroth-order terms remain.
    pub fn residual(&self, cell: CellId, xi: f64, eta: f64) -> f64 {
        let phi = self.phi_view.value(self.mesh, cell, xi, eta, 0);
        let laplacian = 0.0;
        self.coeffs.source() + self.coeffs.diffusion() * laplacian
            - self.coeffs.source() * phi
            - (1.0 - self.coeffs.mat.kappa) * self.coeffs.density(self.mesh, cell, xi, eta) * phi
    }

    /// Side jump `Gc eps [grad phi]` at parameter `t` along an interior
    /// side, signed so that the integral representation of the constraining
    /// force carries it with a plus sign.
    pub fn side_jump(&self, sid: usize, t: f64) -> f64 {
        let side = &self.mesh.sides[sid];
        let (neg, pos) = (side.cells[0].unwrap(), side.cells[1].unwrap());
        let p = side_point(self.mesh, sid, t);
        let n = side.normal();
        let (xin, etan) = clamp01(self.mesh.local_coords(neg, p));
        let (xip, etap) = clamp01(self.mesh.local_coords(pos, p));
        let gn = self.phi_view.grad(self.mesh, neg, xin, etan, 0);
        let gp = self.phi_view.grad(self.mesh, pos, xip, etap, 0);
        self.coeffs.diffusion() * (gp - gn).dot(n)
    }

    /// Boundary flux `Gc eps grad phi . n_out` at parameter `t`.
    pub fn boundary_flux(&self, sid: usize, t: f64) -> f64 {
        let side = &self.mesh.sides[sid];
        let owner = side.boundary_cell();
        let p = side_point(self.mesh, sid, t);
        let (xi, eta) = clamp01(self.mesh.local_coords(owner, p));
        let g = self.phi_view.grad(self.mesh, owner, xi, eta, 0);
        self.coeffs.diffusion() * g.dot(side.outward_normal())
    }
}

/// Corner weights of the constrained basis function of master dof `d` on a
/// cell: the restriction is the bilinear interpolant of these four values.
pub(crate) fn basis_on_cell(mesh: &Mesh, dofs: &DofSystem, d: usize, cell: CellId) -> [f64; 4] {
    let vs = mesh.cells[cell].verts;
    let mut w = [0.0; 4];
    for i in 0..4 {
        for &(dd, wt) in dofs.expansion(vs[i]) {
            if dd == d {
                w[i] += wt;
            }
        }
    }
    w
}

pub(crate) fn side_point(mesh: &Mesh, sid: usize, t: f64) -> crate::geom::Vec2 {
    let side = &mesh.sides[sid];
    let pa = mesh.vertices[side.a].pos;
    let pb = mesh.vertices[side.b].pos;
    crate::geom::Vec2::new(pa.x + t * (pb.x - pa.x), pa.y + t * (pb.y - pa.y))
}

pub(crate) fn clamp01((a, b): (f64, f64)) -> (f64, f64) {
    (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0))
}

/// Weight `min(h_p / sqrt(Gc eps), alpha_p^{-1/2})` of the robust estimator.
pub(crate) fn robust_weight(h_p: f64, alpha_p: f64, gc_eps: f64) -> f64 {
    (h_p / float::sqrt(gc_eps)).min(1.0 / float::sqrt(alpha_p))
}
