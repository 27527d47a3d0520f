//! Linear elastic stress, the tensile/compressive spectral split, the
//! per-time-step displacement solve and the standard residual estimator for
//! the elasticity equation.

use crate::error::{Error, Result};
use crate::fespace::{
    assemble_elasticity, DofSystem, FieldView, NodalField, PinnedSolver, Voigt,
};
use crate::float;
use crate::geom::{Sym2, Vec2};
use crate::mesh::{CellId, Mesh, Patch, SideId};
use crate::quadrature::CellRule;
use alloc::vec;
use alloc::vec::Vec;

/// Material and regularization parameters. Units: Lame constants in
/// kN/mm^2, `g_c` in kN/mm, `eps` in mm.
#[derive(Debug, Clone, Copy)]
pub struct MaterialParams {
    pub mu: f64,
    pub lambda: f64,
    pub g_c: f64,
    pub kappa: f64,
    pub eps: f64,
}

impl MaterialParams {
    pub fn validate(&self) {
        assert!(self.mu > 0.0, "mu must be positive");
        assert!(3.0 * self.lambda + 2.0 * self.mu > 0.0, "bulk modulus must be positive");
        assert!(self.kappa > 0.0 && self.kappa < 1.0, "kappa must lie in (0, 1)");
        assert!(self.eps > 0.0, "eps must be positive");
        assert!(self.g_c > 0.0, "g_c must be positive");
    }

    /// Degradation `g(phi) = (1 - kappa) phi^2 + kappa`; the argument is
    /// clipped to `[0, 1]` so active-set overshoot cannot drop below kappa.
    pub fn degradation(&self, phi: f64) -> f64 {
        let p = phi.clamp(0.0, 1.0);
        (1.0 - self.kappa) * p * p + self.kappa
    }

    /// d g / d phi, with the same clipping.
    pub fn degradation_grad_factor(&self, phi: f64) -> f64 {
        2.0 * (1.0 - self.kappa) * phi.clamp(0.0, 1.0)
    }
}

/// Spectral decomposition of a strain into tensile and compressive parts.
#[derive(Debug, Clone, Copy)]
pub struct StrainSplit {
    pub e: Sym2,
    pub e_plus: Sym2,
    pub e_minus: Sym2,
    pub eigenvalues: [f64; 2],
    pub eigenvectors: [Vec2; 2],
}

pub fn split_strain(e: Sym2) -> StrainSplit {
    let (d, q) = e.eigen();
    let e_plus = Sym2::outer(q[0], d[0].max(0.0)) + Sym2::outer(q[1], d[1].max(0.0));
    let e_minus = Sym2::outer(q[0], d[0].min(0.0)) + Sym2::outer(q[1], d[1].min(0.0));
    StrainSplit { e, e_plus, e_minus, eigenvalues: d, eigenvectors: q }
}

/// Crack-driving and complementary stress parts.
#[derive(Debug, Clone, Copy)]
pub struct StressPair {
    pub plus: Sym2,
    pub minus: Sym2,
    /// Crack driving density `sigma_plus : E`, nonnegative.
    pub plus_contract_e: f64,
}

pub fn stress_unsplit(e: Sym2, mat: &MaterialParams) -> Sym2 {
    let tr = e.trace();
    Sym2::new(
        2.0 * mat.mu * e.xx + mat.lambda * tr,
        2.0 * mat.mu * e.yy + mat.lambda * tr,
        2.0 * mat.mu * e.xy,
    )
}

pub fn stress_split(e: Sym2, mat: &MaterialParams) -> StressPair {
    let split = split_strain(e);
    let tr = e.trace();
    let tr_pos = tr.max(0.0);
    let tr_neg = tr.min(0.0);
    let plus = split.e_plus.scale(2.0 * mat.mu) + Sym2::identity().scale(mat.lambda * tr_pos);
    let minus = split.e_minus.scale(2.0 * mat.mu) + Sym2::identity().scale(mat.lambda * tr_neg);
    let d = split.eigenvalues;
    let dp = [d[0].max(0.0), d[1].max(0.0)];
    let plus_contract_e = 2.0 * mat.mu * (dp[0] * dp[0] + dp[1] * dp[1])
        + mat.lambda * tr_pos * tr_pos;
    StressPair { plus, minus, plus_contract_e }
}

/// Linearized strain of a 2-component field inside a cell.
pub fn strain_at(view: &FieldView, mesh: &Mesh, cell: CellId, xi: f64, eta: f64) -> Sym2 {
    let gx = view.grad(mesh, cell, xi, eta, 0);
    let gy = view.grad(mesh, cell, xi, eta, 1);
    Sym2::new(gx.x, gy.y, 0.5 * (gx.y + gy.x))
}

/// Isotropic engineering-notation material matrix `g * C`.
fn iso_voigt(mu: f64, lambda: f64, g: f64) -> Voigt {
    [
        [g * (2.0 * mu + lambda), g * lambda, 0.0],
        [g * lambda, g * (2.0 * mu + lambda), 0.0],
        [0.0, 0.0, g * mu],
    ]
}

/// Linearized split operator at a reference strain: the tensile projection
/// is frozen at the eigenstructure of `e_ref` so the material matrix
/// `g C_plus + C_minus` is symmetric positive definite; at a fixed point the
/// frozen operator agrees with the nonlinear split.
fn lagged_split_voigt(e_ref: Sym2, mat: &MaterialParams, g: f64) -> Voigt {
    let (d, q) = e_ref.eigen();
    let s = [if d[0] > 0.0 { 1.0 } else { 0.0 }, if d[1] > 0.0 { 1.0 } else { 0.0 }];
    // off-diagonal (shear in the eigenframe) selector: derivative of the
    // positive part, continuous at coalescing eigenvalues
    let s_off = if (d[0] - d[1]).abs() > 1e-12 * (d[0].abs() + d[1].abs()).max(1e-300) {
        (d[0].max(0.0) - d[1].max(0.0)) / (d[0] - d[1])
    } else {
        s[0]
    };
    let h_tr = if e_ref.trace() > 0.0 { 1.0 } else { 0.0 };

    // response columns to the engineering basis strains
    let basis = [Sym2::new(1.0, 0.0, 0.0), Sym2::new(0.0, 1.0, 0.0), Sym2::new(0.0, 0.0, 0.5)];
    let mut c: Voigt = [[0.0; 3]; 3];
    for (j, &eb) in basis.iter().enumerate() {
        // eigenframe components of the basis strain
        let e11 = eb.ddot(Sym2::outer(q[0], 1.0));
        let e22 = eb.ddot(Sym2::outer(q[1], 1.0));
        let e12 = q[0].dot(eb.apply(q[1]));
        let plus = Sym2::outer(q[0], s[0] * e11)
            + Sym2::outer(q[1], s[1] * e22)
            + cross_sym(q[0], q[1]).scale(s_off * e12);
        let minus = eb - plus;
        let tr = eb.trace();
        let sigma = plus.scale(2.0 * mat.mu * g)
            + Sym2::identity().scale(g * mat.lambda * h_tr * tr)
            + minus.scale(2.0 * mat.mu)
            + Sym2::identity().scale(mat.lambda * (1.0 - h_tr) * tr);
        c[0][j] = sigma.xx;
        c[1][j] = sigma.yy;
        c[2][j] = sigma.xy;
    }
    debug_assert!({
        let scale = c.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        (c[0][1] - c[1][0]).abs() / scale < 1e-12
            && (c[0][2] - c[2][0]).abs() / scale < 1e-12
            && (c[1][2] - c[2][1]).abs() / scale < 1e-12
    });
    c
}

/// `q1 q2^T + q2 q1^T`.
fn cross_sym(q1: Vec2, q2: Vec2) -> Sym2 {
    Sym2::new(2.0 * q1.x * q2.x, 2.0 * q1.y * q2.y, q1.x * q2.y + q1.y * q2.x)
}

/// Nonlinear residual of the split formulation at `u`, with rows of pinned
/// (Dirichlet) dofs zeroed. Returns the assembled vector.
fn split_residual(
    mesh: &Mesh,
    dofs: &DofSystem,
    u_view: &FieldView,
    phi_view: &FieldView,
    mat: &MaterialParams,
    pinned: &[bool],
) -> Vec<f64> {
    let rule = &dofs.quad;
    let mut res = vec![0.0; 2 * dofs.n_master];
    for cell in 0..mesh.n_cells() {
        let h = mesh.cells[cell].edge;
        let area = h * h;
        let mut local = [0.0f64; 8];
        for &(xi, eta, w) in &rule.points {
            let e = strain_at(u_view, mesh, cell, xi, eta);
            let pair = stress_split(e, mat);
            let g = mat.degradation(phi_view.value(mesh, cell, xi, eta, 0));
            let sigma = pair.plus.scale(g) + pair.minus;
            let grads = crate::fespace::shape_grads(xi, eta);
            for i in 0..4 {
                let dx = grads[i].0 / h;
                let dy = grads[i].1 / h;
                // sigma : E(phi_i e_a)
                local[2 * i] -= (sigma.xx * dx + sigma.xy * dy) * w * area;
                local[2 * i + 1] -= (sigma.yy * dy + sigma.xy * dx) * w * area;
            }
        }
        let vs = mesh.cells[cell].verts;
        for i in 0..4 {
            for &(d, wgt) in dofs.expansion(vs[i]) {
                res[2 * d] += wgt * local[2 * i];
                res[2 * d + 1] += wgt * local[2 * i + 1];
            }
        }
    }
    for (i, r) in res.iter_mut().enumerate() {
        if pinned[i] {
            *r = 0.0;
        }
    }
    res
}

fn l2(v: &[f64]) -> f64 {
    float::sqrt(v.iter().map(|x| x * x).sum())
}

/// Per-step displacement solve: find `u` with
/// `< g(phi_prev) sigma(u), E(w) > = 0` (or the split form) for all test
/// functions vanishing on the Dirichlet boundary.
///
/// `dirichlet` lists `(system dof, value)` pairs; system dofs interleave
/// components as `2 * dof + comp`. With splitting enabled the tensile
/// projection is lagged and re-linearized until the nonlinear residual
/// drops below 1e-8 relative to the first iterate (at most 50 iterations).
pub fn solve_displacement(
    mesh: &Mesh,
    dofs: &DofSystem,
    phi_prev: &NodalField,
    dirichlet: &[(usize, f64)],
    mat: &MaterialParams,
    splitting: bool,
    warm_start: Option<&NodalField>,
) -> Result<NodalField> {
    let mut cache = None;
    solve_displacement_cached(
        mesh, dofs, phi_prev, dirichlet, mat, splitting, warm_start, &mut cache,
    )
}

/// [`solve_displacement`] with an externally owned solver so the symbolic
/// analysis and a (stale) numeric factor survive across time steps; the
/// stale factor preconditions the next solve.
#[allow(clippy::too_many_arguments)]
pub fn solve_displacement_cached(
    mesh: &Mesh,
    dofs: &DofSystem,
    phi_prev: &NodalField,
    dirichlet: &[(usize, f64)],
    mat: &MaterialParams,
    splitting: bool,
    warm_start: Option<&NodalField>,
    cache: &mut Option<PinnedSolver>,
) -> Result<NodalField> {
    mat.validate();
    let phi_view = FieldView::new(mesh, dofs, phi_prev);
    let zero_rhs = vec![0.0; 2 * dofs.n_master];
    fn install(cache: &mut Option<PinnedSolver>, matrix: crate::fespace::Csr, coords: &[Vec2]) {
        match cache {
            None => *cache = Some(PinnedSolver::new(matrix, Some(coords))),
            Some(s) => s.update_values(matrix),
        }
    }

    if !splitting {
        let pv = &phi_view;
        let matrix = assemble_elasticity(mesh, dofs, &|m: &Mesh, c: CellId, xi: f64, eta: f64| {
            iso_voigt(mat.mu, mat.lambda, mat.degradation(pv.value(m, c, xi, eta, 0)))
        });
        let coords = dofs.vector_dof_coords(mesh);
        install(cache, matrix, &coords);
        let x = cache.as_mut().unwrap().solve_pinned_warm(
            &zero_rhs,
            dirichlet,
            warm_start.map(|w| w.values.as_slice()),
        )?;
        return Ok(NodalField::from_values(dofs, 2, x));
    }

    let mut pinned = vec![false; 2 * dofs.n_master];
    for &(d, _) in dirichlet {
        pinned[d] = true;
    }
    let mut u = match warm_start {
        Some(w) => w.clone(),
        None => NodalField::zeros(dofs, 2),
    };
    let coords = dofs.vector_dof_coords(mesh);
    let mut first_residual = None;
    for it in 0..50 {
        let u_view = FieldView::new(mesh, dofs, &u);
        let pv = &phi_view;
        let uv = &u_view;
        let matrix = assemble_elasticity(mesh, dofs, &|m: &Mesh, c: CellId, xi: f64, eta: f64| {
            let e_ref = strain_at(uv, m, c, xi, eta);
            lagged_split_voigt(e_ref, mat, mat.degradation(pv.value(m, c, xi, eta, 0)))
        });
        install(cache, matrix, &coords);
        let x = cache.as_mut().unwrap().solve_pinned_warm(
            &zero_rhs,
            dirichlet,
            Some(u.values.as_slice()),
        )?;
        let increment = {
            let mut d2 = 0.0;
            let mut n2 = 0.0;
            for (new, old) in x.iter().zip(&u.values) {
                d2 += (new - old) * (new - old);
                n2 += new * new;
            }
            (float::sqrt(d2), float::sqrt(n2))
        };
        u = NodalField::from_values(dofs, 2, x);
        let u_view = FieldView::new(mesh, dofs, &u);
        let res = split_residual(mesh, dofs, &u_view, &phi_view, mat, &pinned);
        let r = l2(&res);
        let r0 = *first_residual.get_or_insert(r);
        // the relative criterion degenerates once warm starts put the first
        // iterate at the solver noise floor; a vanishing iteration increment
        // is accepted as converged too
        let stagnated = increment.0 <= 1e-12 * increment.1.max(1e-300);
        if r <= (1e-8 * r0).max(1e-14 * mat.mu) || stagnated {
            return Ok(u);
        }
        if it == 49 {
            return Err(Error::FixedPointMaxIter { iterations: 50, residual: r });
        }
    }
    unreachable!()
}

/// Per-component mask of boundary sides that carry natural conditions for
/// the displacement.
pub trait NeumannMask {
    fn neumann_components(&self, mesh: &Mesh, side: SideId) -> [bool; 2];
}

impl<F: Fn(&Mesh, SideId) -> [bool; 2]> NeumannMask for F {
    fn neumann_components(&self, mesh: &Mesh, side: SideId) -> [bool; 2] {
        self(mesh, side)
    }
}

/// Per-node contributions of the standard residual estimator for the
/// elasticity equation.
#[derive(Debug, Clone)]
pub struct UEstimate {
    /// Indexed by master dof: `[interior residual, interior jumps, Neumann jumps]`.
    pub per_node: Vec<[f64; 3]>,
    /// Root-sum-square totals per contribution.
    pub totals: [f64; 3],
}

impl UEstimate {
    pub fn total(&self) -> f64 {
        float::sqrt(self.totals.iter().map(|t| t * t).sum())
    }

    /// Per-node composite `sqrt(sum_k eta_k,p^2)`.
    pub fn node_composite(&self, dof: usize) -> f64 {
        float::sqrt(self.per_node[dof].iter().map(|v| v * v).sum())
    }
}

/// Standard residual estimator for the displacement equation. The stress is
/// always the unsplit one. Interior residual and jumps use exact per-cell
/// differentiation of the bilinear fields.
pub fn estimate_u(
    mesh: &Mesh,
    dofs: &DofSystem,
    patches: &[Option<Patch>],
    u: &NodalField,
    phi_prev: &NodalField,
    mat: &MaterialParams,
    neumann: &impl NeumannMask,
) -> UEstimate {
    estimate_u_with_order(mesh, dofs, patches, u, phi_prev, mat, neumann, 4)
}

/// Same estimator at an explicit quadrature order (the default order is
/// already exact; higher orders serve as a recomputation cross-check).
#[allow(clippy::too_many_arguments)]
pub fn estimate_u_with_order(
    mesh: &Mesh,
    dofs: &DofSystem,
    patches: &[Option<Patch>],
    u: &NodalField,
    phi_prev: &NodalField,
    mat: &MaterialParams,
    neumann: &impl NeumannMask,
    order: usize,
) -> UEstimate {
    let u_view = FieldView::new(mesh, dofs, u);
    let phi_view = FieldView::new(mesh, dofs, phi_prev);
    let rule = CellRule::tensor(order);
    let side_rule = crate::quadrature::gauss_01(order);

    // per-cell integral of |r(u)|^2
    let mut cell_r2 = vec![0.0f64; mesh.n_cells()];
    for cell in 0..mesh.n_cells() {
        let h = mesh.cells[cell].edge;
        let area = h * h;
        // mixed second derivative coefficients of each component
        let vs = mesh.cells[cell].verts;
        let mut dd = [0.0f64; 2];
        for comp in 0..2 {
            let c = [
                u_view.at_vertex(vs[0], comp),
                u_view.at_vertex(vs[1], comp),
                u_view.at_vertex(vs[2], comp),
                u_view.at_vertex(vs[3], comp),
            ];
            dd[comp] = (c[0] - c[1] + c[2] - c[3]) / (h * h);
        }
        // div sigma is constant per cell
        let div_sigma = Vec2::new((mat.lambda + mat.mu) * dd[1], (mat.lambda + mat.mu) * dd[0]);
        let mut acc = 0.0;
        for &(xi, eta, w) in &rule.points {
            let e = strain_at(&u_view, mesh, cell, xi, eta);
            let sigma = stress_unsplit(e, mat);
            let phi = phi_view.value(mesh, cell, xi, eta, 0);
            let g = mat.degradation(phi);
            let grad_g = phi_view
                .grad(mesh, cell, xi, eta, 0)
                * mat.degradation_grad_factor(phi);
            let r = sigma.apply(grad_g) + div_sigma * g;
            acc += r.dot(r) * w * area;
        }
        cell_r2[cell] = acc;
    }

    // per-side integrals of |J|^2
    let mut side_j2 = vec![0.0f64; mesh.sides.len()];
    let mut side_is_neumann = vec![[false; 2]; mesh.sides.len()];
    for sid in 0..mesh.sides.len() {
        let side = &mesh.sides[sid];
        let pa = mesh.vertices[side.a].pos;
        let pb = mesh.vertices[side.b].pos;
        let traction = |cell: CellId, p: Vec2, n: Vec2| -> Vec2 {
            let (xi, eta) = mesh.local_coords(cell, p);
            let (xi, eta) = (xi.clamp(0.0, 1.0), eta.clamp(0.0, 1.0));
            let e = strain_at(&u_view, mesh, cell, xi, eta);
            let sigma = stress_unsplit(e, mat);
            let g = mat.degradation(phi_view.value(mesh, cell, xi, eta, 0));
            sigma.apply(n) * g
        };
        match side.cells {
            [Some(neg), Some(pos)] => {
                let n = side.normal();
                let mut acc = 0.0;
                for &(t, w) in &side_rule {
                    let p = Vec2::new(pa.x + t * (pb.x - pa.x), pa.y + t * (pb.y - pa.y));
                    let j = traction(neg, p, n) - traction(pos, p, n);
                    acc += j.dot(j) * w * side.length;
                }
                side_j2[sid] = acc;
            }
            _ => {
                let mask = neumann.neumann_components(mesh, sid);
                side_is_neumann[sid] = mask;
                if mask[0] || mask[1] {
                    let cell = side.boundary_cell();
                    let n = side.outward_normal();
                    let mut acc = 0.0;
                    for &(t, w) in &side_rule {
                        let p = Vec2::new(pa.x + t * (pb.x - pa.x), pa.y + t * (pb.y - pa.y));
                        let j = traction(cell, p, n);
                        let jx = if mask[0] { j.x } else { 0.0 };
                        let jy = if mask[1] { j.y } else { 0.0 };
                        acc += (jx * jx + jy * jy) * w * side.length;
                    }
                    side_j2[sid] = acc;
                }
            }
        }
    }

    let mut per_node = vec![[0.0f64; 3]; dofs.n_master];
    for d in 0..dofs.n_master {
        let v = dofs.vertex_of_dof[d];
        let patch = patches[v].as_ref().expect("master vertex without patch");
        let r2: f64 = patch.cells.iter().map(|&c| cell_r2[c]).sum();
        let ji2: f64 = patch.interior_sides.iter().map(|&s| side_j2[s]).sum();
        let jn2: f64 = patch
            .boundary_sides
            .iter()
            .filter(|&&s| side_is_neumann[s][0] || side_is_neumann[s][1])
            .map(|&s| side_j2[s])
            .sum();
        per_node[d] = [
            patch.h * float::sqrt(r2),
            float::sqrt(patch.h) * float::sqrt(ji2),
            float::sqrt(patch.h) * float::sqrt(jn2),
        ];
    }
    let mut totals = [0.0f64; 3];
    for row in &per_node {
        for k in 0..3 {
            totals[k] += row[k] * row[k];
        }
    }
    for t in &mut totals {
        *t = float::sqrt(*t);
    }
    UEstimate { per_node, totals }
}

#[cfg(test)]
mod tests;
