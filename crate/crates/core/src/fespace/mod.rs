//! Bilinear finite element spaces on quadtree meshes.
//!
//! Hanging vertices carry no degrees of freedom: their values are the
//! average of the two masters of the coarse edge they sit on, which makes
//! the space conforming. Constraints are condensed at assembly time so the
//! solvers see plain symmetric positive definite systems on master
//! unknowns.

pub mod cholesky;
pub mod sparse;

pub use cholesky::SparseCholesky;
pub use sparse::{Csr, SparseSystem};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::mesh::{CellId, Mesh, VertId};
use crate::quadrature::CellRule;
use alloc::vec;
use alloc::vec::Vec;

/// Q1 shape functions on `[0,1]^2`, corners ordered SW, SE, NE, NW.
pub fn shapes(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        xi * eta,
        (1.0 - xi) * eta,
    ]
}

/// Reference-cell gradients `(d/dxi, d/deta)` of the Q1 shape functions.
pub fn shape_grads(xi: f64, eta: f64) -> [(f64, f64); 4] {
    [
        (-(1.0 - eta), -(1.0 - xi)),
        (1.0 - eta, -xi),
        (eta, xi),
        (-eta, 1.0 - xi),
    ]
}

/// Degree-of-freedom numbering with hanging-vertex constraints.
#[derive(Debug, Clone)]
pub struct DofSystem {
    mesh_id: u64,
    pub n_master: usize,
    /// Scalar dof of each vertex; `None` for hanging vertices.
    pub dof_of_vertex: Vec<Option<usize>>,
    pub vertex_of_dof: Vec<VertId>,
    /// Per-vertex expansion into `(dof, weight)` pairs; identity for
    /// masters, the resolved edge average for hanging vertices.
    expansions: Vec<Vec<(usize, f64)>>,
    /// Default assembly quadrature.
    pub quad: CellRule,
}

impl DofSystem {
    pub fn new(mesh: &Mesh) -> DofSystem {
        Self::with_quadrature(mesh, 3)
    }

    pub fn with_quadrature(mesh: &Mesh, order: usize) -> DofSystem {
        let mut dof_of_vertex = vec![None; mesh.n_vertices()];
        let mut vertex_of_dof = Vec::new();
        for v in 0..mesh.n_vertices() {
            if !mesh.vertices[v].is_hanging() {
                dof_of_vertex[v] = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        let expansions = (0..mesh.n_vertices())
            .map(|v| {
                mesh.resolved_constraint(v)
                    .into_iter()
                    .map(|(m, w)| (dof_of_vertex[m].expect("master is hanging"), w))
                    .collect::<Vec<_>>()
            })
            .collect();
        DofSystem {
            mesh_id: mesh.id(),
            n_master: vertex_of_dof.len(),
            dof_of_vertex,
            vertex_of_dof,
            expansions,
            quad: CellRule::tensor(order),
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn expansion(&self, v: VertId) -> &[(usize, f64)] {
        &self.expansions[v]
    }

    /// Coordinates of each master dof (used by the fill-reducing ordering).
    pub fn dof_coords(&self, mesh: &Mesh) -> Vec<Vec2> {
        self.vertex_of_dof.iter().map(|&v| mesh.vertices[v].pos).collect()
    }

    /// Coordinates repeated per component for vector-valued systems.
    pub fn vector_dof_coords(&self, mesh: &Mesh) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(2 * self.n_master);
        for &v in &self.vertex_of_dof {
            out.push(mesh.vertices[v].pos);
            out.push(mesh.vertices[v].pos);
        }
        out
    }
}

/// Coefficient vector of a finite element function on master dofs.
/// Components are interleaved: `values[dof * ncomp + comp]`.
#[derive(Debug, Clone)]
pub struct NodalField {
    mesh_id: u64,
    pub ncomp: usize,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(dofs: &DofSystem, ncomp: usize) -> NodalField {
        NodalField { mesh_id: dofs.mesh_id, ncomp, values: vec![0.0; dofs.n_master * ncomp] }
    }

    pub fn constant(dofs: &DofSystem, ncomp: usize, value: f64) -> NodalField {
        NodalField { mesh_id: dofs.mesh_id, ncomp, values: vec![value; dofs.n_master * ncomp] }
    }

    pub fn from_values(dofs: &DofSystem, ncomp: usize, values: Vec<f64>) -> NodalField {
        assert_eq!(values.len(), dofs.n_master * ncomp);
        NodalField { mesh_id: dofs.mesh_id, ncomp, values }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn get(&self, dof: usize, comp: usize) -> f64 {
        self.values[dof * self.ncomp + comp]
    }

    pub fn set(&mut self, dof: usize, comp: usize, v: f64) {
        self.values[dof * self.ncomp + comp] = v;
    }

    /// Nodal evaluation by a function of the master vertex position.
    pub fn from_fn(
        mesh: &Mesh,
        dofs: &DofSystem,
        ncomp: usize,
        mut f: impl FnMut(Vec2, usize) -> f64,
    ) -> NodalField {
        let mut field = NodalField::zeros(dofs, ncomp);
        for d in 0..dofs.n_master {
            let p = mesh.vertices[dofs.vertex_of_dof[d]].pos;
            for c in 0..ncomp {
                field.values[d * ncomp + c] = f(p, c);
            }
        }
        field
    }
}

/// Vertex-expanded view of a field for fast cell-local evaluation. The
/// restriction of a constrained field to any leaf cell is the bilinear
/// interpolant of its four corner values.
#[derive(Debug, Clone)]
pub struct FieldView {
    pub ncomp: usize,
    vals: Vec<f64>,
}

impl FieldView {
    pub fn new(mesh: &Mesh, dofs: &DofSystem, field: &NodalField) -> FieldView {
        debug_assert_eq!(field.mesh_id(), dofs.mesh_id);
        debug_assert_eq!(dofs.mesh_id, mesh.id());
        let ncomp = field.ncomp;
        let mut vals = vec![0.0; mesh.n_vertices() * ncomp];
        for v in 0..mesh.n_vertices() {
            for &(d, w) in dofs.expansion(v) {
                for c in 0..ncomp {
                    vals[v * ncomp + c] += w * field.values[d * ncomp + c];
                }
            }
        }
        FieldView { ncomp, vals }
    }

    pub fn at_vertex(&self, v: VertId, comp: usize) -> f64 {
        self.vals[v * self.ncomp + comp]
    }

    fn corners(&self, mesh: &Mesh, cell: CellId, comp: usize) -> [f64; 4] {
        let vs = mesh.cells[cell].verts;
        [
            self.vals[vs[0] * self.ncomp + comp],
            self.vals[vs[1] * self.ncomp + comp],
            self.vals[vs[2] * self.ncomp + comp],
            self.vals[vs[3] * self.ncomp + comp],
        ]
    }

    pub fn value(&self, mesh: &Mesh, cell: CellId, xi: f64, eta: f64, comp: usize) -> f64 {
        let n = shapes(xi, eta);
        let c = self.corners(mesh, cell, comp);
        n[0] * c[0] + n[1] * c[1] + n[2] * c[2] + n[3] * c[3]
    }

    /// Physical gradient within a cell.
    pub fn grad(&self, mesh: &Mesh, cell: CellId, xi: f64, eta: f64, comp: usize) -> Vec2 {
        let g = shape_grads(xi, eta);
        let c = self.corners(mesh, cell, comp);
        let h = mesh.cells[cell].edge;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for i in 0..4 {
            gx += g[i].0 * c[i];
            gy += g[i].1 * c[i];
        }
        Vec2::new(gx / h, gy / h)
    }

    /// Evaluation at an arbitrary physical point.
    pub fn value_at_point(&self, mesh: &Mesh, p: Vec2, comp: usize) -> Option<f64> {
        let cell = mesh.leaf_at_point(p)?;
        let (xi, eta) = mesh.local_coords(cell, p);
        Some(self.value(mesh, cell, xi, eta, comp))
    }
}

/// Scalar coefficient evaluated at reference points of cells.
pub trait Coefficient {
    fn eval(&self, mesh: &Mesh, cell: CellId, xi: f64, eta: f64) -> f64;
}

impl<F: Fn(&Mesh, CellId, f64, f64) -> f64> Coefficient for F {
    fn eval(&self, mesh: &Mesh, cell: CellId, xi: f64, eta: f64) -> f64 {
        self(mesh, cell, xi, eta)
    }
}

/// Constant-in-space coefficient.
pub struct Constant(pub f64);

impl Coefficient for Constant {
    fn eval(&self, _: &Mesh, _: CellId, _: f64, _: f64) -> f64 {
        self.0
    }
}

/// Assembles `A[q,r] = int c phi_q phi_r + kd int grad phi_q . grad phi_r`
/// with hanging constraints condensed. The right-hand side of the returned
/// system is zero.
///
/// Rejects a negative reaction coefficient at any quadrature point.
pub fn assemble_bilinear(
    mesh: &Mesh,
    dofs: &DofSystem,
    coeff: &impl Coefficient,
    kd: f64,
) -> Result<SparseSystem> {
    debug_assert_eq!(dofs.mesh_id, mesh.id());
    let rule = &dofs.quad;
    let mut trip: Vec<(u32, u32, f64)> = Vec::with_capacity(mesh.n_cells() * 36);
    for cell in 0..mesh.n_cells() {
        let h = mesh.cells[cell].edge;
        let area = h * h;
        let mut local = [[0.0f64; 4]; 4];
        for &(xi, eta, w) in &rule.points {
            let c = coeff.eval(mesh, cell, xi, eta);
            if c < 0.0 {
                return Err(Error::NegativeCoefficient { cell, value: c });
            }
            let n = shapes(xi, eta);
            let g = shape_grads(xi, eta);
            for i in 0..4 {
                for j in i..4 {
                    let mass = c * n[i] * n[j];
                    let stiff = kd * (g[i].0 * g[j].0 + g[i].1 * g[j].1) / (h * h);
                    local[i][j] += (mass + stiff) * w * area;
                }
            }
        }
        for i in 0..4 {
            for j in 0..i {
                local[i][j] = local[j][i];
            }
        }
        distribute_scalar(mesh, dofs, cell, &local, &mut trip);
    }
    let matrix = Csr::from_triplets(dofs.n_master, trip);
    let rhs = vec![0.0; dofs.n_master];
    Ok(SparseSystem { matrix, rhs })
}

fn distribute_scalar(
    mesh: &Mesh,
    dofs: &DofSystem,
    cell: CellId,
    local: &[[f64; 4]; 4],
    trip: &mut Vec<(u32, u32, f64)>,
) {
    let vs = mesh.cells[cell].verts;
    for i in 0..4 {
        for j in 0..4 {
            let k = local[i][j];
            if k == 0.0 {
                continue;
            }
            for &(di, wi) in dofs.expansion(vs[i]) {
                for &(dj, wj) in dofs.expansion(vs[j]) {
                    trip.push((di as u32, dj as u32, wi * wj * k));
                }
            }
        }
    }
}

/// Assembles the load vector `b_q = int f phi_q`.
pub fn assemble_load(mesh: &Mesh, dofs: &DofSystem, f: &impl Coefficient) -> Vec<f64> {
    let rule = &dofs.quad;
    let mut b = vec![0.0; dofs.n_master];
    for cell in 0..mesh.n_cells() {
        let h = mesh.cells[cell].edge;
        let area = h * h;
        let mut local = [0.0f64; 4];
        for &(xi, eta, w) in &rule.points {
            let v = f.eval(mesh, cell, xi, eta);
            let n = shapes(xi, eta);
            for i in 0..4 {
                local[i] += v * n[i] * w * area;
            }
        }
        let vs = mesh.cells[cell].verts;
        for i in 0..4 {
            for &(d, wgt) in dofs.expansion(vs[i]) {
                b[d] += wgt * local[i];
            }
        }
    }
    b
}

/// Engineering-notation material matrix at a quadrature point: maps
/// `(e_xx, e_yy, gamma_xy)` to `(s_xx, s_yy, s_xy)`.
pub type Voigt = [[f64; 3]; 3];

/// Assembles the vector-valued elasticity operator
/// `K[(q,a),(r,b)] = int E(phi_q e_a) : C : E(phi_r e_b)` with the material
/// matrix supplied per quadrature point. System dofs interleave components:
/// `2 * dof + comp`.
pub fn assemble_elasticity(
    mesh: &Mesh,
    dofs: &DofSystem,
    material: &impl Fn(&Mesh, CellId, f64, f64) -> Voigt,
) -> Csr {
    let rule = &dofs.quad;
    let mut trip: Vec<(u32, u32, f64)> = Vec::with_capacity(mesh.n_cells() * 144);
    for cell in 0..mesh.n_cells() {
        let h = mesh.cells[cell].edge;
        let area = h * h;
        let mut local = [[0.0f64; 8]; 8];
        for &(xi, eta, w) in &rule.points {
            let c = material(mesh, cell, xi, eta);
            let g = shape_grads(xi, eta);
            // B matrix columns per (node, comp)
            let mut b = [[0.0f64; 8]; 3];
            for i in 0..4 {
                let dx = g[i].0 / h;
                let dy = g[i].1 / h;
                b[0][2 * i] = dx;
                b[1][2 * i + 1] = dy;
                b[2][2 * i] = dy;
                b[2][2 * i + 1] = dx;
            }
            for p in 0..8 {
                // cb = C * B[:,p]
                let cb = [
                    c[0][0] * b[0][p] + c[0][1] * b[1][p] + c[0][2] * b[2][p],
                    c[1][0] * b[0][p] + c[1][1] * b[1][p] + c[1][2] * b[2][p],
                    c[2][0] * b[0][p] + c[2][1] * b[1][p] + c[2][2] * b[2][p],
                ];
                for q in p..8 {
                    let v = b[0][q] * cb[0] + b[1][q] * cb[1] + b[2][q] * cb[2];
                    local[p][q] += v * w * area;
                }
            }
        }
        for p in 0..8 {
            for q in 0..p {
                local[p][q] = local[q][p];
            }
        }
        let vs = mesh.cells[cell].verts;
        for i in 0..4 {
            for a in 0..2 {
                for j in 0..4 {
                    for bcomp in 0..2 {
                        let k = local[2 * i + a][2 * j + bcomp];
                        if k == 0.0 {
                            continue;
                        }
                        for &(di, wi) in dofs.expansion(vs[i]) {
                            for &(dj, wj) in dofs.expansion(vs[j]) {
                                trip.push((
                                    (2 * di + a) as u32,
                                    (2 * dj + bcomp) as u32,
                                    wi * wj * k,
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    Csr::from_triplets(2 * dofs.n_master, trip)
}

/// Direct solver wrapper with symbolic reuse and symmetric elimination of
/// pinned unknowns (Dirichlet data or active obstacle nodes).
pub struct PinnedSolver {
    base: Csr,
    chol: SparseCholesky,
    work: Csr,
}

impl PinnedSolver {
    pub fn new(matrix: Csr, coords: Option<&[Vec2]>) -> PinnedSolver {
        let chol = SparseCholesky::new(&matrix, coords);
        let work = matrix.clone();
        PinnedSolver { base: matrix, chol, work }
    }

    pub fn matrix(&self) -> &Csr {
        &self.base
    }

    /// Replaces the numeric values (same pattern, e.g. new coefficients).
    pub fn update_values(&mut self, matrix: Csr) {
        assert_eq!(matrix.indptr, self.base.indptr, "pattern changed");
        self.base = matrix;
    }

    /// Solves `A x = b` with `x[dof] = value` enforced for every pinned dof
    /// by symmetric elimination; the reduced system stays SPD.
    ///
    /// The factorization of the previously solved system serves as a
    /// conjugate-gradient preconditioner: time stepping and active-set
    /// iterations change the matrix slowly, so most solves converge in a
    /// few iterations and the numeric factorization is only redone when the
    /// iteration stalls. The relative-residual contract of 1e-10 is
    /// verified on the eliminated system either way.
    pub fn solve_pinned(&mut self, rhs: &[f64], pinned: &[(usize, f64)]) -> Result<Vec<f64>> {
        self.solve_pinned_warm(rhs, pinned, None)
    }

    pub fn solve_pinned_warm(
        &mut self,
        rhs: &[f64],
        pinned: &[(usize, f64)],
        warm: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let n = self.base.n;
        let mut is_pinned = vec![false; n];
        let mut pin_val = vec![0.0; n];
        for &(d, v) in pinned {
            is_pinned[d] = true;
            pin_val[d] = v;
        }
        let mut b = rhs.to_vec();
        // move known columns to the right-hand side
        for r in 0..n {
            if is_pinned[r] {
                continue;
            }
            let (cols, vals) = self.base.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if is_pinned[*c as usize] {
                    b[r] -= v * pin_val[*c as usize];
                }
            }
        }
        // zero pinned rows/columns, unit diagonal
        self.work.values.copy_from_slice(&self.base.values);
        for r in 0..n {
            let (lo, hi) = (self.work.indptr[r], self.work.indptr[r + 1]);
            for k in lo..hi {
                let c = self.work.indices[k] as usize;
                if is_pinned[r] || is_pinned[c] {
                    self.work.values[k] = if r == c { 1.0 } else { 0.0 };
                }
            }
        }
        for &(d, v) in pinned {
            b[d] = v;
        }
        if let Some((mut x, _)) = self.chol.solve_precond_cg(&self.work, &b, warm, 1e-12, 40) {
            for &(d, v) in pinned {
                x[d] = v;
            }
            if cholesky::relative_residual(&self.work, &x, &b) <= 1e-11 {
                return Ok(x);
            }
        }
        self.chol.refactor(&self.work)?;
        let (mut x, _rel) = self.chol.solve_refined(&self.work, &b, 1e-10)?;
        for &(d, v) in pinned {
            x[d] = v;
        }
        Ok(x)
    }
}

/// Solves a symmetric positive definite system to relative residual 1e-10.
pub fn solve_spd(system: &SparseSystem, coords: Option<&[Vec2]>) -> Result<Vec<f64>> {
    let mut chol = SparseCholesky::new(&system.matrix, coords);
    chol.refactor(&system.matrix)?;
    let (x, _rel) = chol.solve_refined(&system.matrix, &system.rhs, 1e-10)?;
    Ok(x)
}

/// Nodal interpolation of a field onto a refinement of its mesh: every new
/// master value is the old field evaluated at that vertex.
pub fn interpolate_nodal(
    field: &NodalField,
    old_mesh: &Mesh,
    old_dofs: &DofSystem,
    new_mesh: &Mesh,
    new_dofs: &DofSystem,
) -> Result<NodalField> {
    debug_assert_eq!(field.mesh_id(), old_mesh.id());
    if !new_mesh.is_refinement_of(old_mesh) {
        return Err(Error::MeshesNotNested);
    }
    let view = FieldView::new(old_mesh, old_dofs, field);
    let ncomp = field.ncomp;
    let mut out = NodalField::zeros(new_dofs, ncomp);
    for d in 0..new_dofs.n_master {
        let p = new_mesh.vertices[new_dofs.vertex_of_dof[d]].pos;
        let cell = old_mesh
            .leaf_at_point(p)
            .expect("vertex of nested mesh outside coarse mesh");
        let (xi, eta) = old_mesh.local_coords(cell, p);
        for c in 0..ncomp {
            out.values[d * ncomp + c] = view.value(old_mesh, cell, xi, eta, c);
        }
    }
    Ok(out)
}

/// Integrates a callback over every cell of `fine`, which must refine (or
/// equal) `coarse`; the callback receives the fine cell, its containing
/// coarse cell, the physical point and the physical quadrature weight.
pub fn integrate_nested(
    fine: &Mesh,
    coarse: &Mesh,
    order: usize,
    mut f: impl FnMut(CellId, CellId, Vec2, f64) -> f64,
) -> f64 {
    let rule = CellRule::tensor(order);
    let mut total = 0.0;
    for fc in 0..fine.n_cells() {
        let cc = coarse
            .containing_cell(fine, fc)
            .expect("meshes not nested in integrate_nested");
        let area = fine.cells[fc].area();
        for &(xi, eta, w) in &rule.points {
            let p = fine.cells[fc].map(xi, eta);
            total += f(fc, cc, p, w * area);
        }
    }
    total
}

/// Integrates a callback along the axis-aligned segment `[a, b]`,
/// recursively splitting at points where any of the supplied meshes has a
/// vertex strictly inside (so piecewise-polynomial integrands stay
/// polynomial on each piece).
pub fn integrate_segment(
    meshes: &[&Mesh],
    a: Vec2,
    b: Vec2,
    order: usize,
    f: &mut impl FnMut(Vec2, f64) -> f64,
) -> f64 {
    for mesh in meshes {
        if let Some(mid) = mesh.has_vertex_strictly_inside(a, b) {
            return integrate_segment(meshes, a, mid, order, f)
                + integrate_segment(meshes, mid, b, order, f);
        }
    }
    let len = a.dist(b);
    let mut total = 0.0;
    for (t, w) in crate::quadrature::gauss_01(order) {
        let p = Vec2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        total += f(p, w * len);
    }
    total
}

#[cfg(test)]
mod tests;
