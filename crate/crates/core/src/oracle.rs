//! Independent brute-force verifiers used by the test suites.
//!
//! Everything here deliberately avoids the production assembly and solver
//! paths: dense matrices, nested-loop quadrature at doubled order, and
//! exhaustive active-set enumeration.

use crate::error::{Error, Result};
use crate::fespace::{Coefficient, DofSystem, FieldView, NodalField, Voigt};
use crate::geom::Vec2;
use crate::mesh::{CellId, Mesh};
use crate::quadrature::CellRule;
use alloc::vec;
use alloc::vec::Vec;

/// Basis value of master dof `d` inside a cell, from first principles.
fn basis_value(mesh: &Mesh, dofs: &DofSystem, d: usize, cell: CellId, xi: f64, eta: f64) -> f64 {
    let n = crate::fespace::shapes(xi, eta);
    let vs = mesh.cells[cell].verts;
    let mut acc = 0.0;
    for i in 0..4 {
        for &(dd, w) in dofs.expansion(vs[i]) {
            if dd == d {
                acc += w * n[i];
            }
        }
    }
    acc
}

fn basis_grad(mesh: &Mesh, dofs: &DofSystem, d: usize, cell: CellId, xi: f64, eta: f64) -> Vec2 {
    let g = crate::fespace::shape_grads(xi, eta);
    let h = mesh.cells[cell].edge;
    let vs = mesh.cells[cell].verts;
    let mut acc = Vec2::ZERO;
    for i in 0..4 {
        for &(dd, w) in dofs.expansion(vs[i]) {
            if dd == d {
                acc.x += w * g[i].0 / h;
                acc.y += w * g[i].1 / h;
            }
        }
    }
    acc
}

/// Dense assembly of the reaction-diffusion bilinear form by nested loops
/// over dof pairs at doubled quadrature order.
pub fn dense_assembly(
    mesh: &Mesh,
    dofs: &DofSystem,
    coeff: &impl Coefficient,
    kd: f64,
) -> Vec<Vec<f64>> {
    assert!(mesh.n_cells() <= 100, "dense assembly is for small meshes");
    let n = dofs.n_master;
    let rule = CellRule::tensor(6);
    let mut a = vec![vec![0.0f64; n]; n];
    for cell in 0..mesh.n_cells() {
        let area = mesh.cells[cell].area();
        // dofs with support on this cell
        let mut active: Vec<usize> = Vec::new();
        for &v in &mesh.cells[cell].verts {
            for &(d, _) in dofs.expansion(v) {
                if !active.contains(&d) {
                    active.push(d);
                }
            }
        }
        for &(xi, eta, w) in &rule.points {
            let c = coeff.eval(mesh, cell, xi, eta);
            for &p in &active {
                let np = basis_value(mesh, dofs, p, cell, xi, eta);
                let gp = basis_grad(mesh, dofs, p, cell, xi, eta);
                for &q in &active {
                    let nq = basis_value(mesh, dofs, q, cell, xi, eta);
                    let gq = basis_grad(mesh, dofs, q, cell, xi, eta);
                    a[p][q] += (c * np * nq + kd * gp.dot(gq)) * w * area;
                }
            }
        }
    }
    a
}

/// Dense assembly of the (possibly degraded) linear elasticity operator.
/// `material` supplies the engineering-notation matrix per point.
pub fn dense_elasticity(
    mesh: &Mesh,
    dofs: &DofSystem,
    material: &impl Fn(&Mesh, CellId, f64, f64) -> Voigt,
) -> Vec<Vec<f64>> {
    assert!(mesh.n_cells() <= 100, "dense assembly is for small meshes");
    let n = 2 * dofs.n_master;
    let rule = CellRule::tensor(6);
    let mut a = vec![vec![0.0f64; n]; n];
    for cell in 0..mesh.n_cells() {
        let area = mesh.cells[cell].area();
        let mut active: Vec<usize> = Vec::new();
        for &v in &mesh.cells[cell].verts {
            for &(d, _) in dofs.expansion(v) {
                if !active.contains(&d) {
                    active.push(d);
                }
            }
        }
        for &(xi, eta, w) in &rule.points {
            let c = material(mesh, cell, xi, eta);
            for &p in &active {
                let gp = basis_grad(mesh, dofs, p, cell, xi, eta);
                for a_comp in 0..2 {
                    // engineering strain of phi_p e_a
                    let ep = if a_comp == 0 {
                        [gp.x, 0.0, gp.y]
                    } else {
                        [0.0, gp.y, gp.x]
                    };
                    let sp = [
                        c[0][0] * ep[0] + c[0][1] * ep[1] + c[0][2] * ep[2],
                        c[1][0] * ep[0] + c[1][1] * ep[1] + c[1][2] * ep[2],
                        c[2][0] * ep[0] + c[2][1] * ep[1] + c[2][2] * ep[2],
                    ];
                    for &q in &active {
                        let gq = basis_grad(mesh, dofs, q, cell, xi, eta);
                        for b_comp in 0..2 {
                            let eq = if b_comp == 0 {
                                [gq.x, 0.0, gq.y]
                            } else {
                                [0.0, gq.y, gq.x]
                            };
                            a[2 * p + a_comp][2 * q + b_comp] +=
                                (sp[0] * eq[0] + sp[1] * eq[1] + sp[2] * eq[2]) * w * area;
                        }
                    }
                }
            }
        }
    }
    a
}

/// In-place dense Cholesky solve used by the oracles.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let mut pivot = a[k][k];
        for j in 0..k {
            pivot -= a[k][j] * a[k][j];
        }
        if pivot <= 0.0 {
            return None;
        }
        let lkk = crate::float::sqrt(pivot);
        a[k][k] = lkk;
        for i in (k + 1)..n {
            let mut v = a[i][k];
            for j in 0..k {
                v -= a[i][j] * a[k][j];
            }
            a[i][k] = v / lkk;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for j in 0..i {
            v -= a[i][j] * b[j];
        }
        b[i] = v / a[i][i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for j in (i + 1)..n {
            v -= a[j][i] * b[j];
        }
        b[i] = v / a[i][i];
    }
    Some(b)
}

/// Solves the dense obstacle problem `A x = b, x <= o` by enumerating all
/// active subsets and keeping the KKT point. Feasibility tolerance 1e-12 on
/// both primal and dual side.
pub fn enumerate_vi(a: &[Vec<f64>], b: &[f64], obstacle: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    assert!(n <= 16, "enumeration limited to 16 free nodes");
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut found: Option<Vec<f64>> = None;
    for mask in 0u32..(1 << n) {
        let active: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
        // reduced system on free nodes
        let ared: Vec<Vec<f64>> =
            free.iter().map(|&i| free.iter().map(|&j| a[i][j]).collect()).collect();
        let bred: Vec<f64> = free
            .iter()
            .map(|&i| b[i] - active.iter().map(|&j| a[i][j] * obstacle[j]).sum::<f64>())
            .collect();
        let xfree = match dense_solve(ared, bred) {
            Some(x) => x,
            None => continue,
        };
        let mut x = vec![0.0; n];
        for &i in &active {
            x[i] = obstacle[i];
        }
        for (k, &i) in free.iter().enumerate() {
            x[i] = xfree[k];
        }
        // primal feasibility
        if x.iter().zip(obstacle).any(|(xi, oi)| *xi > oi + 1e-12 * scale.max(1.0)) {
            continue;
        }
        // dual feasibility on the active set
        let lambda: Vec<f64> = (0..n)
            .map(|i| b[i] - (0..n).map(|j| a[i][j] * x[j]).sum::<f64>())
            .collect();
        if active.iter().any(|&i| lambda[i] < -1e-12 * scale) {
            continue;
        }
        match &found {
            None => found = Some(x),
            Some(prev) => {
                let dev = prev
                    .iter()
                    .zip(&x)
                    .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
                if dev > 1e-9 {
                    return Err(Error::SolveFailed { residual: dev });
                }
            }
        }
    }
    found.ok_or(Error::SolveFailed { residual: f64::INFINITY })
}

/// Weighted error norm between a coarse-mesh field and a reference field on
/// a nested finer mesh: `sqrt(int gw |grad d|^2 + vw d^2)` with the weights
/// supplied per point of the fine mesh.
#[allow(clippy::too_many_arguments)]
pub fn reference_error(
    fine_mesh: &Mesh,
    fine_dofs: &DofSystem,
    fine_field: &NodalField,
    coarse_mesh: &Mesh,
    coarse_dofs: &DofSystem,
    coarse_field: &NodalField,
    order: usize,
    weights: &impl Fn(CellId, Vec2) -> (f64, f64),
) -> Result<f64> {
    if !fine_mesh.is_refinement_of(coarse_mesh) {
        return Err(Error::MeshesNotNested);
    }
    let fine = FieldView::new(fine_mesh, fine_dofs, fine_field);
    let coarse = FieldView::new(coarse_mesh, coarse_dofs, coarse_field);
    let ncomp = fine_field.ncomp;
    assert_eq!(ncomp, coarse_field.ncomp);
    let total = crate::fespace::integrate_nested(fine_mesh, coarse_mesh, order, |fc, cc, p, w| {
        let (gw, vw) = weights(fc, p);
        let (xi_f, eta_f) = fine_mesh.local_coords(fc, p);
        let (xi_c, eta_c) = coarse_mesh.local_coords(cc, p);
        let mut acc = 0.0;
        for comp in 0..ncomp {
            let dv = fine.value(fine_mesh, fc, xi_f, eta_f, comp)
                - coarse.value(coarse_mesh, cc, xi_c, eta_c, comp);
            let dg = fine.grad(fine_mesh, fc, xi_f, eta_f, comp)
                - coarse.grad(coarse_mesh, cc, xi_c, eta_c, comp);
            acc += gw * dg.dot(dg) + vw * dv * dv;
        }
        acc * w
    });
    Ok(crate::float::sqrt(total.max(0.0)))
}
