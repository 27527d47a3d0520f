//! Node patches and sub-patches used by the residual estimators.

use super::{CellId, Mesh, SideId, VertId};
use crate::error::{Error, Result};
use alloc::collections::BTreeSet;
use alloc::vec::Vec;

/// One square of the sub-patch, in reference coordinates of its cell.
#[derive(Debug, Clone, Copy)]
pub struct SubSquare {
    pub cell: CellId,
    pub x0: f64,
    pub y0: f64,
    pub size: f64,
}

/// The patch of a master node: the support of its (hanging-constrained)
/// nodal basis function, together with the skeleton pieces the estimator
/// integrates over.
#[derive(Debug, Clone)]
pub struct Patch {
    pub node: VertId,
    /// All cells where the basis function of `node` is nonzero. Near a
    /// hanging edge mastered by `node` this includes the fine cells carrying
    /// the constrained contribution.
    pub cells: Vec<CellId>,
    /// Cells having `node` as a corner.
    pub corner_cells: Vec<CellId>,
    /// Sides strictly interior to the patch region.
    pub interior_sides: Vec<SideId>,
    /// Domain-boundary sides of patch cells.
    pub boundary_sides: Vec<SideId>,
    /// Patch diameter in mm.
    pub h: f64,
    /// Sub-patch: the squares of edge `h_cell / 8` touching the node, one
    /// per corner cell (the patch of the three-times red-refined mesh).
    pub sub_squares: Vec<SubSquare>,
}

impl Mesh {
    /// Builds the estimator patch at a non-hanging vertex.
    pub fn patch_of(&self, p: VertId) -> Result<Patch> {
        if self.vertices[p].is_hanging() {
            return Err(Error::HangingVertexPatch { vertex: p });
        }
        let mut cell_set: BTreeSet<CellId> = self.cells_at_vertex(p).iter().copied().collect();
        for &h in self.hanging_slaves_of(p) {
            for &c in self.cells_at_vertex(h) {
                cell_set.insert(c);
            }
        }
        let corner_cells: Vec<CellId> = self.cells_at_vertex(p).to_vec();
        let cells: Vec<CellId> = cell_set.iter().copied().collect();

        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        let mut seen: BTreeSet<SideId> = BTreeSet::new();
        for &c in &cells {
            for &s in self.sides_of_cell(c) {
                if !seen.insert(s) {
                    continue;
                }
                let side = &self.sides[s];
                match side.cells {
                    [Some(a), Some(b)] => {
                        if cell_set.contains(&a) && cell_set.contains(&b) {
                            interior.push(s);
                        }
                    }
                    _ => boundary.push(s),
                }
            }
        }
        interior.sort_unstable();
        boundary.sort_unstable();

        // patch diameter: max pairwise distance between cell corners
        let mut pts = Vec::with_capacity(4 * cells.len());
        for &c in &cells {
            for &v in &self.cells[c].verts {
                pts.push(self.vertices[v].pos);
            }
        }
        let mut h = 0.0f64;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                h = h.max(pts[i].dist(pts[j]));
            }
        }

        let mut sub_squares = Vec::with_capacity(corner_cells.len());
        for &c in &corner_cells {
            let cell = &self.cells[c];
            let corner = cell
                .verts
                .iter()
                .position(|&v| v == p)
                .expect("corner cell without the node");
            let s = 1.0 / 8.0;
            let (x0, y0) = match corner {
                0 => (0.0, 0.0),
                1 => (1.0 - s, 0.0),
                2 => (1.0 - s, 1.0 - s),
                _ => (0.0, 1.0 - s),
            };
            sub_squares.push(SubSquare { cell: c, x0, y0, size: s });
        }

        Ok(Patch { node: p, cells, corner_cells, interior_sides: interior, boundary_sides: boundary, h, sub_squares })
    }

    /// Patches for every master vertex, indexed by vertex id (hanging
    /// vertices get `None`).
    pub fn all_patches(&self) -> Vec<Option<Patch>> {
        (0..self.vertices.len())
            .map(|v| if self.vertices[v].is_hanging() { None } else { Some(self.patch_of(v).unwrap()) })
            .collect()
    }
}
