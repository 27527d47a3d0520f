//! Quadtree quadrilateral meshes over the benchmark domains.
//!
//! A mesh is a forest of quadtrees: the root grid is an `n x n` array of
//! axis-aligned squares (some absent for the L-shaped panel), and every leaf
//! is a square obtained by recursive quartering. Refinement maintains the
//! 2:1 balance so that every interior side separates cells whose levels
//! differ by at most one, leaving at most one hanging vertex per coarse
//! edge. Geometry is carried in integer "ticks" so vertex identification
//! and nesting queries are exact.

mod patch;

pub use patch::{Patch, SubSquare};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

pub type CellId = usize;
pub type VertId = usize;
pub type SideId = usize;

/// Ticks per root-cell edge; each root can be refined `MAX_LEVEL` times.
const MAX_LEVEL: u32 = 20;
const TICKS: u64 = 1 << MAX_LEVEL;
/// Two spare levels keep quarter-point probes on integer ticks.
const MAX_REFINE: u8 = (MAX_LEVEL - 2) as u8;

static MESH_IDS: AtomicU64 = AtomicU64::new(1);

/// Benchmark domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Unit square, side 1 mm.
    UnitSquare,
    /// L-shaped panel: 500 mm square with the lower-right quadrant removed.
    LShape,
}

impl Domain {
    pub fn parse(name: &str) -> Result<Domain> {
        match name {
            "unit-square" => Ok(Domain::UnitSquare),
            "l-shape" => Ok(Domain::LShape),
            other => Err(Error::UnknownDomain(other.to_string())),
        }
    }

    /// Side length of the bounding square in mm.
    pub fn side(self) -> f64 {
        match self {
            Domain::UnitSquare => 1.0,
            Domain::LShape => 500.0,
        }
    }
}

/// Key of a (leaf or internal) quadtree cell.
///
/// Ordering is `(root, level, iy, ix)` which makes iteration deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub root: u32,
    pub level: u8,
    pub iy: u32,
    pub ix: u32,
}

impl CellKey {
    fn children(self) -> [CellKey; 4] {
        let CellKey { root, level, ix, iy } = self;
        let (l, ix, iy) = (level + 1, 2 * ix, 2 * iy);
        [
            CellKey { root, level: l, ix, iy },
            CellKey { root, level: l, ix: ix + 1, iy },
            CellKey { root, level: l, ix, iy: iy + 1 },
            CellKey { root, level: l, ix: ix + 1, iy: iy + 1 },
        ]
    }

    fn tick_size(self) -> u64 {
        TICKS >> self.level
    }
}

/// Axis a side is normal to: a `Vertical` side has normal `+-x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideAxis {
    Vertical,
    Horizontal,
}

/// Coarse boundary segment a boundary side belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Bottom,
    Top,
    Left,
    Right,
    /// L-shape: horizontal reentrant edge `y = 250, x in [250, 500]`.
    InnerHorizontal,
    /// L-shape: vertical reentrant edge `x = 250, y in [0, 250]`.
    InnerVertical,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub key: CellKey,
    /// Corner vertices in order SW, SE, NE, NW.
    pub verts: [VertId; 4],
    /// Lower-left corner in mm.
    pub origin: Vec2,
    /// Edge length in mm.
    pub edge: f64,
    gx0: u64,
    gy0: u64,
    gsize: u64,
}

impl Cell {
    pub fn level(&self) -> u8 {
        self.key.level
    }

    /// Diameter (diagonal) in mm.
    pub fn diam(&self) -> f64 {
        self.edge * core::f64::consts::SQRT_2
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.origin.x + 0.5 * self.edge, self.origin.y + 0.5 * self.edge)
    }

    /// Map reference coordinates in `[0,1]^2` to physical coordinates.
    pub fn map(&self, xi: f64, eta: f64) -> Vec2 {
        Vec2::new(self.origin.x + xi * self.edge, self.origin.y + eta * self.edge)
    }

    pub fn area(&self) -> f64 {
        self.edge * self.edge
    }
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub pos: Vec2,
    /// Masters of a hanging vertex (endpoints of the coarse edge it sits on).
    pub hanging: Option<[VertId; 2]>,
    pub on_boundary: bool,
    gx: u64,
    gy: u64,
}

impl Vertex {
    pub fn is_hanging(&self) -> bool {
        self.hanging.is_some()
    }
}

/// A mesh side at the finer of the two incident levels. An interior side of
/// a coarse cell that borders two refined neighbors is stored as the two
/// half-sides.
#[derive(Debug, Clone)]
pub struct Side {
    /// Endpoints ordered by increasing running coordinate.
    pub a: VertId,
    pub b: VertId,
    pub axis: SideAxis,
    /// Incident cells: `[negative side, positive side]` of the normal
    /// (which points in `+x` for vertical and `+y` for horizontal sides).
    pub cells: [Option<CellId>; 2],
    pub length: f64,
}

impl Side {
    pub fn is_boundary(&self) -> bool {
        self.cells[0].is_none() || self.cells[1].is_none()
    }

    pub fn midpoint(&self, mesh: &Mesh) -> Vec2 {
        let pa = mesh.vertices[self.a].pos;
        let pb = mesh.vertices[self.b].pos;
        Vec2::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y))
    }

    /// Unit normal in the stored orientation (`+x` or `+y`).
    pub fn normal(&self) -> Vec2 {
        match self.axis {
            SideAxis::Vertical => Vec2::new(1.0, 0.0),
            SideAxis::Horizontal => Vec2::new(0.0, 1.0),
        }
    }

    /// Outward unit normal when the side lies on the domain boundary.
    pub fn outward_normal(&self) -> Vec2 {
        let n = self.normal();
        if self.cells[1].is_none() {
            n
        } else {
            -n
        }
    }

    /// The single incident cell of a boundary side.
    pub fn boundary_cell(&self) -> CellId {
        self.cells[0].or(self.cells[1]).expect("side with no cells")
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    id: u64,
    pub domain: Domain,
    /// Root cells per side of the bounding square.
    pub roots_per_side: u32,
    root_edge: f64,
    present: Vec<bool>,
    leaves: BTreeSet<CellKey>,
    pub cells: Vec<Cell>,
    pub vertices: Vec<Vertex>,
    pub sides: Vec<Side>,
    cell_index: BTreeMap<CellKey, CellId>,
    vert_index: BTreeMap<(u64, u64), VertId>,
    /// Cells having the vertex as a corner.
    vert_cells: Vec<Vec<CellId>>,
    /// Sides incident to each cell.
    cell_sides: Vec<Vec<SideId>>,
    /// Hanging vertices whose resolved constraint involves the master.
    hanging_of_master: Vec<Vec<VertId>>,
}

/// Builds the uniform start mesh for a benchmark domain.
///
/// `target_h` is the requested cell diameter (diagonal) in mm; the grid
/// resolution is the nearest integer to `side * sqrt(2) / target_h`, rounded
/// to even for the L-shape so the removed quadrant aligns with the grid.
pub fn build_initial_mesh(domain: Domain, target_h: f64) -> Result<Mesh> {
    assert!(target_h > 0.0, "target_h must be positive");
    let ideal = domain.side() * core::f64::consts::SQRT_2 / target_h;
    let n = match domain {
        Domain::UnitSquare => libround(ideal).max(1.0) as u32,
        Domain::LShape => {
            let even = 2.0 * libround(ideal / 2.0);
            even.max(2.0) as u32
        }
    };
    Mesh::uniform_root_grid(domain, n)
}

fn libround(x: f64) -> f64 {
    // round-half-away-from-zero for positive x, without std
    let t = (x + 0.5) as u64;
    t as f64
}

impl Mesh {
    /// Uniform mesh whose leaves are exactly the root grid.
    pub fn uniform_root_grid(domain: Domain, n: u32) -> Result<Mesh> {
        let present = (0..n * n)
            .map(|r| {
                let (rx, ry) = (r % n, r / n);
                match domain {
                    Domain::UnitSquare => true,
                    Domain::LShape => !(rx >= n / 2 && ry < n / 2),
                }
            })
            .collect::<Vec<_>>();
        let mut leaves = BTreeSet::new();
        for r in 0..n * n {
            if present[r as usize] {
                leaves.insert(CellKey { root: r, level: 0, ix: 0, iy: 0 });
            }
        }
        Ok(Mesh::from_leaves(domain, n, present, leaves))
    }

    fn from_leaves(
        domain: Domain,
        roots_per_side: u32,
        present: Vec<bool>,
        leaves: BTreeSet<CellKey>,
    ) -> Mesh {
        let root_edge = domain.side() / roots_per_side as f64;
        let mut mesh = Mesh {
            id: MESH_IDS.fetch_add(1, Ordering::Relaxed),
            domain,
            roots_per_side,
            root_edge,
            present,
            leaves,
            cells: Vec::new(),
            vertices: Vec::new(),
            sides: Vec::new(),
            cell_index: BTreeMap::new(),
            vert_index: BTreeMap::new(),
            vert_cells: Vec::new(),
            cell_sides: Vec::new(),
            hanging_of_master: Vec::new(),
        };
        mesh.build_view();
        mesh
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn max_level(&self) -> u8 {
        self.cells.iter().map(|c| c.key.level).max().unwrap_or(0)
    }

    pub fn n_hanging(&self) -> usize {
        self.vertices.iter().filter(|v| v.is_hanging()).count()
    }

    fn tick_unit(&self) -> f64 {
        self.root_edge / TICKS as f64
    }

    fn pos_of_ticks(&self, gx: u64, gy: u64) -> Vec2 {
        let u = self.tick_unit();
        Vec2::new(gx as f64 * u, gy as f64 * u)
    }

    fn root_present(&self, rx: i64, ry: i64) -> bool {
        let n = self.roots_per_side as i64;
        rx >= 0 && ry >= 0 && rx < n && ry < n && self.present[(ry * n + rx) as usize]
    }

    /// Leaf key containing the tick point, for points strictly inside a leaf.
    fn leaf_key_at_ticks(leaves: &BTreeSet<CellKey>, n: u32, gx: u64, gy: u64) -> Option<CellKey> {
        let (rx, ry) = (gx / TICKS, gy / TICKS);
        if rx >= n as u64 || ry >= n as u64 {
            return None;
        }
        let root = (ry * n as u64 + rx) as u32;
        let (lx, ly) = (gx - rx * TICKS, gy - ry * TICKS);
        for level in 0..=MAX_LEVEL as u8 {
            let size = TICKS >> level;
            let key = CellKey { root, level, ix: (lx / size) as u32, iy: (ly / size) as u32 };
            if leaves.contains(&key) {
                return Some(key);
            }
        }
        None
    }

    /// Leaf containing a physical point strictly inside it (points on cell
    /// interfaces resolve to one of the incident leaves deterministically).
    pub fn leaf_at_point(&self, p: Vec2) -> Option<CellId> {
        let u = self.tick_unit();
        let fx = p.x / u;
        let fy = p.y / u;
        let max = self.roots_per_side as f64 * TICKS as f64;
        if fx < -0.5 || fy < -0.5 || fx > max + 0.5 || fy > max + 0.5 {
            return None;
        }
        let gx = (fx.max(0.0) as u64).min(self.roots_per_side as u64 * TICKS - 1);
        let gy = (fy.max(0.0) as u64).min(self.roots_per_side as u64 * TICKS - 1);
        Self::leaf_key_at_ticks(&self.leaves, self.roots_per_side, gx, gy)
            .and_then(|k| self.cell_index.get(&k).copied())
    }

    fn cell_ticks(&self, key: CellKey) -> (u64, u64, u64) {
        let n = self.roots_per_side as u64;
        let (rx, ry) = (key.root as u64 % n, key.root as u64 / n);
        let size = key.tick_size();
        (rx * TICKS + key.ix as u64 * size, ry * TICKS + key.iy as u64 * size, size)
    }

    fn build_view(&mut self) {
        let leaf_keys: Vec<CellKey> = self.leaves.iter().copied().collect();
        // cells and vertices
        for key in &leaf_keys {
            let (gx0, gy0, gsize) = self.cell_ticks(*key);
            let origin = self.pos_of_ticks(gx0, gy0);
            let edge = gsize as f64 * self.tick_unit();
            let corner_ticks =
                [(gx0, gy0), (gx0 + gsize, gy0), (gx0 + gsize, gy0 + gsize), (gx0, gy0 + gsize)];
            let mut verts = [0usize; 4];
            for (i, &(gx, gy)) in corner_ticks.iter().enumerate() {
                let vid = *self.vert_index.entry((gx, gy)).or_insert_with(|| {
                    self.vertices.push(Vertex {
                        pos: Vec2::ZERO,
                        hanging: None,
                        on_boundary: false,
                        gx,
                        gy,
                    });
                    self.vertices.len() - 1
                });
                self.vertices[vid].pos = self.pos_of_ticks(gx, gy);
                verts[i] = vid;
            }
            let id = self.cells.len();
            self.cells.push(Cell { key: *key, verts, origin, edge, gx0, gy0, gsize });
            self.cell_index.insert(*key, id);
        }
        self.vert_cells = vec![Vec::new(); self.vertices.len()];
        for (cid, cell) in self.cells.iter().enumerate() {
            for &v in &cell.verts {
                self.vert_cells[v].push(cid);
            }
        }
        self.cell_sides = vec![Vec::new(); self.cells.len()];
        self.build_sides();
        self.resolve_hanging_masters();
    }

    fn build_sides(&mut self) {
        // key: (axis, fixed tick, lo tick) -> side
        let mut seen: BTreeMap<(u8, u64, u64), SideId> = BTreeMap::new();
        let mut hanging: Vec<(VertId, [VertId; 2])> = Vec::new();
        for cid in 0..self.cells.len() {
            let (gx0, gy0, s) = {
                let c = &self.cells[cid];
                (c.gx0, c.gy0, c.gsize)
            };
            let level = self.cells[cid].key.level;
            // (axis, fixed, lo, probe point just outside, neighbor is on positive side)
            let q = s / 4;
            let edges = [
                (SideAxis::Vertical, gx0, gy0, (gx0.wrapping_sub(q), gy0 + q), false),
                (SideAxis::Vertical, gx0 + s, gy0, (gx0 + s + q, gy0 + q), true),
                (SideAxis::Horizontal, gy0, gx0, (gx0 + q, gy0.wrapping_sub(q)), false),
                (SideAxis::Horizontal, gy0 + s, gx0, (gx0 + q, gy0 + s + q), true),
            ];
            for (axis, fixed, lo, probe1, positive) in edges {
                let probe2 = match axis {
                    SideAxis::Vertical => (probe1.0, probe1.1 + s / 2),
                    SideAxis::Horizontal => (probe1.0 + s / 2, probe1.1),
                };
                let n1 = self.probe_leaf(probe1);
                let n2 = self.probe_leaf(probe2);
                match (n1, n2) {
                    (None, None) => {
                        self.push_side(&mut seen, cid, None, axis, fixed, lo, s, positive);
                    }
                    (Some(a), Some(b)) if a == b => {
                        let nbr = self.cell_index[&a];
                        let nbr_level = a.level;
                        debug_assert!(
                            level.abs_diff(nbr_level) <= 1,
                            "mesh is not 2:1 balanced across a side"
                        );
                        if nbr_level <= level {
                            let other = Some(nbr);
                            let sid =
                                self.push_side(&mut seen, cid, other, axis, fixed, lo, s, positive);
                            if nbr_level < level {
                                // `cid` is the finer cell: one endpoint of this
                                // half-side is hanging on the coarse edge.
                                if let Some(h) = self.hanging_on(sid, nbr) {
                                    hanging.push(h);
                                }
                            }
                        }
                    }
                    _ => {
                        // Neighbor region is finer; the fine cells emit the
                        // half-sides.
                    }
                }
            }
        }
        for (v, masters) in hanging {
            if let Some(prev) = self.vertices[v].hanging {
                debug_assert_eq!({
                    let mut a = prev;
                    a.sort_unstable();
                    a
                }, {
                    let mut b = masters;
                    b.sort_unstable();
                    b
                });
            }
            self.vertices[v].hanging = Some(masters);
        }
        // boundary flags
        for s in 0..self.sides.len() {
            if self.sides[s].is_boundary() {
                let (a, b) = (self.sides[s].a, self.sides[s].b);
                self.vertices[a].on_boundary = true;
                self.vertices[b].on_boundary = true;
            }
        }
        debug_assert!(self.vertices.iter().all(|v| !(v.is_hanging() && v.on_boundary)));
    }

    fn probe_leaf(&self, (gx, gy): (u64, u64)) -> Option<CellKey> {
        // wrapping_sub produced a huge value when probing below zero
        let limit = self.roots_per_side as u64 * TICKS;
        if gx >= limit || gy >= limit {
            return None;
        }
        let (rx, ry) = ((gx / TICKS) as i64, (gy / TICKS) as i64);
        if !self.root_present(rx, ry) {
            return None;
        }
        Self::leaf_key_at_ticks(&self.leaves, self.roots_per_side, gx, gy)
    }

    #[allow(clippy::too_many_arguments)]
    fn push_side(
        &mut self,
        seen: &mut BTreeMap<(u8, u64, u64), SideId>,
        cid: CellId,
        other: Option<CellId>,
        axis: SideAxis,
        fixed: u64,
        lo: u64,
        len_ticks: u64,
        positive: bool,
    ) -> SideId {
        let axis_code = match axis {
            SideAxis::Vertical => 0u8,
            SideAxis::Horizontal => 1u8,
        };
        if let Some(&sid) = seen.get(&(axis_code, fixed, lo)) {
            return sid;
        }
        let (ta, tb) = match axis {
            SideAxis::Vertical => ((fixed, lo), (fixed, lo + len_ticks)),
            SideAxis::Horizontal => ((lo, fixed), (lo + len_ticks, fixed)),
        };
        let a = self.vert_index[&ta];
        let b = self.vert_index[&tb];
        // `positive` is true when the *other* cell sits on the positive side
        // of the normal.
        let cells = if positive { [Some(cid), other] } else { [other, Some(cid)] };
        let side = Side { a, b, axis, cells, length: len_ticks as f64 * self.tick_unit() };
        let sid = self.sides.len();
        self.sides.push(side);
        seen.insert((axis_code, fixed, lo), sid);
        self.cell_sides[cid].push(sid);
        if let Some(o) = other {
            self.cell_sides[o].push(sid);
        }
        sid
    }

    /// For a half-side between a fine cell and coarse neighbor, identify the
    /// hanging endpoint and its two masters (the coarse edge endpoints).
    fn hanging_on(&self, sid: SideId, coarse: CellId) -> Option<(VertId, [VertId; 2])> {
        let side = &self.sides[sid];
        let c = &self.cells[coarse];
        let (m_lo, m_hi, h_candidates) = match side.axis {
            SideAxis::Vertical => {
                let x = self.vertices[side.a].gx;
                debug_assert!(x == c.gx0 || x == c.gx0 + c.gsize);
                (
                    self.vert_index[&(x, c.gy0)],
                    self.vert_index[&(x, c.gy0 + c.gsize)],
                    [side.a, side.b],
                )
            }
            SideAxis::Horizontal => {
                let y = self.vertices[side.a].gy;
                debug_assert!(y == c.gy0 || y == c.gy0 + c.gsize);
                (
                    self.vert_index[&(c.gx0, y)],
                    self.vert_index[&(c.gx0 + c.gsize, y)],
                    [side.a, side.b],
                )
            }
        };
        for v in h_candidates {
            if v != m_lo && v != m_hi {
                return Some((v, [m_lo, m_hi]));
            }
        }
        None
    }

    fn resolve_hanging_masters(&mut self) {
        self.hanging_of_master = vec![Vec::new(); self.vertices.len()];
        for v in 0..self.vertices.len() {
            if self.vertices[v].is_hanging() {
                for (m, _w) in self.resolved_constraint(v) {
                    self.hanging_of_master[m].push(v);
                }
            }
        }
    }

    /// Expands a vertex value into master-vertex weights. Master vertices
    /// expand to themselves; hanging vertices average their edge masters,
    /// resolved transitively when a master is itself hanging.
    pub fn resolved_constraint(&self, v: VertId) -> Vec<(VertId, f64)> {
        let mut acc: BTreeMap<VertId, f64> = BTreeMap::new();
        let mut stack = vec![(v, 1.0)];
        while let Some((u, w)) = stack.pop() {
            match self.vertices[u].hanging {
                None => *acc.entry(u).or_insert(0.0) += w,
                Some([a, b]) => {
                    stack.push((a, 0.5 * w));
                    stack.push((b, 0.5 * w));
                }
            }
        }
        acc.into_iter().collect()
    }

    /// Cells having `v` as a corner.
    pub fn cells_at_vertex(&self, v: VertId) -> &[CellId] {
        &self.vert_cells[v]
    }

    pub fn sides_of_cell(&self, c: CellId) -> &[SideId] {
        &self.cell_sides[c]
    }

    /// Hanging vertices whose constraint involves master `m`.
    pub fn hanging_slaves_of(&self, m: VertId) -> &[VertId] {
        &self.hanging_of_master[m]
    }

    /// Classifies a boundary side by the coarse boundary segment it lies on.
    pub fn boundary_tag(&self, sid: SideId) -> Option<BoundaryTag> {
        let side = &self.sides[sid];
        if !side.is_boundary() {
            return None;
        }
        let max = self.roots_per_side as u64 * TICKS;
        let va = &self.vertices[side.a];
        Some(match side.axis {
            SideAxis::Vertical => {
                if va.gx == 0 {
                    BoundaryTag::Left
                } else if va.gx == max {
                    BoundaryTag::Right
                } else {
                    // only the L-shape has interior vertical boundary
                    BoundaryTag::InnerVertical
                }
            }
            SideAxis::Horizontal => {
                if va.gy == 0 {
                    BoundaryTag::Bottom
                } else if va.gy == max {
                    BoundaryTag::Top
                } else {
                    BoundaryTag::InnerHorizontal
                }
            }
        })
    }

    /// Splits every marked leaf into its four children and restores the 2:1
    /// balance by transitive closure.
    pub fn refine(&self, marked: &BTreeSet<CellId>) -> Mesh {
        let mut leaves = self.leaves.clone();
        for &cid in marked {
            let key = self.cells[cid].key;
            Self::split(&mut leaves, key);
        }
        Self::balance(&mut leaves, self.roots_per_side, &self.present);
        Mesh::from_leaves(self.domain, self.roots_per_side, self.present.clone(), leaves)
    }

    /// Uniform refinement (`k` rounds of marking every leaf).
    pub fn refine_uniform(&self, k: usize) -> Mesh {
        let mut mesh = self.clone();
        for _ in 0..k {
            let all: BTreeSet<CellId> = (0..mesh.n_cells()).collect();
            mesh = mesh.refine(&all);
        }
        mesh
    }

    fn split(leaves: &mut BTreeSet<CellKey>, key: CellKey) {
        assert!(key.level < MAX_REFINE, "refinement depth exceeded");
        let was = leaves.remove(&key);
        debug_assert!(was, "splitting a non-leaf");
        for ch in key.children() {
            leaves.insert(ch);
        }
    }

    fn balance(leaves: &mut BTreeSet<CellKey>, n: u32, present: &[bool]) {
        loop {
            let mut to_split: BTreeSet<CellKey> = BTreeSet::new();
            for key in leaves.iter() {
                let level = key.level;
                if level == 0 {
                    continue;
                }
                let size = key.tick_size();
                let (rx, ry) = (key.root as u64 % n as u64, key.root as u64 / n as u64);
                let (gx0, gy0) =
                    (rx * TICKS + key.ix as u64 * size, ry * TICKS + key.iy as u64 * size);
                let q = size / 4;
                let probes = [
                    (gx0.wrapping_sub(q), gy0 + q),
                    (gx0 + size + q, gy0 + q),
                    (gx0 + q, gy0.wrapping_sub(q)),
                    (gx0 + q, gy0 + size + q),
                ];
                let limit = n as u64 * TICKS;
                for (px, py) in probes {
                    if px >= limit || py >= limit {
                        continue;
                    }
                    let (prx, pry) = ((px / TICKS) as i64, (py / TICKS) as i64);
                    let idx = pry * n as i64 + prx;
                    if !present[idx as usize] {
                        continue;
                    }
                    if let Some(nbr) = Self::leaf_key_at_ticks(leaves, n, px, py) {
                        if (nbr.level as i32) < level as i32 - 1 {
                            to_split.insert(nbr);
                        }
                    }
                }
            }
            if to_split.is_empty() {
                break;
            }
            for key in to_split {
                if leaves.contains(&key) {
                    Self::split(leaves, key);
                }
            }
        }
    }

    /// Checks the 2:1 balance by an exhaustive side scan.
    pub fn is_balanced(&self) -> bool {
        self.sides.iter().all(|s| match s.cells {
            [Some(a), Some(b)] => {
                self.cells[a].key.level.abs_diff(self.cells[b].key.level) <= 1
            }
            _ => true,
        })
    }

    /// True when `self` is obtained from `coarse` by refinement (or equal).
    pub fn is_refinement_of(&self, coarse: &Mesh) -> bool {
        if self.domain != coarse.domain || self.roots_per_side != coarse.roots_per_side {
            return false;
        }
        self.cells.iter().all(|c| {
            let (gx, gy) = (c.gx0 + c.gsize / 2, c.gy0 + c.gsize / 2);
            match Self::leaf_key_at_ticks(&coarse.leaves, coarse.roots_per_side, gx, gy) {
                Some(k) => k.level <= c.key.level,
                None => false,
            }
        })
    }

    /// The coarse-mesh leaf containing a fine-mesh cell, for nested meshes.
    pub fn containing_cell(&self, fine: &Mesh, fine_cell: CellId) -> Option<CellId> {
        let c = &fine.cells[fine_cell];
        let (gx, gy) = (c.gx0 + c.gsize / 2, c.gy0 + c.gsize / 2);
        Self::leaf_key_at_ticks(&self.leaves, self.roots_per_side, gx, gy)
            .and_then(|k| self.cell_index.get(&k).copied())
    }

    /// Local coordinates of a physical point within a cell.
    pub fn local_coords(&self, cell: CellId, p: Vec2) -> (f64, f64) {
        let c = &self.cells[cell];
        ((p.x - c.origin.x) / c.edge, (p.y - c.origin.y) / c.edge)
    }

    /// Total area of all leaves.
    pub fn area(&self) -> f64 {
        self.cells.iter().map(|c| c.area()).sum()
    }

    /// Is there a mesh vertex strictly inside the open segment `(a, b)`?
    /// Used to split side integrals at refinement breakpoints. The segment
    /// must be axis-aligned with tick-exact endpoints.
    pub fn has_vertex_strictly_inside(&self, a: Vec2, b: Vec2) -> Option<Vec2> {
        let u = self.tick_unit();
        let to_ticks = |p: Vec2| -> (u64, u64) {
            (((p.x / u) + 0.5) as u64, ((p.y / u) + 0.5) as u64)
        };
        let (ax, ay) = to_ticks(a);
        let (bx, by) = to_ticks(b);
        let (mx, my) = ((ax + bx) / 2, (ay + by) / 2);
        if (mx, my) == (ax, ay) || (mx, my) == (bx, by) {
            return None;
        }
        self.vert_index.get(&(mx, my)).map(|_| self.pos_of_ticks(mx, my))
    }
}

#[cfg(test)]
mod tests;
