use super::*;
use alloc::vec::Vec;

fn unit(n: u32) -> Mesh {
    Mesh::uniform_root_grid(Domain::UnitSquare, n).unwrap()
}

#[test]
fn initial_tension_mesh_is_32x32() {
    let m = build_initial_mesh(Domain::UnitSquare, 0.044).unwrap();
    assert_eq!(m.n_cells(), 32 * 32);
    assert_eq!(m.n_vertices(), 33 * 33);
    let c = &m.cells[0];
    assert!((c.edge - 1.0 / 32.0).abs() < 1e-15);
    assert!((c.diam() - 0.04419).abs() < 1e-4);
}

#[test]
fn initial_coarsest_mesh_is_single_cell() {
    let m = build_initial_mesh(Domain::UnitSquare, core::f64::consts::SQRT_2).unwrap();
    assert_eq!(m.n_cells(), 1);
    assert!((m.cells[0].diam() - core::f64::consts::SQRT_2).abs() < 1e-14);
}

#[test]
fn initial_lshape_mesh() {
    let m = build_initial_mesh(Domain::LShape, 17.67).unwrap();
    // 40x40 grid of 12.5 mm cells minus the lower-right 20x20 quadrant
    assert_eq!(m.n_cells(), 1200);
    let c = &m.cells[0];
    assert!((c.edge - 12.5).abs() < 1e-12);
    assert!(c.diam() <= 1.05 * 17.67);
    // no cell sits in the removed quadrant
    for c in &m.cells {
        let mid = c.center();
        assert!(!(mid.x > 250.0 && mid.y < 250.0));
    }
    assert!((m.area() - 0.75 * 500.0 * 500.0).abs() < 1e-6);
}

#[test]
fn unknown_domain_rejected() {
    assert!(Domain::parse("moebius-strip").is_err());
    assert_eq!(Domain::parse("unit-square").unwrap(), Domain::UnitSquare);
}

#[test]
fn single_split_produces_seven_leaves() {
    let m = unit(2);
    assert_eq!(m.n_cells(), 4);
    let marked: BTreeSet<CellId> = [0usize].into_iter().collect();
    let r = m.refine(&marked);
    assert_eq!(r.n_cells(), 7);
    // one hanging vertex on each of the two shared coarse/fine edges
    assert_eq!(r.n_hanging(), 2);
    assert!(r.is_balanced());
    assert!((r.area() - 1.0).abs() < 1e-12);
}

#[test]
fn mark_all_refines_uniformly() {
    let m = unit(2);
    let r = m.refine_uniform(1);
    assert_eq!(r.n_cells(), 16);
    assert_eq!(r.n_hanging(), 0);
    assert!(r.is_balanced());
}

#[test]
fn repeated_corner_refinement_restores_balance() {
    let mut m = unit(4);
    for _ in 0..2 {
        // mark the cell whose lower-left corner is the origin
        let corner = (0..m.n_cells())
            .find(|&c| m.cells[c].origin.norm() < 1e-12)
            .unwrap();
        let marked: BTreeSet<CellId> = [corner].into_iter().collect();
        m = m.refine(&marked);
        assert!(m.is_balanced());
    }
    assert!((m.area() - 1.0).abs() < 1e-12);
    assert!(m.max_level() == 2);
}

#[test]
fn leaf_areas_tile_domain_after_random_refinements() {
    let mut m = unit(3);
    for round in 0..4 {
        let marked: BTreeSet<CellId> =
            (0..m.n_cells()).filter(|c| (c * 7 + round) % 5 == 0).collect();
        m = m.refine(&marked);
        assert!(m.is_balanced());
        assert!((m.area() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sides_are_geometrically_consistent() {
    let mut m = unit(3);
    let marked: BTreeSet<CellId> = [0usize, 4].into_iter().collect();
    m = m.refine(&marked);
    for s in &m.sides {
        let pa = m.vertices[s.a].pos;
        let pb = m.vertices[s.b].pos;
        match s.axis {
            SideAxis::Vertical => {
                assert!((pa.x - pb.x).abs() < 1e-15);
                assert!((s.length - (pb.y - pa.y)).abs() < 1e-12);
            }
            SideAxis::Horizontal => {
                assert!((pa.y - pb.y).abs() < 1e-15);
                assert!((s.length - (pb.x - pa.x)).abs() < 1e-12);
            }
        }
        // incident cells actually touch the side
        for cid in s.cells.into_iter().flatten() {
            let c = &m.cells[cid];
            let eps = 1e-12;
            assert!(pa.x >= c.origin.x - eps && pa.x <= c.origin.x + c.edge + eps);
            assert!(pa.y >= c.origin.y - eps && pa.y <= c.origin.y + c.edge + eps);
        }
    }
}

#[test]
fn interior_patch_on_uniform_mesh() {
    let m = unit(4);
    let p = (0..m.n_vertices())
        .find(|&v| m.vertices[v].pos.dist(crate::geom::Vec2::new(0.5, 0.5)) < 1e-12)
        .unwrap();
    let patch = m.patch_of(p).unwrap();
    assert_eq!(patch.cells.len(), 4);
    assert_eq!(patch.interior_sides.len(), 4);
    assert!(patch.boundary_sides.is_empty());
    assert_eq!(patch.sub_squares.len(), 4);
    assert!((patch.h - 2.0 * 0.25 * core::f64::consts::SQRT_2).abs() < 1e-14);
}

#[test]
fn boundary_patch_on_uniform_mesh() {
    let m = unit(4);
    let p = (0..m.n_vertices())
        .find(|&v| m.vertices[v].pos.dist(crate::geom::Vec2::new(0.5, 0.0)) < 1e-12)
        .unwrap();
    let patch = m.patch_of(p).unwrap();
    assert_eq!(patch.cells.len(), 2);
    assert_eq!(patch.boundary_sides.len(), 2);
    assert_eq!(patch.interior_sides.len(), 1);
}

#[test]
fn hanging_master_patch_includes_fine_neighbors() {
    // 2x2 mesh with the SW cell split: masters of the hanging vertices are
    // the domain center and two edge midpoints of the boundary.
    let m = unit(2);
    let marked: BTreeSet<CellId> = [0usize].into_iter().collect();
    let m = m.refine(&marked);
    // the node (0.5, 0) masters the hanging vertex at (0.5, 0.25)
    let p = (0..m.n_vertices())
        .find(|&v| {
            m.vertices[v].pos.dist(crate::geom::Vec2::new(0.5, 0.0)) < 1e-12
        })
        .unwrap();
    let patch = m.patch_of(p).unwrap();
    // corner cells: fine SE child + coarse right cell; support adds the fine
    // NE child via the hanging vertex
    assert_eq!(patch.corner_cells.len(), 2);
    assert_eq!(patch.cells.len(), 3);
    // interior skeleton: the two fine half-sides on x = 0.5 plus the fine
    // side between the two fine children
    assert_eq!(patch.interior_sides.len(), 3);
    let fine_half_sides = patch
        .interior_sides
        .iter()
        .filter(|&&s| {
            let side = &m.sides[s];
            matches!(side.axis, SideAxis::Vertical)
                && (m.vertices[side.a].pos.x - 0.5).abs() < 1e-12
        })
        .count();
    assert_eq!(fine_half_sides, 2);

    // requesting a patch at a hanging vertex is an error
    let h = (0..m.n_vertices()).find(|&v| m.vertices[v].is_hanging()).unwrap();
    assert!(m.patch_of(h).is_err());
}

#[test]
fn patch_consistency_on_conforming_mesh() {
    // p in closure(e) <=> e in patch(p), exhaustively on a conforming mesh
    let m = unit(5);
    for v in 0..m.n_vertices() {
        let patch = m.patch_of(v).unwrap();
        for c in 0..m.n_cells() {
            let in_patch = patch.cells.contains(&c);
            let touches = m.cells[c].verts.contains(&v);
            assert_eq!(in_patch, touches);
        }
    }
}

#[test]
fn patch_contains_all_incident_cells_on_nonconforming_mesh() {
    let mut m = unit(3);
    let marked: BTreeSet<CellId> = [0usize, 5].into_iter().collect();
    m = m.refine(&marked);
    for v in 0..m.n_vertices() {
        if m.vertices[v].is_hanging() {
            continue;
        }
        let patch = m.patch_of(v).unwrap();
        for c in 0..m.n_cells() {
            if m.cells[c].verts.contains(&v) {
                assert!(patch.cells.contains(&c));
            }
        }
        // h_p is bounded by three times the largest incident diameter
        let hmax = patch.cells.iter().map(|&c| m.cells[c].diam()).fold(0.0, f64::max);
        assert!(patch.h <= 3.0 * hmax + 1e-12);
    }
}

#[test]
fn refinement_relation_and_containment() {
    let coarse = unit(2);
    let marked: BTreeSet<CellId> = [1usize].into_iter().collect();
    let fine = coarse.refine(&marked);
    assert!(fine.is_refinement_of(&coarse));
    assert!(!coarse.is_refinement_of(&fine));
    for fc in 0..fine.n_cells() {
        let cc = coarse.containing_cell(&fine, fc).unwrap();
        let c = &coarse.cells[cc];
        let f = &fine.cells[fc];
        assert!(f.origin.x >= c.origin.x - 1e-12);
        assert!(f.origin.x + f.edge <= c.origin.x + c.edge + 1e-12);
    }
}

#[test]
fn lshape_boundary_tags() {
    let m = Mesh::uniform_root_grid(Domain::LShape, 4).unwrap();
    let mut tags: Vec<BoundaryTag> = Vec::new();
    for s in 0..m.sides.len() {
        if let Some(t) = m.boundary_tag(s) {
            tags.push(t);
        }
    }
    for t in [
        BoundaryTag::Bottom,
        BoundaryTag::Top,
        BoundaryTag::Left,
        BoundaryTag::Right,
        BoundaryTag::InnerHorizontal,
        BoundaryTag::InnerVertical,
    ] {
        assert!(tags.contains(&t), "missing {t:?}");
    }
}
