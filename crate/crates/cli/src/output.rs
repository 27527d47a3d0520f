//! CSV reports and the legacy-ASCII VTK writer.

use anyhow::{Context, Result};
use fracfield_core::fespace::{DofSystem, FieldView, NodalField};
use fracfield_core::mesh::Mesh;
use fracfield_core::phasefield::ContactClass;
use fracfield_core::sim::{EstimatorReport, StepSummary};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

fn fnum(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.12e}")
    }
}

/// `quantities.csv`: one row per time step.
pub fn write_quantities_csv(path: &Path, summaries: &[StepSummary]) -> Result<()> {
    let mut s = String::from("n,t,crack_energy,bulk_energy,load\n");
    for row in summaries {
        let q = row.quantities;
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            row.n,
            fnum(row.t),
            fnum(q.crack_energy),
            fnum(q.bulk_energy),
            fnum(q.load)
        );
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// `estimator.csv`: per-step estimator totals and contact counts.
pub fn write_estimator_csv(path: &Path, summaries: &[StepSummary]) -> Result<()> {
    let mut s = String::from(
        "n,eta1,eta2,eta3,eta4,etau1,etau2,etau3,eta_phi_total,eta_u_total,n_semi,n_full\n",
    );
    for row in summaries {
        let Some(t) = row.totals else { continue };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            row.n,
            fnum(t.eta[0]),
            fnum(t.eta[1]),
            fnum(t.eta[2]),
            fnum(t.eta[3]),
            fnum(t.eta_u[0]),
            fnum(t.eta_u[1]),
            fnum(t.eta_u[2]),
            fnum(t.eta_phi_total),
            fnum(t.eta_u_total),
            t.n_semi,
            t.n_full
        );
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_convergence_csv(path: &Path, study: &fracfield_core::sim::ConvergenceStudy) -> Result<()> {
    let mut s = String::from("series,stage,nodes,err_phi_energy,err_u_energy\n");
    for r in &study.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.series,
            r.stage,
            r.nodes,
            fnum(r.err_phi_energy),
            fnum(r.err_u_energy)
        );
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_efficiency_csv(path: &Path, study: &fracfield_core::sim::EfficiencyStudy) -> Result<()> {
    let mut s =
        String::from("eps,stage,nodes,eta_phi,err_phi_energy,eff_robust,eta_std,err_phi_h1,eff_std\n");
    for r in &study.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            fnum(r.eps),
            r.stage,
            r.nodes,
            fnum(r.eta_phi),
            fnum(r.err_phi_energy),
            fnum(r.eff_robust),
            fnum(r.eta_std),
            fnum(r.err_phi_h1),
            fnum(r.eff_std)
        );
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Legacy-ASCII VTK export of the leaf mesh (unstructured grid, cell
/// type 9) with optional point data.
pub struct VtkFields<'a> {
    pub phi: Option<&'a NodalField>,
    pub u: Option<&'a NodalField>,
    pub report: Option<&'a EstimatorReport>,
}

pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    dofs: &DofSystem,
    fields: &VtkFields,
) -> Result<()> {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("fracfield output\n");
    s.push_str("ASCII\n");
    s.push_str("DATASET UNSTRUCTURED_GRID\n");
    let n = mesh.n_vertices();
    let _ = writeln!(s, "POINTS {n} double");
    for v in 0..n {
        let p = mesh.vertices[v].pos;
        let _ = writeln!(s, "{} {} 0", fnum(p.x), fnum(p.y));
    }
    let m = mesh.n_cells();
    let _ = writeln!(s, "CELLS {m} {}", 5 * m);
    for c in 0..m {
        let vs = mesh.cells[c].verts;
        let _ = writeln!(s, "4 {} {} {} {}", vs[0], vs[1], vs[2], vs[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {m}");
    for _ in 0..m {
        s.push_str("9\n");
    }

    let mut point_data_started = false;
    let mut ensure_point_data = |s: &mut String| {
        if !point_data_started {
            let _ = writeln!(s, "POINT_DATA {n}");
            point_data_started = true;
        }
    };

    if let Some(phi) = fields.phi {
        ensure_point_data(&mut s);
        let view = FieldView::new(mesh, dofs, phi);
        s.push_str("SCALARS phi double 1\nLOOKUP_TABLE default\n");
        for v in 0..n {
            let _ = writeln!(s, "{}", fnum(view.at_vertex(v, 0)));
        }
    }
    if let Some(u) = fields.u {
        ensure_point_data(&mut s);
        let view = FieldView::new(mesh, dofs, u);
        s.push_str("VECTORS u double\n");
        for v in 0..n {
            let _ = writeln!(s, "{} {} 0", fnum(view.at_vertex(v, 0)), fnum(view.at_vertex(v, 1)));
        }
    }
    if let Some(report) = fields.report {
        ensure_point_data(&mut s);
        s.push_str("SCALARS contact int 1\nLOOKUP_TABLE default\n");
        for v in 0..n {
            let code = match dofs.dof_of_vertex[v] {
                Some(d) => match report.classification.class[d] {
                    ContactClass::NoContact => 0,
                    ContactClass::Semi => 1,
                    ContactClass::Full => 2,
                },
                None => 0,
            };
            let _ = writeln!(s, "{code}");
        }
        s.push_str("SCALARS eta_phi double 1\nLOOKUP_TABLE default\n");
        for v in 0..n {
            let val = match dofs.dof_of_vertex[v] {
                Some(d) => report.phi.node_composite(d),
                None => 0.0,
            };
            let _ = writeln!(s, "{}", fnum(val));
        }
        s.push_str("SCALARS eta_u double 1\nLOOKUP_TABLE default\n");
        for v in 0..n {
            let val = match dofs.dof_of_vertex[v] {
                Some(d) => report.u.node_composite(d),
                None => 0.0,
            };
            let _ = writeln!(s, "{}", fnum(val));
        }
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
