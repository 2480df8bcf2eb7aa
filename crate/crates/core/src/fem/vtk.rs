use std::io::{self, Write};

use super::mesh::StructuredMesh;

/// Legacy ASCII VTK unstructured grid with one cell per element and nodal scalars.
pub fn write_vtk<W: Write>(out: &mut W, mesh: &StructuredMesh, fields: &[(&str, &[f64])]) -> io::Result<()> {
    write_vtk_points(out, mesh, mesh.nodes(), fields)
}

/// Same as [`write_vtk`] with node coordinates replaced, e.g. after a rigid placement.
pub fn write_vtk_points<W: Write>(
    out: &mut W,
    mesh: &StructuredMesh,
    points: &[[f64; 2]],
    fields: &[(&str, &[f64])],
) -> io::Result<()> {
    let p = mesh.degree();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "field export")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", points.len())?;
    for q in points {
        writeln!(out, "{:.17e} {:.17e} 0", q[0], q[1])?;
    }
    // VTK orders corners counter-clockwise, then edge midpoints, then the centre
    let order: &[usize] = if p == 1 { &[0, 1, 3, 2] } else { &[0, 2, 8, 6, 1, 5, 7, 3, 4] };
    let ne = mesh.n_elements();
    writeln!(out, "CELLS {} {}", ne, ne * (order.len() + 1))?;
    for el in mesh.elements() {
        write!(out, "{}", order.len())?;
        for &l in order {
            write!(out, " {}", el.nodes[l])?;
        }
        writeln!(out)?;
    }
    writeln!(out, "CELL_TYPES {ne}")?;
    let cell_type = if p == 1 { 9 } else { 28 };
    for _ in 0..ne {
        writeln!(out, "{cell_type}")?;
    }
    if !fields.is_empty() {
        writeln!(out, "POINT_DATA {}", points.len())?;
        for (name, values) in fields {
            let name: String = name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect();
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in values.iter() {
                writeln!(out, "{v:.17e}")?;
            }
        }
    }
    Ok(())
}
