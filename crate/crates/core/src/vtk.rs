//! Legacy ASCII VTK unstructured-grid output.

use std::io::{self, Write};
use std::path::Path;

use crate::mesh::HexMesh;

const VTK_HEXAHEDRON: u8 = 12;

/// Writes the mesh with one scalar point field per `(name, values)` pair.
pub fn write_vtk<W: Write>(out: &mut W, mesh: &HexMesh, title: &str, fields: &[(&str, &[f64])]) -> io::Result<()> {
    for (name, vals) in fields {
        if vals.len() != mesh.n_nodes() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("field {name} has {} values for {} nodes", vals.len(), mesh.n_nodes()),
            ));
        }
    }
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.n_nodes())?;
    for p in mesh.nodes() {
        writeln!(out, "{:e} {:e} {:e}", p[0], p[1], p[2])?;
    }
    let ne = mesh.n_elements();
    writeln!(out, "CELLS {} {}", ne, ne * 9)?;
    for e in mesh.elements() {
        write!(out, "8")?;
        for &n in e {
            write!(out, " {n}")?;
        }
        writeln!(out)?;
    }
    writeln!(out, "CELL_TYPES {ne}")?;
    for _ in 0..ne {
        writeln!(out, "{VTK_HEXAHEDRON}")?;
    }
    if !fields.is_empty() {
        writeln!(out, "POINT_DATA {}", mesh.n_nodes())?;
        for (name, vals) in fields {
            writeln!(out, "SCALARS {name} double 1")?;
            writeln!(out, "LOOKUP_TABLE default")?;
            for v in *vals {
                writeln!(out, "{v:e}")?;
            }
        }
    }
    Ok(())
}

pub fn save_vtk(path: &Path, mesh: &HexMesh, title: &str, fields: &[(&str, &[f64])]) -> io::Result<()> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    write_vtk(&mut w, mesh, title, fields)?;
    w.flush()
}
