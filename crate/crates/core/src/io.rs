//! Plain-text dumps of meshes and linear systems for external tools.

use std::io::Write;

use crate::linalg::DenseMatrix;
use crate::mesh::{BoundaryPart, DomainMesh};
use crate::error::Result;

fn section<W: Write, T>(out: &mut W, name: &str, items: &[T], line: impl Fn(&T) -> String) -> Result<()> {
    writeln!(out, "{name} {}", items.len())?;
    for it in items {
        writeln!(out, "{}", line(it))?;
    }
    Ok(())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

/// Writes sections `vertices`, `tets`, `tris`, `part` and `normals`, each a
/// header line `name count` followed by one space-separated record per line.
pub fn write_mesh<W: Write>(mesh: &DomainMesh, out: &mut W) -> Result<()> {
    section(out, "vertices", &mesh.vertices, |x| join(&[x.x, x.y, x.z]))?;
    section(out, "tets", &mesh.tetrahedra, |t| join(t))?;
    section(out, "tris", &mesh.boundary_triangles, |t| join(t))?;
    section(out, "part", &mesh.triangle_part, |p| {
        match p {
            BoundaryPart::Dirichlet => "D",
            BoundaryPart::Neumann => "N",
        }
        .to_string()
    })?;
    section(out, "normals", &mesh.triangle_normal, |n| join(&[n.x, n.y, n.z]))?;
    Ok(())
}

/// Writes the matrix row-major, one row per line, then a blank line and the
/// right-hand side, one value per line.
pub fn write_system<W: Write>(matrix: &DenseMatrix, rhs: &[f64], out: &mut W) -> Result<()> {
    for i in 0..matrix.rows() {
        let row: Vec<String> = matrix.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    writeln!(out)?;
    for v in rhs {
        writeln!(out, "{v:.17e}")?;
    }
    Ok(())
}

/// Reads back a dump written by [`write_system`].
pub fn read_system(text: &str) -> Result<(DenseMatrix, Vec<f64>)> {
    let bad = |m: &str| crate::error::Error::invalid(format!("malformed system dump: {m}"));
    let (mat, rhs) = text.split_once("\n\n").ok_or_else(|| bad("missing blank separator"))?;
    let parse = |s: &str| s.parse::<f64>().map_err(|_| bad(s));
    let rows: Vec<Vec<f64>> = mat
        .lines()
        .map(|l| l.split_whitespace().map(parse).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let rhs: Vec<f64> = rhs.split_whitespace().map(parse).collect::<Result<_>>()?;
    Ok((DenseMatrix::from_rows(&rows)?, rhs))
}
