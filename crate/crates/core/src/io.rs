//! Result serialization: legacy ASCII VTK snapshots and CSV histories.
//!
//! VTK output is pinned to a byte-stable format: 9 significant digits
//! (`{:.8e}`), LF line endings, one `SCALARS` or `VECTORS` block per field
//! under a single `POINT_DATA` section.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::grid::Mesh;
use crate::opt::IterRecord;
use crate::{Error, Result};

/// A named nodal field for VTK output. Scalars carry one value per vertex,
/// vectors two (interleaved x, y).
pub enum NodalField<'a> {
    Scalar(&'a str, &'a [f64]),
    Vector(&'a str, &'a [f64]),
}

fn fmt(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes mesh and nodal fields as a legacy ASCII VTK unstructured grid.
pub fn write_vtk(path: impl AsRef<Path>, mesh: &Mesh, fields: &[NodalField]) -> Result<()> {
    let nv = mesh.num_vertices();
    for field in fields {
        let (name, expected, len) = match field {
            NodalField::Scalar(name, values) => (*name, nv, values.len()),
            NodalField::Vector(name, values) => (*name, 2 * nv, values.len()),
        };
        if len != expected {
            return Err(Error::DimensionMismatch(format!(
                "field `{name}` has {len} values, expected {expected}"
            )));
        }
    }

    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "eigentopo output")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {nv} double")?;
    for p in mesh.vertices() {
        writeln!(w, "{} {} {}", fmt(p[0]), fmt(p[1]), fmt(0.0))?;
    }
    let nt = mesh.num_triangles();
    writeln!(w, "CELLS {nt} {}", 4 * nt)?;
    for tri in mesh.triangles() {
        writeln!(w, "3 {} {} {}", tri[0], tri[1], tri[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {nv}")?;
    for field in fields {
        match field {
            NodalField::Scalar(name, values) => {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for &v in *values {
                    writeln!(w, "{}", fmt(v))?;
                }
            }
            NodalField::Vector(name, values) => {
                writeln!(w, "VECTORS {name} double")?;
                for pair in values.chunks(2) {
                    writeln!(w, "{} {} {}", fmt(pair[0]), fmt(pair[1]), fmt(0.0))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the optimization history as CSV with the header
/// `iter,J,psi,gl_energy,lambda_1..lambda_l,step,vi_residual`.
pub fn write_history(
    path: impl AsRef<Path>,
    records: &[IterRecord],
    n_lambdas: usize,
) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("iter,J,psi,gl_energy");
    for i in 1..=n_lambdas {
        header.push_str(&format!(",lambda_{i}"));
    }
    header.push_str(",step,vi_residual");
    writeln!(w, "{header}")?;
    for r in records {
        let mut line = format!(
            "{},{},{},{}",
            r.iter,
            fmt(r.objective),
            fmt(r.psi),
            fmt(r.gl_energy)
        );
        for i in 0..n_lambdas {
            let v = r.lambdas.get(i).copied().unwrap_or(f64::NAN);
            line.push_str(&format!(",{}", fmt(v)));
        }
        line.push_str(&format!(",{},{}", fmt(r.step), fmt(r.vi_residual)));
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_rect_mesh, BoundarySpec, BoundaryTag};

    fn mesh1() -> Mesh {
        build_rect_mesh(1, 1, 1.0, 1.0, &BoundarySpec::uniform(&[BoundaryTag::Neumann0]))
            .unwrap()
    }

    /// Minimal reader for the writer's own output: points and point-data
    /// blocks only.
    fn parse_vtk(text: &str) -> (Vec<[f64; 3]>, Vec<(String, Vec<f64>)>) {
        let mut lines = text.lines().peekable();
        let mut points = Vec::new();
        let mut fields = Vec::new();
        while let Some(line) = lines.next() {
            if let Some(rest) = line.strip_prefix("POINTS ") {
                let n: usize = rest.split_whitespace().next().unwrap().parse().unwrap();
                for _ in 0..n {
                    let row: Vec<f64> = lines
                        .next()
                        .unwrap()
                        .split_whitespace()
                        .map(|v| v.parse().unwrap())
                        .collect();
                    points.push([row[0], row[1], row[2]]);
                }
            } else if let Some(rest) = line.strip_prefix("SCALARS ") {
                let name = rest.split_whitespace().next().unwrap().to_string();
                lines.next(); // LOOKUP_TABLE
                let mut values = Vec::new();
                while let Some(peek) = lines.peek() {
                    if peek.starts_with(|c: char| c.is_ascii_alphabetic() || c == '#') {
                        break;
                    }
                    values.push(lines.next().unwrap().trim().parse().unwrap());
                }
                fields.push((name, values));
            } else if let Some(rest) = line.strip_prefix("VECTORS ") {
                let name = rest.split_whitespace().next().unwrap().to_string();
                let mut values = Vec::new();
                while let Some(peek) = lines.peek() {
                    if peek.starts_with(|c: char| c.is_ascii_alphabetic() || c == '#') {
                        break;
                    }
                    let row: Vec<f64> = lines
                        .next()
                        .unwrap()
                        .split_whitespace()
                        .map(|v| v.parse().unwrap())
                        .collect();
                    values.push(row[0]);
                    values.push(row[1]);
                }
                fields.push((name, values));
            }
        }
        (points, fields)
    }

    #[test]
    fn vtk_structure_and_round_trip() {
        let mesh = mesh1();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.vtk");
        let scalar = [0.25, 0.5, 0.75, 1.0 / 3.0];
        let vector = [1.0, -2.0, 0.5, 0.0, -0.125, 3.0, 9.87654321e-3, 1e-11];
        write_vtk(
            &path,
            &mesh,
            &[
                NodalField::Scalar("phi_1", &scalar),
                NodalField::Vector("u", &vector),
            ],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("POINTS 4 double"));
        assert!(text.contains("CELLS 2 8"));
        assert!(text.contains("POINT_DATA 4"));
        assert!(!text.contains('\r'), "LF endings only");

        let (points, fields) = parse_vtk(&text);
        assert_eq!(points.len(), 4);
        assert_eq!(fields.len(), 2);
        for (read, written) in fields[0].1.iter().zip(&scalar) {
            assert!((read - written).abs() <= 1e-9 * written.abs().max(1.0));
        }
        for (read, written) in fields[1].1.iter().zip(&vector) {
            assert!((read - written).abs() <= 1e-9 * written.abs().max(1.0));
        }
    }

    #[test]
    fn vtk_rejects_wrong_lengths() {
        let mesh = mesh1();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vtk");
        let short = [1.0, 2.0];
        assert!(matches!(
            write_vtk(&path, &mesh, &[NodalField::Scalar("phi", &short)]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn history_header_and_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history(&path, &[], 2).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "iter,J,psi,gl_energy,lambda_1,lambda_2,step,vi_residual\n"
        );

        let records = vec![
            IterRecord {
                iter: 0,
                objective: 2.0,
                psi: 1.5,
                gl_energy: 0.5,
                lambdas: vec![3.0, 4.0],
                step: 1.0,
                vi_residual: -0.25,
            },
            IterRecord {
                iter: 1,
                objective: 1.75,
                psi: 1.25,
                gl_energy: 0.5,
                lambdas: vec![3.5, 4.5],
                step: 0.5,
                vi_residual: -0.0625,
            },
        ];
        write_history(&path, &records, 2).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        for line in &lines {
            assert_eq!(line.split(',').count(), 6 + 2);
        }
        // objective column is non-increasing
        let j0: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        let j1: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        assert!(j1 <= j0);
    }
}
