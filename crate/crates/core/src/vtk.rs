//! Minimal legacy ASCII VTK unstructured-grid writer (triangle cells, cell
//! type 5) with optional point-data scalars and vectors.

use crate::geometry::Point;
use std::io::{BufWriter, Write};
use std::path::Path;

pub fn write_unstructured(
    path: &Path,
    title: &str,
    points: &[Point],
    triangles: &[[usize; 3]],
    scalars: &[(&str, &[f64])],
    vectors: &[(&str, &[(f64, f64)])],
) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", points.len())?;
    for p in points {
        writeln!(w, "{:.17e} {:.17e} 0.0", p.x, p.y)?;
    }
    writeln!(w, "CELLS {} {}", triangles.len(), 4 * triangles.len())?;
    for t in triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {}", triangles.len())?;
    for _ in triangles {
        writeln!(w, "5")?;
    }
    if !scalars.is_empty() || !vectors.is_empty() {
        writeln!(w, "POINT_DATA {}", points.len())?;
    }
    for (name, data) in scalars {
        assert_eq!(data.len(), points.len(), "scalar {name} length mismatch");
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in *data {
            writeln!(w, "{v:.17e}")?;
        }
    }
    for (name, data) in vectors {
        assert_eq!(data.len(), points.len(), "vector {name} length mismatch");
        writeln!(w, "VECTORS {name} double")?;
        for (x, y) in *data {
            writeln!(w, "{x:.17e} {y:.17e} 0.0")?;
        }
    }
    w.flush()
}

/// Parsed subset of a legacy VTK file, sufficient for round-trip tests.
#[derive(Debug, Default)]
pub struct VtkContents {
    pub points: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub scalars: Vec<(String, Vec<f64>)>,
    pub vectors: Vec<(String, Vec<(f64, f64)>)>,
}

pub fn read_unstructured(path: &Path) -> std::io::Result<VtkContents> {
    let text = std::fs::read_to_string(path)?;
    let mut out = VtkContents::default();
    let mut lines = text.lines().peekable();
    let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
    while let Some(line) = lines.next() {
        let mut words = line.split_whitespace();
        match words.next() {
            Some("POINTS") => {
                let n: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| bad("bad POINTS header"))?;
                for _ in 0..n {
                    let l = lines.next().ok_or_else(|| bad("truncated POINTS"))?;
                    let mut it = l.split_whitespace().map(|w| w.parse::<f64>());
                    let x = it.next().ok_or_else(|| bad("bad point"))?.map_err(|_| bad("bad point"))?;
                    let y = it.next().ok_or_else(|| bad("bad point"))?.map_err(|_| bad("bad point"))?;
                    out.points.push(Point::new(x, y));
                }
            }
            Some("CELLS") => {
                let n: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| bad("bad CELLS header"))?;
                for _ in 0..n {
                    let l = lines.next().ok_or_else(|| bad("truncated CELLS"))?;
                    let ids: Vec<usize> = l
                        .split_whitespace()
                        .filter_map(|w| w.parse().ok())
                        .collect();
                    if ids.len() == 4 && ids[0] == 3 {
                        out.triangles.push([ids[1], ids[2], ids[3]]);
                    }
                }
            }
            Some("SCALARS") => {
                let name = words.next().unwrap_or("").to_string();
                lines.next(); // LOOKUP_TABLE line
                let mut data = Vec::with_capacity(out.points.len());
                for _ in 0..out.points.len() {
                    let l = lines.next().ok_or_else(|| bad("truncated SCALARS"))?;
                    data.push(l.trim().parse::<f64>().map_err(|_| bad("bad scalar"))?);
                }
                out.scalars.push((name, data));
            }
            Some("VECTORS") => {
                let name = words.next().unwrap_or("").to_string();
                let mut data = Vec::with_capacity(out.points.len());
                for _ in 0..out.points.len() {
                    let l = lines.next().ok_or_else(|| bad("truncated VECTORS"))?;
                    let vals: Vec<f64> = l
                        .split_whitespace()
                        .filter_map(|w| w.parse().ok())
                        .collect();
                    if vals.len() < 2 {
                        return Err(bad("bad vector"));
                    }
                    data.push((vals[0], vals[1]));
                }
                out.vectors.push((name, data));
            }
            _ => {}
        }
    }
    Ok(out)
}
