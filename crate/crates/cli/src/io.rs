//! Field dumps and tables.
//!
//! Fields go out as legacy VTK structured points (cell data, ASCII) or as
//! raw little-endian `f64` with a JSON sidecar. Tables are CSV with a header
//! row, `.` decimals and LF line endings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use homog_core::fields::{cell_average, ScalarField, VectorField};
use homog_core::geometry::StaggeredGrid;

use crate::CliError;

fn check_uniform(grid: &StaggeredGrid) -> Result<(), CliError> {
    if grid.is_uniform() {
        Ok(())
    } else {
        Err(CliError::Config("structured-points dumps need a uniform grid".into()))
    }
}

fn vtk_header(out: &mut impl Write, grid: &StaggeredGrid, title: &str) -> std::io::Result<()> {
    let n = grid.dims();
    let o = grid.origin();
    let h = grid.spacing();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{}", title.replace('\n', " "))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET STRUCTURED_POINTS")?;
    writeln!(out, "DIMENSIONS {} {} {}", n[0] + 1, n[1] + 1, n[2] + 1)?;
    writeln!(out, "ORIGIN {:e} {:e} {:e}", o[0], o[1], o[2])?;
    writeln!(out, "SPACING {:e} {:e} {:e}", h[0], h[1], h[2])?;
    writeln!(out, "CELL_DATA {}", grid.n_cells())
}

/// One cell-centred scalar as a legacy VTK file.
pub fn write_vtk_scalar(path: &Path, grid: &StaggeredGrid, name: &str, field: &ScalarField) -> Result<(), CliError> {
    check_uniform(grid)?;
    let mut out = BufWriter::new(File::create(path)?);
    vtk_header(&mut out, grid, name)?;
    writeln!(out, "SCALARS {name} double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for v in &field.data {
        writeln!(out, "{v:e}")?;
    }
    out.flush()?;
    Ok(())
}

/// A face field averaged to cell centres, as legacy VTK vectors.
pub fn write_vtk_vector(path: &Path, grid: &StaggeredGrid, name: &str, field: &VectorField) -> Result<(), CliError> {
    check_uniform(grid)?;
    let c = cell_average(grid, field);
    let mut out = BufWriter::new(File::create(path)?);
    vtk_header(&mut out, grid, name)?;
    writeln!(out, "VECTORS {name} double")?;
    for i in 0..grid.n_cells() {
        writeln!(out, "{:e} {:e} {:e}", c[0][i], c[1][i], c[2][i])?;
    }
    out.flush()?;
    Ok(())
}

/// Header written next to every raw dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    pub name: String,
    /// Cells per axis; the first index varies fastest.
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub components: usize,
    pub dtype: String,
    pub byte_order: String,
    pub centering: String,
}

/// Cell data as raw little-endian `f64` (component-interleaved) plus a
/// `.json` sidecar. Returns the sidecar path.
pub fn write_raw(
    path: &Path,
    grid: &StaggeredGrid,
    name: &str,
    comps: &[&[f64]],
) -> Result<std::path::PathBuf, CliError> {
    check_uniform(grid)?;
    let n = grid.n_cells();
    if comps.iter().any(|c| c.len() != n) {
        return Err(CliError::Config(format!("raw dump '{name}' is not cell-centred")));
    }
    let mut out = BufWriter::new(File::create(path)?);
    for i in 0..n {
        for c in comps {
            out.write_all(&c[i].to_le_bytes())?;
        }
    }
    out.flush()?;
    let header = RawHeader {
        name: name.into(),
        dims: grid.dims(),
        origin: grid.origin(),
        spacing: grid.spacing(),
        components: comps.len(),
        dtype: "float64".into(),
        byte_order: "little".into(),
        centering: "cell".into(),
    };
    let sidecar = path.with_extension("json");
    write_json(&sidecar, &header)?;
    Ok(sidecar)
}

/// Reads a raw dump back through its sidecar.
pub fn read_raw(path: &Path) -> Result<(RawHeader, Vec<f64>), CliError> {
    let header: RawHeader = serde_json::from_str(&std::fs::read_to_string(path.with_extension("json"))?)?;
    let bytes = std::fs::read(path)?;
    if header.dtype != "float64" || header.byte_order != "little" {
        return Err(CliError::Config(format!("unsupported raw layout {} / {}", header.dtype, header.byte_order)));
    }
    let values = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Ok((header, values))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
