//! Flat-file outputs: CSV tables and pretty-printed JSON records.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::criteria::CriterionReport;
use crate::diagnostics::FlowTrace;
use crate::error::{Error, Result};
use crate::transport::TransportSolution;

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes serializable rows as CSV with a header line.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a value as pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// One CSV row per flow iterate.
pub fn write_trace(path: &Path, trace: &FlowTrace) -> Result<()> {
    write_rows(path, &trace.rows)
}

#[derive(Serialize)]
struct TransportRow {
    x: f64,
    map: f64,
    psi: f64,
    psi_prime: f64,
    phi: f64,
}

/// Nodal map and potentials, one row per node.
pub fn write_transport(path: &Path, sol: &TransportSolution) -> Result<()> {
    let rows: Vec<TransportRow> = (0..sol.nodes.len())
        .map(|i| TransportRow {
            x: sol.nodes[i],
            map: sol.map[i],
            psi: sol.psi[i],
            psi_prime: sol.psi_prime[i],
            phi: sol.phi[i],
        })
        .collect();
    write_rows(path, &rows)
}

#[derive(Serialize)]
struct MarginRow {
    z: f64,
    lhs: f64,
    rhs: f64,
    margin: f64,
}

/// Margin curve of a criterion, one row per z.
pub fn write_margins(path: &Path, report: &CriterionReport) -> Result<()> {
    let rows: Vec<MarginRow> = (0..report.z_grid.len())
        .map(|i| MarginRow { z: report.z_grid[i], lhs: report.lhs[i], rhs: report.rhs[i], margin: report.margins[i] })
        .collect();
    write_rows(path, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::RadialProfile;
    use crate::grid::{Grid, GridMeasure};

    #[test]
    fn transport_csv_has_header_and_rows() {
        let dir = std::env::temp_dir().join(format!("otlab-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = Grid::new(0.0, 1.0, 17).unwrap();
        let m = GridMeasure::uniform(&g);
        let sol = TransportSolution::solve(&m, &m, &RadialProfile::quadratic()).unwrap();
        let path = dir.join("t.csv");
        write_transport(&path, &sol).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,map,psi,psi_prime,phi\n"));
        assert_eq!(text.lines().count(), 18);
        write_json(&dir.join("s.json"), &sol.cost).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
