//! CSV for raw samples, JSON for everything else.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{polar_labels, NormSpec, PolarSample};
use crate::sample::Sample;

/// Reads a headered numeric CSV. Row and column numbers in errors are
/// 1-based and count data rows only (the header is not row 1).
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Sample> {
    let file = File::open(path.as_ref())?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Csv("file is empty".into()));
    }
    let dim = headers.len();
    if dim < 2 {
        return Err(Error::Dimension {
            expected: "at least 2 columns".into(),
            found: dim,
        });
    }
    let labels: Vec<String> = headers.iter().map(str::to_owned).collect();

    let mut data = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        if rec.len() != dim {
            return Err(Error::Csv(format!(
                "row {row} has {} fields, header has {dim}",
                rec.len()
            )));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Cell {
                row,
                col: j + 1,
                reason: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row,
                    col: j + 1,
                    reason: format!("`{cell}` is not finite"),
                });
            }
            data.push(v);
        }
    }
    if data.is_empty() {
        return Err(Error::EmptySample);
    }
    Sample::from_rows(labels, data)
}

fn write_table<'a>(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<f64>> + 'a,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    w.write_record(header)
        .map_err(|e| Error::Csv(e.to_string()))?;
    for row in rows {
        // `{}` on f64 is the shortest repr that round-trips exactly.
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sample_csv(sample: &Sample, path: impl AsRef<Path>) -> Result<()> {
    write_table(
        path.as_ref(),
        sample.labels(),
        sample.rows().map(<[f64]>::to_vec),
    )
}

/// Writes `r, theta_1, …, theta_d`.
pub fn write_polar_csv(polar: &PolarSample, path: impl AsRef<Path>) -> Result<()> {
    let rows = (0..polar.len()).map(|i| {
        let mut row = Vec::with_capacity(polar.dim() + 1);
        row.push(polar.radii()[i]);
        row.extend_from_slice(polar.angle(i));
        row
    });
    write_table(path.as_ref(), &polar_labels(polar.dim()), rows)
}

/// Reads a file written by [`write_polar_csv`]; the first column is the
/// radius and the rest the angle.
pub fn read_polar_csv(path: impl AsRef<Path>, norm: NormSpec) -> Result<PolarSample> {
    let table = ingest_csv(path)?;
    let dim = table.dim() - 1;
    let mut radii = Vec::with_capacity(table.len());
    let mut angles = Vec::with_capacity(table.len() * dim);
    for row in table.rows() {
        radii.push(row[0]);
        angles.extend_from_slice(&row[1..]);
    }
    PolarSample::from_parts(radii, angles, dim, norm)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let file = File::open(path.as_ref())?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
