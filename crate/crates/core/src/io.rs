//! File formats: CSV matrices, the JSON problem file and small JSON helpers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::RawProblem;

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Serde adapter storing a matrix as a list of rows.
pub mod rows {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter storing a vector as a plain list.
pub mod vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Reads a matrix stored one row per line, comma separated, no header.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{f:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    matrix_from_rows(&rows)
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        wtr.write_record(row.iter().map(|x| format!("{x:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    read_matrix_csv(BufReader::new(File::open(path)?))
}

pub fn save_matrix_csv(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    write_matrix_csv(m, BufWriter::new(File::create(path)?))
}

/// The JSON problem file: `{"X": [[...]], "Y": [[...]], "hidden_dims": [...]}`.
///
/// `hidden_dims` lists `d_1, …, d_H` in layer order (input side first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(rename = "X", with = "rows")]
    pub x: DMatrix<f64>,
    #[serde(rename = "Y", with = "rows")]
    pub y: DMatrix<f64>,
    pub hidden_dims: Vec<usize>,
}

impl ProblemFile {
    pub fn new(raw: &RawProblem, hidden_dims: Vec<usize>) -> Self {
        Self {
            x: raw.x().clone(),
            y: raw.y().clone(),
            hidden_dims,
        }
    }

    pub fn raw(&self) -> Result<RawProblem> {
        RawProblem::new(self.x.clone(), self.y.clone())
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
