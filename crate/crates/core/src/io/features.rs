use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{read_to_string, write_atomic, IoError};
use crate::model::{AuxFeatureMatrix, ModelError, ObjectId};

/// A feature matrix plus the original object ids in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    /// `ids[i]` is the file's id for object `i`.
    pub ids: Vec<String>,
    /// Column names when the file had a header.
    pub columns: Option<Vec<String>>,
    pub matrix: AuxFeatureMatrix,
}

impl FeatureTable {
    pub fn index_of(&self, id: &str) -> Option<ObjectId> {
        self.ids.iter().position(|x| x == id).map(ObjectId)
    }
}

/// Reads a feature CSV: first column is the object id, the rest are
/// numbers. A first row whose feature cells are not all numeric is a
/// header. Ids map to `0..n` in file order.
pub fn load_features(path: &Path) -> Result<FeatureTable, IoError> {
    parse_features(read_to_string(path)?.as_bytes())
}

pub fn parse_features<R: Read>(reader: R) -> Result<FeatureTable, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut columns = None;
    let mut ids = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut values = Vec::new();
    let mut width = None;

    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let cells: Vec<&str> = rec.iter().collect();
        if idx == 0 && cells[1..].iter().any(|c| c.parse::<f64>().is_err()) {
            columns = Some(cells[1..].iter().map(|s| s.to_string()).collect::<Vec<_>>());
            width = Some(cells.len());
            continue;
        }
        let expected = *width.get_or_insert(cells.len());
        if cells.len() != expected {
            return Err(IoError::Ragged { line, expected, found: cells.len() });
        }
        let id = cells[0].to_string();
        if seen.insert(id.clone(), line).is_some() {
            return Err(IoError::DuplicateId { id, line });
        }
        for (column, cell) in cells.iter().enumerate().skip(1) {
            let v: f64 = cell.parse().map_err(|_| IoError::NonNumeric {
                line,
                column: column + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(IoError::NonNumeric { line, column: column + 1, value: cell.to_string() });
            }
            values.push(v);
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(IoError::Empty);
    }
    let d = width.unwrap_or(1) - 1;
    if d == 0 {
        return Err(ModelError::NoFeatureColumns.into());
    }
    let matrix = AuxFeatureMatrix::new(Array2::from_shape_vec((ids.len(), d), values).expect("rectangular"))?;
    Ok(FeatureTable { ids, columns, matrix })
}

pub fn write_features<W: Write>(table: &FeatureTable, writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    let d = table.matrix.d();
    let header: Vec<String> = match &table.columns {
        Some(c) => c.clone(),
        None => (0..d).map(|k| format!("f{k}")).collect(),
    };
    w.write_record(std::iter::once("id".to_string()).chain(header))?;
    for (i, id) in table.ids.iter().enumerate() {
        let row = table.matrix.row(i);
        w.write_record(std::iter::once(id.clone()).chain(row.iter().map(|v| v.to_string())))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes with a header row (`id,f0,f1,...` when no names are known).
pub fn save_features(table: &FeatureTable, path: &Path) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_features(table, &mut buf)?;
    write_atomic(path, &buf)
}
