use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// One predicted sign in original node ids. `sign` is `1` or `-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub source: String,
    pub target: String,
    pub sign: i8,
    /// Positive-class score, if the producer had one.
    #[serde(default)]
    pub score: Option<f64>,
}

pub fn write_predictions(rows: &[PredictionRow], path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Reads a `source,target,sign[,score]` CSV with a header line.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, DataError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: PredictionRow = rec?;
        if row.sign != 1 && row.sign != -1 {
            return Err(DataError::InvalidPrediction(format!(
                "{} -> {}: sign must be 1 or -1, got {}",
                row.source, row.target, row.sign
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}
