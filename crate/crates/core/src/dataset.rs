//! CSV ingestion and standardization for the regression targets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Standardize {
    None,
    #[default]
    Features,
    FeaturesAndResponse,
}

impl std::str::FromStr for Standardize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "features" => Ok(Self::Features),
            "features_and_response" => Ok(Self::FeaturesAndResponse),
            other => Err(Error::invalid(format!("unknown standardization {other:?}"))),
        }
    }
}

/// Mean and population standard deviation of one column as read from the file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub sd: f64,
}

/// Row-major feature matrix with one response per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub n_rows: usize,
    pub n_features: usize,
    pub responses: Vec<f64>,
    pub feature_names: Vec<String>,
    pub response_name: String,
    /// Statistics of the raw (pre-standardization) columns.
    pub feature_stats: Vec<ColumnStats>,
    pub response_stats: ColumnStats,
    pub standardization: Standardize,
}

fn column_stats(values: impl Iterator<Item = f64> + Clone) -> ColumnStats {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    ColumnStats { mean, sd: var.sqrt() }
}

/// Standardizes a column in place to mean 0 and population sd 1.
fn standardize_column(values: &mut [f64], name: &str) -> Result<()> {
    let stats = column_stats(values.iter().copied());
    if !(stats.sd > 0.0) {
        return Err(Error::DataFormat {
            row: 0,
            column: name.to_string(),
            detail: "constant column cannot be standardized".into(),
        });
    }
    for v in values.iter_mut() {
        *v = (*v - stats.mean) / stats.sd;
    }
    // A second centering pass removes the rounding residue of the first.
    let residual = values.iter().sum::<f64>() / values.len() as f64;
    for v in values.iter_mut() {
        *v -= residual;
    }
    Ok(())
}

impl Dataset {
    /// Builds a dataset from in-memory columns.
    pub fn from_rows(
        feature_names: Vec<String>,
        response_name: String,
        features: Vec<f64>,
        responses: Vec<f64>,
        standardize: Standardize,
    ) -> Result<Self> {
        let n_rows = responses.len();
        let n_features = feature_names.len();
        if n_rows == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        if features.len() != n_rows * n_features {
            return Err(Error::invalid(format!(
                "feature matrix has {} entries, expected {} x {}",
                features.len(),
                n_rows,
                n_features
            )));
        }
        let mut ds = Dataset {
            feature_stats: (0..n_features)
                .map(|j| column_stats((0..n_rows).map(|i| features[i * n_features + j])))
                .collect(),
            response_stats: column_stats(responses.iter().copied()),
            features,
            n_rows,
            n_features,
            responses,
            feature_names,
            response_name,
            standardization: Standardize::None,
        };
        ds.apply(standardize)?;
        Ok(ds)
    }

    fn apply(&mut self, standardize: Standardize) -> Result<()> {
        if standardize != Standardize::None {
            for j in 0..self.n_features {
                let mut col = self.column(j);
                standardize_column(&mut col, &self.feature_names[j])?;
                for (i, v) in col.into_iter().enumerate() {
                    self.features[i * self.n_features + j] = v;
                }
            }
        }
        if standardize == Standardize::FeaturesAndResponse {
            standardize_column(&mut self.responses, &self.response_name)?;
        }
        self.standardization = standardize;
        Ok(())
    }

    /// Re-standardizes an already loaded dataset (used to check idempotence).
    pub fn restandardized(&self, standardize: Standardize) -> Result<Self> {
        let mut ds = self.clone();
        ds.apply(standardize)?;
        Ok(ds)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.features[i * self.n_features + j]).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }
}

/// Reads a comma-separated numeric table with a header row.
///
/// Every column except `response_column` becomes a feature. Empty cells and
/// non-numeric cells are rejected with their line number and column name.
pub fn load_dataset(path: impl AsRef<Path>, response_column: &str, standardize: Standardize) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, path))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, path))?
        .iter()
        .map(str::to_string)
        .collect();
    let response_idx = headers.iter().position(|h| h == response_column).ok_or_else(|| Error::DataFormat {
        row: 1,
        column: response_column.to_string(),
        detail: "response column not found in header".into(),
    })?;
    let feature_names: Vec<String> =
        headers.iter().enumerate().filter(|(i, _)| *i != response_idx).map(|(_, h)| h.clone()).collect();

    let mut features = Vec::new();
    let mut responses = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| csv_error(e, path))?;
        if record.len() != headers.len() {
            return Err(Error::DataFormat {
                row: line,
                column: String::new(),
                detail: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::DataFormat { row: line, column: headers[j].clone(), detail: "missing value".into() });
            }
            let v: f64 = cell.parse().map_err(|_| Error::DataFormat {
                row: line,
                column: headers[j].clone(),
                detail: format!("non-numeric cell {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::DataFormat {
                    row: line,
                    column: headers[j].clone(),
                    detail: format!("non-finite value {cell:?}"),
                });
            }
            if j == response_idx {
                responses.push(v);
            } else {
                features.push(v);
            }
        }
    }
    Dataset::from_rows(feature_names, response_column.to_string(), features, responses, standardize)
}

fn csv_error(e: csv::Error, path: &Path) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::DataFormat { row, column: String::new(), detail: format!("{}: {other:?}", path.display()) },
    }
}
