use std::io::Read;
use std::path::Path;

use faer::{Mat, MatRef};

use crate::{DataMatrix, Error, Result};

/// The olive oil fatty-acid table (572 oils, 8 acids, 3 macro areas and
/// 9 sub-areas), vendored as CSV.
pub const OLIVE_OIL_CSV: &str = include_str!("../../data/olive.csv");

/// Feature matrix with integer class labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub name: String,
    pub x: DataMatrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub feature_names: Vec<String>,
    /// Original label text, indexed by class id.
    pub class_names: Vec<String>,
}

/// Parse a CSV with a header row. `label_column` names the categorical
/// column; every other column whose first value parses as a number becomes
/// a feature, the rest are ignored. Labels are numbered in order of first
/// appearance.
pub fn load_labeled_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    standardize: bool,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_labeled_csv(file, &name, label_column, standardize).map_err(|e| match e {
        Error::Input(msg) => Error::Parse { path: path.to_owned(), msg },
        other => other,
    })
}

/// [`load_labeled_csv`] over any reader.
pub fn read_labeled_csv(
    reader: impl Read,
    name: &str,
    label_column: &str,
    standardize: bool,
) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::input(format!("no column named `{label_column}`")))?;
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let first = records.first().ok_or_else(|| Error::input("CSV has no data rows"))?;
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&j| j != label_idx && first.get(j).is_some_and(|c| c.trim().parse::<f64>().is_ok()))
        .collect();
    if feature_idx.is_empty() {
        return Err(Error::input("no numeric feature columns"));
    }

    let mut class_names: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(records.len());
    let mut x = Mat::<f64>::zeros(records.len(), feature_idx.len());
    for (i, rec) in records.iter().enumerate() {
        let label = rec.get(label_idx).unwrap_or("").trim();
        let id = match class_names.iter().position(|c| c == label) {
            Some(id) => id,
            None => {
                class_names.push(label.to_string());
                class_names.len() - 1
            }
        };
        labels.push(id);
        for (jj, &j) in feature_idx.iter().enumerate() {
            let cell = rec.get(j).unwrap_or("").trim();
            x[(i, jj)] = cell.parse::<f64>().map_err(|_| {
                Error::input(format!(
                    "non-numeric value `{cell}` in feature column `{}` (row {})",
                    headers[j],
                    i + 1
                ))
            })?;
        }
    }
    if class_names.len() < 2 {
        return Err(Error::input("label column has fewer than two classes"));
    }
    if standardize {
        standardize_columns(&mut x);
    }
    Ok(LabeledDataset {
        name: name.to_string(),
        x,
        labels,
        n_classes: class_names.len(),
        feature_names: feature_idx.iter().map(|&j| headers[j].clone()).collect(),
        class_names,
    })
}

/// The vendored olive oil data labeled by macro area.
pub fn load_olive_oil(standardize: bool) -> Result<LabeledDataset> {
    read_labeled_csv(OLIVE_OIL_CSV.as_bytes(), "olive", "macro_area", standardize)
}

/// Centre every column and scale it to unit sample variance (`n − 1`
/// denominator). Constant columns are only centred.
pub fn standardize_columns(x: &mut DataMatrix) {
    let n = x.nrows();
    if n < 2 {
        return;
    }
    for j in 0..x.ncols() {
        let mean = (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x[(i, j)] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            x[(i, j)] = (x[(i, j)] - mean) / sd;
        }
    }
}

/// Numeric matrix with a header row of column names.
pub fn write_matrix_csv(path: impl AsRef<Path>, header: &[String], m: MatRef<'_, f64>) -> Result<()> {
    if header.len() != m.ncols() {
        return Err(Error::dim(format!("{} names for {} columns", header.len(), m.ncols())));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| m[(i, j)].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Numeric matrix CSV; the first row is a header and is skipped.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|c| {
                c.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_owned(),
                    msg: format!("non-numeric value `{c}` on row {}", i + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    crate::linalg::from_rows(&rows)
}
