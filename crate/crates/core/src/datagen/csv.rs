use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

/// Which columns of a CSV file hold the label and the features.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub label: String,
    /// Feature columns in order; `None` means every column except the label.
    pub features: Option<Vec<String>>,
}

impl CsvSchema {
    pub fn new(label: impl Into<String>) -> Self {
        CsvSchema {
            label: label.into(),
            features: None,
        }
    }
}

/// Reads a comma-separated file with a header row. Labels must belong to
/// `classes`, whose order defines class indices. Error rows count data rows
/// from 1 (the header is not counted); columns count from 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema, classes: &[String]) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema, classes)
}

pub fn read_csv<R: Read>(input: R, schema: &CsvSchema, classes: &[String]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let csv_err = |row: usize, column: usize, msg: String| Error::Csv { row, column, msg };
    let header = reader
        .headers()
        .map_err(|e| csv_err(0, 0, e.to_string()))?
        .clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| csv_err(0, 0, format!("missing column {name:?}")))
    };
    let label_col = find(&schema.label)?;
    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&c| c != label_col).collect(),
    };

    let p = feature_cols.len();
    let mut values = Vec::new();
    let mut y = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| csv_err(row, 0, e.to_string()))?;
        let label = record.get(label_col).unwrap_or("").trim();
        let class = classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| csv_err(row, label_col + 1, format!("unknown label {label:?}")))?;
        y.push(class);
        for &c in &feature_cols {
            let cell = record.get(c).unwrap_or("").trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| csv_err(row, c + 1, format!("non-numeric value {cell:?}")))?;
            if !v.is_finite() {
                return Err(csv_err(row, c + 1, format!("non-finite value {cell:?}")));
            }
            values.push(v);
        }
    }
    let x = Array2::from_shape_vec((y.len(), p), values).expect("row-major feature matrix");
    Dataset::new(x, y, classes.to_vec())
}

/// Writes `label,x1..xp` with a header row.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    write_csv_to(&mut out, data)?;
    out.flush()?;
    Ok(())
}

pub fn write_csv_to<W: Write>(out: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut header = vec!["label".to_string()];
    header.extend((1..=data.p()).map(|l| format!("x{l}")));
    w.write_record(&header).map_err(io)?;
    for (row, &yi) in data.x.rows().into_iter().zip(&data.y) {
        let mut rec = vec![data.classes[yi].clone()];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
