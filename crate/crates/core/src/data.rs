//! Dataset representation, CSV ingestion, unit scaling and train/test splits.
//!
//! A [`Dataset`] is a dense row-major `N x d` matrix of finite reals with an
//! optional integer class tag per row. Labels are carried along for
//! evaluation only; detection and imputation never read them.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    rows: usize,
    dims: usize,
    values: Vec<f64>,
    labels: Option<Vec<i64>>,
}

impl Dataset {
    /// Builds a dataset from row-major values, rejecting non-finite cells.
    pub fn new(rows: usize, dims: usize, values: Vec<f64>, labels: Option<Vec<i64>>) -> Result<Self> {
        if values.len() != rows * dims {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: rows * dims,
            });
        }
        if let Some(labels) = &labels {
            if labels.len() != rows {
                return Err(Error::LengthMismatch {
                    left: labels.len(),
                    right: rows,
                });
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dims.max(1),
                column: pos % dims.max(1),
            });
        }
        Ok(Self {
            rows,
            dims,
            values,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty)?;
        let dims = first.len();
        let mut values = Vec::with_capacity(rows.len() * dims);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dims {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: dims,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), dims, values, None)
    }

    pub fn with_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != self.rows {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: self.rows,
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dims..(i + 1) * self.dims]
    }

    /// Row `i` restricted to the attributes of `range`.
    pub fn slice(&self, i: usize, range: AttributeRange) -> &[f64] {
        &self.row(i)[range.start..range.end]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dims.max(1)).take(self.rows)
    }

    /// New dataset holding the given rows (and their labels) in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Dataset {
            rows: indices.len(),
            dims: self.dims,
            values,
            labels,
        }
    }

    /// Replaces the value matrix, keeping labels. Shape must match.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.rows, self.dims, values, self.labels.clone())
    }
}

/// Half-open, contiguous attribute interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeRange {
    pub start: usize,
    pub end: usize,
}

impl AttributeRange {
    pub fn new(start: usize, end: usize, dims: usize) -> Result<Self> {
        if start >= end || end > dims {
            return Err(Error::InvalidRange { start, end, dims });
        }
        Ok(Self { start, end })
    }

    pub fn full(dims: usize) -> Self {
        Self { start: 0, end: dims }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, attr: usize) -> bool {
        (self.start..self.end).contains(&attr)
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl std::fmt::Display for AttributeRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Clone, Debug, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    pub has_labels: bool,
    /// Column holding the class tag; defaults to the last column.
    pub label_column: Option<usize>,
}

/// Column layout of a parsed CSV, kept so outputs can mirror their input.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvLayout {
    pub header: Option<Vec<String>>,
    pub label_column: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct CsvTable {
    pub data: Dataset,
    pub layout: CsvLayout,
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    Ok(load_csv_table(path, options)?.data)
}

pub fn load_csv_table(path: impl AsRef<Path>, options: &CsvOptions) -> Result<CsvTable> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), options)
}

pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = if options.has_header {
        Some(rdr.headers()?.iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };

    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    let mut label_column = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                row,
                expected,
                found: record.len(),
            });
        }
        if options.has_labels && label_column.is_none() {
            let col = options.label_column.unwrap_or(expected.saturating_sub(1));
            if col >= expected {
                return Err(invalid(
                    "label_column",
                    format!("column {col} out of range for {expected} columns"),
                ));
            }
            label_column = Some(col);
        }
        for (column, cell) in record.iter().enumerate() {
            let parsed: f64 = cell.parse().map_err(|_| Error::ParseCell {
                row,
                column,
                cell: cell.to_owned(),
            })?;
            if !parsed.is_finite() {
                return Err(Error::NonFinite { row, column });
            }
            if Some(column) == label_column {
                if parsed.fract() != 0.0 {
                    return Err(Error::ParseCell {
                        row,
                        column,
                        cell: cell.to_owned(),
                    });
                }
                labels.push(parsed as i64);
            } else {
                values.push(parsed);
            }
        }
        rows += 1;
    }

    if rows == 0 {
        return Err(Error::Empty);
    }
    let width = width.unwrap_or(0);
    let dims = width - usize::from(label_column.is_some());
    if dims == 0 {
        return Err(Error::Empty);
    }
    let data = Dataset::new(rows, dims, values, label_column.map(|_| labels))?;
    Ok(CsvTable {
        data,
        layout: CsvLayout {
            header,
            label_column,
        },
    })
}

/// Writes `data` using `layout`: header row and label column position are
/// reproduced when present. Reals use the shortest round-trip formatting.
pub fn write_csv<W: Write>(writer: W, data: &Dataset, layout: &CsvLayout) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().from_writer(writer);
    if let Some(header) = &layout.header {
        wtr.write_record(header)?;
    }
    let labels = data.labels();
    let mut record: Vec<String> = Vec::with_capacity(data.dims() + 1);
    for i in 0..data.rows() {
        record.clear();
        record.extend(data.row(i).iter().map(|v| format!("{v}")));
        if let (Some(col), Some(labels)) = (layout.label_column, labels) {
            record.insert(col.min(record.len()), labels[i].to_string());
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, data: &Dataset, layout: &CsvLayout) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(std::io::BufWriter::new(file), data, layout)
}

/// Per-attribute affine map onto `[0, 1]` fitted on a reference set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalingParams {
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty);
        }
        let mut min = vec![f64::INFINITY; data.dims()];
        let mut max = vec![f64::NEG_INFINITY; data.dims()];
        for row in data.iter_rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    /// Maps values with the fitted statistics. Values outside the fitted
    /// support are not clipped; constant attributes map to 0.
    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        self.check_dims(data)?;
        let mut values = data.values().to_vec();
        for row in values.chunks_exact_mut(data.dims()) {
            for (j, v) in row.iter_mut().enumerate() {
                let span = self.max[j] - self.min[j];
                *v = if span > 0.0 { (*v - self.min[j]) / span } else { 0.0 };
            }
        }
        data.with_values(values)
    }

    /// Inverse map. Constant attributes come back as their fitted value.
    pub fn inverse(&self, data: &Dataset) -> Result<Dataset> {
        self.check_dims(data)?;
        let mut values = data.values().to_vec();
        for row in values.chunks_exact_mut(data.dims()) {
            for (j, v) in row.iter_mut().enumerate() {
                let span = self.max[j] - self.min[j];
                *v = if span > 0.0 { *v * span + self.min[j] } else { self.min[j] };
            }
        }
        data.with_values(values)
    }

    fn check_dims(&self, data: &Dataset) -> Result<()> {
        if data.dims() != self.min.len() {
            return Err(Error::LengthMismatch {
                left: data.dims(),
                right: self.min.len(),
            });
        }
        Ok(())
    }
}

pub fn scale_unit(fit: &Dataset) -> Result<(Dataset, ScalingParams)> {
    let params = ScalingParams::fit(fit)?;
    Ok((params.transform(fit)?, params))
}

/// Seeded disjoint row partition. The train share is `round(N * fraction)`
/// clamped so both parts are nonempty; `caps` truncates each part afterwards.
pub fn split_train_test(
    data: &Dataset,
    train_fraction: f64,
    seed: u64,
    caps: Option<(usize, usize)>,
) -> Result<(Dataset, Dataset)> {
    if data.rows() < 2 {
        return Err(invalid("rows", "at least two rows are required to split"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid("train_fraction", format!("{train_fraction} is not in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..data.rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_train = ((data.rows() as f64 * train_fraction).round() as usize).clamp(1, data.rows() - 1);
    let (train, test) = order.split_at(n_train);
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    if let Some((max_train, max_test)) = caps {
        train.truncate(max_train);
        test.truncate(max_test);
    }
    Ok((data.select(&train), data.select(&test)))
}
