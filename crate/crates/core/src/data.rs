//! Dataset ingestion, standardization and per-predictor similarity stacks.
//!
//! The response is centered only. Every predictor column is centered and
//! scaled so that its sum of squares is exactly one (not unit sample
//! variance); several identities used downstream depend on that convention.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{NgkError, Result};

/// Relative floor under which a centered column is treated as constant.
const CONSTANT_TOL: f64 = 1e-12;

/// Center/scale pair recorded for one predictor column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScaling {
    pub mean: f64,
    /// Root sum of squares of the centered column.
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    y_mean: f64,
    scaling: Vec<ColumnScaling>,
    column_names: Vec<String>,
    response_name: String,
}

/// How the response column is identified in a delimited file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    Index(usize),
}

impl FromStr for ResponseColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ResponseColumn::Index(i),
            Err(_) => ResponseColumn::Name(s.to_string()),
        })
    }
}

impl Dataset {
    /// Build a dataset from raw (unstandardized) values.
    pub fn from_raw(y: &[f64], x: &DMatrix<f64>, column_names: Option<Vec<String>>) -> Result<Self> {
        let n = y.len();
        let p = x.ncols();
        if n < 2 {
            return Err(NgkError::InvalidInput(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(NgkError::InvalidInput("need at least one predictor".into()));
        }
        if x.nrows() != n {
            return Err(NgkError::DimensionMismatch {
                expected: n,
                found: x.nrows(),
            });
        }
        let names = match column_names {
            Some(names) if names.len() == p => names,
            Some(names) => {
                return Err(NgkError::DimensionMismatch {
                    expected: p,
                    found: names.len(),
                })
            }
            None => (1..=p).map(|j| format!("x{j}")).collect(),
        };
        for (i, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(NgkError::NonFinite { row: i, column: 0 });
            }
        }
        for j in 0..p {
            for i in 0..n {
                if !x[(i, j)].is_finite() {
                    return Err(NgkError::NonFinite { row: i, column: j + 1 });
                }
            }
        }

        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let y_ss: f64 = yc.norm_squared();
        let y_ref: f64 = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        if y_ss <= CONSTANT_TOL * y_ref {
            return Err(NgkError::ZeroVarianceResponse);
        }

        let (xs, scaling) = standardize_columns(x, &names)?;

        Ok(Dataset {
            y: yc,
            x: xs,
            y_mean,
            scaling,
            column_names: names,
            response_name: "y".into(),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Centered response.
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Standardized predictor matrix (n x p).
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn scaling(&self) -> &[ColumnScaling] {
        &self.scaling
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    /// Undo the standardization of X.
    pub fn destandardize_x(&self) -> DMatrix<f64> {
        let mut raw = self.x.clone();
        for (j, s) in self.scaling.iter().enumerate() {
            for v in raw.column_mut(j).iter_mut() {
                *v = *v * s.scale + s.mean;
            }
        }
        raw
    }

    /// Response on its original (uncentered) scale.
    pub fn raw_y(&self) -> Vec<f64> {
        self.y.iter().map(|v| v + self.y_mean).collect()
    }

    /// Rows drawn (possibly with repeats) from the raw data, restandardized.
    pub fn resample_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let raw_x = self.destandardize_x();
        let raw_y = self.raw_y();
        let y: Vec<f64> = rows.iter().map(|&i| raw_y[i]).collect();
        let x = DMatrix::from_fn(rows.len(), self.p(), |i, j| raw_x[(rows[i], j)]);
        let mut ds = Dataset::from_raw(&y, &x, Some(self.column_names.clone()))?;
        ds.response_name = self.response_name.clone();
        Ok(ds)
    }

    /// Keep only the listed predictor columns (already standardized, so no
    /// restandardization is needed).
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        if cols.is_empty() {
            return Err(NgkError::InvalidInput("column selection is empty".into()));
        }
        for &c in cols {
            if c >= self.p() {
                return Err(NgkError::IndexOutOfRange { index: c, p: self.p() });
            }
        }
        Ok(Dataset {
            y: self.y.clone(),
            x: crate::linalg::select_columns(&self.x, cols),
            y_mean: self.y_mean,
            scaling: cols.iter().map(|&c| self.scaling[c]).collect(),
            column_names: cols.iter().map(|&c| self.column_names[c].clone()).collect(),
            response_name: self.response_name.clone(),
        })
    }

    /// Same design, different response (recentered).
    pub fn with_response(&self, y: &DVector<f64>) -> Result<Dataset> {
        if y.len() != self.n() {
            return Err(NgkError::DimensionMismatch {
                expected: self.n(),
                found: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(NgkError::NonFinite { row: 0, column: 0 });
        }
        let mean = y.mean();
        let yc = y.map(|v| v - mean);
        if yc.norm_squared() <= CONSTANT_TOL * y.norm_squared().max(f64::MIN_POSITIVE) {
            return Err(NgkError::ZeroVarianceResponse);
        }
        let mut ds = self.clone();
        ds.y = yc;
        ds.y_mean = mean;
        Ok(ds)
    }
}

/// Read a delimiter-separated file with a header row.
pub fn load_dataset(path: &Path, response: &ResponseColumn, delimiter: u8) -> Result<Dataset> {
    let io_err = |source: std::io::Error| NgkError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| NgkError::Parse {
            row: 0,
            column: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let resp_idx = match response {
        ResponseColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| NgkError::MissingResponse(name.clone()))?,
        ResponseColumn::Index(i) if *i < headers.len() => *i,
        ResponseColumn::Index(i) => return Err(NgkError::MissingResponse(i.to_string())),
    };
    if headers.len() < 2 {
        return Err(NgkError::InvalidInput(
            "file needs a response column and at least one predictor".into(),
        ));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // data rows are numbered from 1; the header is row 0
        let row = r + 1;
        let record = record.map_err(|e| NgkError::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(NgkError::Parse {
                row,
                column: record.len(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let mut vals = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(NgkError::Parse {
                    row,
                    column: c,
                    message: "missing value".into(),
                });
            }
            let v: f64 = field.parse().map_err(|_| NgkError::Parse {
                row,
                column: c,
                message: format!("not a number: `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(NgkError::NonFinite { row, column: c });
            }
            vals.push(v);
        }
        rows.push(vals);
    }
    if rows.len() < 2 {
        return Err(NgkError::InvalidInput(format!(
            "need at least 2 data rows, found {}",
            rows.len()
        )));
    }

    let pred_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != resp_idx).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[resp_idx]).collect();
    let x = DMatrix::from_fn(rows.len(), pred_cols.len(), |i, k| rows[i][pred_cols[k]]);
    let names = pred_cols.iter().map(|&c| headers[c].clone()).collect();
    let mut ds = Dataset::from_raw(&y, &x, Some(names))?;
    ds.response_name = headers[resp_idx].clone();
    Ok(ds)
}

/// Kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    /// `exp` applied entrywise to a weighted sum of negative squared differences.
    Gaussian,
    /// Weighted sum of outer products `x_j x_j^T`.
    Linear,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Linear => "linear",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = NgkError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => Ok(KernelKind::Gaussian),
            "linear" | "poly" | "linear-polynomial" | "polynomial" => Ok(KernelKind::Linear),
            other => Err(NgkError::InvalidInput(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Per-predictor similarity matrices `D^j`.
#[derive(Debug, Clone)]
pub struct DistanceStack {
    kind: KernelKind,
    matrices: Vec<DMatrix<f64>>,
}

impl DistanceStack {
    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn p(&self) -> usize {
        self.matrices.len()
    }

    pub fn n(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    pub fn matrix(&self, j: usize) -> &DMatrix<f64> {
        &self.matrices[j]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    /// `sum_j w_j D^j`.
    pub fn weighted_sum(&self, weights: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let mut acc = DMatrix::zeros(n, n);
        for (d, &w) in self.matrices.iter().zip(weights) {
            if w != 0.0 {
                acc.zip_apply(d, |a, b| *a += w * b);
            }
        }
        acc
    }

    /// Stack restricted to a subset of predictors, in the given order.
    pub fn subset(&self, cols: &[usize]) -> DistanceStack {
        DistanceStack {
            kind: self.kind,
            matrices: cols.iter().map(|&c| self.matrices[c].clone()).collect(),
        }
    }
}

/// Center each column and scale it to unit sum of squares.
pub fn standardize_columns(x: &DMatrix<f64>, names: &[String]) -> Result<(DMatrix<f64>, Vec<ColumnScaling>)> {
    let (n, p) = x.shape();
    let mut xs = DMatrix::zeros(n, p);
    let mut scaling = Vec::with_capacity(p);
    for j in 0..p {
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let raw_ss: f64 = col.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        if ss <= CONSTANT_TOL * raw_ss || ss == 0.0 {
            return Err(NgkError::ConstantColumn {
                column: j,
                name: names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1)),
            });
        }
        let scale = ss.sqrt();
        for i in 0..n {
            xs[(i, j)] = (x[(i, j)] - mean) / scale;
        }
        scaling.push(ColumnScaling { mean, scale });
    }
    Ok((xs, scaling))
}

pub fn build_distance_stack(ds: &Dataset, kind: KernelKind) -> DistanceStack {
    distance_stack_from_matrix(ds.x(), kind)
}

/// Stack built directly from an (already standardized) design matrix.
pub fn distance_stack_from_matrix(xs: &DMatrix<f64>, kind: KernelKind) -> DistanceStack {
    let n = xs.nrows();
    let matrices = (0..xs.ncols())
        .map(|j| {
            let x = xs.column(j);
            match kind {
                KernelKind::Gaussian => DMatrix::from_fn(n, n, |k, l| {
                    let d = x[k] - x[l];
                    -(d * d)
                }),
                KernelKind::Linear => DMatrix::from_fn(n, n, |k, l| x[k] * x[l]),
            }
        })
        .collect();
    DistanceStack { kind, matrices }
}
