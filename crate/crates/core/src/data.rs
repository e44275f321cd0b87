//! Paired covariate / functional-response data and its on-disk formats.
//!
//! A dataset is stored as a CSV (header row, `p` covariate columns followed by
//! `m` response columns) plus a JSON manifest that carries the evaluation grid.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

pub const DATASET_SCHEMA: &str = "targetpred.dataset.v1";

/// Target sample standard deviation of continuous covariates.
pub const COVARIATE_SD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// n x p covariates (no intercept column).
    pub x: DMatrix<f64>,
    /// n x m responses, one row per subject.
    pub y: DMatrix<f64>,
    /// Evaluation points of the response columns.
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: String,
    pub csv: String,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub tau: Vec<f64>,
    #[serde(default)]
    pub covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, tau: Vec<f64>) -> Result<Self> {
        let n = x.nrows();
        check_dim("dataset response rows", n, y.nrows())?;
        check_dim("dataset grid length", y.ncols(), tau.len())?;
        if n < 2 {
            return Err(Error::invalid("a dataset needs at least two subjects"));
        }
        if tau.is_empty() {
            return Err(Error::invalid("response grid is empty"));
        }
        if tau.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tau must be strictly increasing"));
        }
        if tau[0] < 0.0 || tau[tau.len() - 1] > 1.0 {
            return Err(Error::invalid("tau must lie within [0, 1]"));
        }
        if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid("dataset contains missing or non-finite entries"));
        }
        Ok(Dataset { x, y, tau })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    /// Covariates with a leading intercept column.
    pub fn design(&self) -> DMatrix<f64> {
        with_intercept(&self.x)
    }

    pub fn curve(&self, i: usize) -> Vec<f64> {
        self.y.row(i).iter().copied().collect()
    }

    /// Centers and rescales every non-binary covariate column to sample sd 0.5.
    /// Binary {0, 1} and constant columns are left untouched.
    pub fn standardize_covariates(&mut self) {
        standardize_columns(&mut self.x);
    }

    /// Restricts the dataset to the given subject rows.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
            tau: self.tau.clone(),
        }
    }

    pub fn write_csv(&self, path: &Path, covariate_names: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header: Vec<String> = (0..self.p())
            .map(|j| covariate_names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1)))
            .collect();
        header.extend((0..self.m()).map(|j| format!("y{}", j + 1)));
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for i in 0..self.n() {
            let row: Vec<String> = self
                .x
                .row(i)
                .iter()
                .chain(self.y.row(i).iter())
                .map(|v| format!("{v:?}"))
                .collect();
            w.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, p: usize, tau: Vec<f64>) -> Result<(Dataset, Vec<String>)> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
        let m = tau.len();
        if header.len() != p + m {
            return Err(Error::format(
                path,
                format!("expected {} columns ({} covariates + {} responses), found {}", p + m, p, m, header.len()),
            ));
        }
        let names = header.iter().take(p).map(str::to_string).collect();
        let mut values = Vec::new();
        let mut n = 0;
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            if rec.len() != p + m {
                return Err(Error::format(path, format!("row {} has {} fields", line + 2, rec.len())));
            }
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(path, format!("row {}: cannot parse {field:?}", line + 2)))?;
                values.push(v);
            }
            n += 1;
        }
        let all = DMatrix::from_row_slice(n, p + m, &values);
        let x = all.columns(0, p).into_owned();
        let y = all.columns(p, m).into_owned();
        let data = Dataset::new(x, y, tau).map_err(|e| Error::format(path, e.to_string()))?;
        Ok((data, names))
    }

    /// Writes `<manifest>` and a sibling CSV.
    pub fn save(&self, manifest_path: &Path, covariate_names: &[String]) -> Result<()> {
        let csv_path = manifest_path.with_extension("csv");
        self.write_csv(&csv_path, covariate_names)?;
        let manifest = DatasetManifest {
            schema: DATASET_SCHEMA.to_string(),
            csv: csv_path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            n: self.n(),
            p: self.p(),
            m: self.m(),
            tau: self.tau.clone(),
            covariate_names: covariate_names.to_vec(),
        };
        write_json(manifest_path, &manifest)
    }

    pub fn load(manifest_path: &Path) -> Result<(Dataset, Vec<String>)> {
        let manifest: DatasetManifest = read_json(manifest_path)?;
        if manifest.schema != DATASET_SCHEMA {
            return Err(Error::format(manifest_path, format!("unknown schema {:?}", manifest.schema)));
        }
        if manifest.tau.len() != manifest.m {
            return Err(Error::format(manifest_path, "tau length disagrees with m"));
        }
        let csv_path = sibling(manifest_path, &manifest.csv);
        let (data, names) = Dataset::read_csv(&csv_path, manifest.p, manifest.tau)?;
        if data.n() != manifest.n {
            return Err(Error::format(&csv_path, format!("expected {} rows, found {}", manifest.n, data.n())));
        }
        Ok((data, names))
    }
}

pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, x.ncols() + 1);
    d.column_mut(0).fill(1.0);
    d.columns_mut(1, x.ncols()).copy_from(x);
    d
}

pub fn is_binary_column(col: &[f64]) -> bool {
    col.iter().all(|&v| v == 0.0 || v == 1.0)
}

pub fn standardize_columns(x: &mut DMatrix<f64>) {
    for j in 0..x.ncols() {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        if is_binary_column(&col) {
            continue;
        }
        let mu = linalg::mean(&col);
        let sd = linalg::sample_sd(&col);
        if !(sd > 0.0) {
            continue;
        }
        for v in x.column_mut(j).iter_mut() {
            *v = (*v - mu) / sd * COVARIATE_SD;
        }
    }
}

/// Equally spaced grid of `m` points on [0, 1].
pub fn unit_grid(m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.5];
    }
    (0..m).map(|j| j as f64 / (m - 1) as f64).collect()
}

pub(crate) fn sibling(base: &Path, name: &str) -> PathBuf {
    base.parent().map(|d| d.join(name)).unwrap_or_else(|| PathBuf::from(name))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        }
    } else {
        Error::format(path, e.to_string())
    }
}
