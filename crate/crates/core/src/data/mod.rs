//! Datasets, CSV plumbing, synthetic generators and evaluation harnesses.

mod cv;
mod factor;

pub use cv::{
    cv_tune, default_grid, fit_predict, fold_ids, holdout_benchmark, sse, CvResult, GridKind, HoldoutConfig, HoldoutReport,
    SplitPlan,
};
pub use factor::{gen_factor_model, FactorData, FactorModelSpec, Loadings, ResponseModel};

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Vec<String>,
    pub response_name: String,
    /// Present when `x` and `y` have been centered and scaled.
    pub standardization: Option<Standardization>,
}

/// Per-column centering and scaling learned from one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    /// Indices of retained columns in the input matrix.
    pub kept: Vec<usize>,
    /// Names of columns dropped for having zero variance.
    pub dropped: Vec<String>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub response_mean: f64,
}

impl Standardization {
    /// Sample means and standard deviations of `x`, dropping constant columns.
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::Data("standardization needs at least two rows".into()));
        }
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        let mut means = Vec::new();
        let mut scales = Vec::new();
        for j in 0..x.ncols() {
            let col = x.column(j);
            let m = col.mean();
            let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            if sd <= 1e-12 * m.abs().max(1.0) {
                dropped.push(names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1)));
                continue;
            }
            kept.push(j);
            means.push(m);
            scales.push(sd);
        }
        if kept.is_empty() {
            return Err(Error::Data("every predictor column is constant".into()));
        }
        Ok(Standardization { kept, dropped, means, scales, response_mean: y.mean() })
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), self.kept.len(), |i, k| (x[(i, self.kept[k])] - self.means[k]) / self.scales[k])
    }

    pub fn apply_response(&self, y: &DVector<f64>) -> DVector<f64> {
        y.add_scalar(-self.response_mean)
    }
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, column_names: Vec<String>, response_name: impl Into<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Data(format!("{} rows in X but {} responses", x.nrows(), y.len())));
        }
        if column_names.len() != x.ncols() {
            return Err(Error::Data("one name per column is required".into()));
        }
        Ok(Dataset { x, y, column_names, response_name: response_name.into(), standardization: None })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Centers and scales every column and centers the response, using this
    /// dataset's own statistics.
    pub fn standardized(&self) -> Result<Dataset> {
        let st = Standardization::fit(&self.x, &self.y, &self.column_names)?;
        Ok(Dataset {
            x: st.apply(&self.x),
            y: st.apply_response(&self.y),
            column_names: st.kept.iter().map(|&j| self.column_names[j].clone()).collect(),
            response_name: self.response_name.clone(),
            standardization: Some(st),
        })
    }

    /// Rows `idx` in the given order.
    pub fn rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx.iter()),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i])),
            column_names: self.column_names.clone(),
            response_name: self.response_name.clone(),
            standardization: None,
        }
    }
}

/// Reads a numeric CSV with a header row, without standardizing.
pub fn read_csv_raw(path: impl AsRef<Path>, response: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let ycol = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::Data(format!("response column '{response}' not found in {}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut missing = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(Error::Data(format!("line {line}: expected {} fields, found {}", headers.len(), rec.len())));
        }
        let mut row = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
                missing.push(format!("line {line}, column '{}'", headers[j]));
                row.push(f64::NAN);
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Data(format!("line {line}, column '{}': cannot parse '{field}'", headers[j])))?;
            row.push(v);
        }
        rows.push(row);
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!("missing values at {}", missing.join("; "))));
    }
    if rows.len() < 2 {
        return Err(Error::Data(format!("{} has fewer than two data rows", path.display())));
    }
    let n = rows.len();
    let cols: Vec<usize> = (0..headers.len()).filter(|&j| j != ycol).collect();
    let x = DMatrix::from_fn(n, cols.len(), |i, k| rows[i][cols[k]]);
    let y = DVector::from_fn(n, |i, _| rows[i][ycol]);
    Dataset::new(x, y, cols.iter().map(|&j| headers[j].clone()).collect(), response)
}

/// Reads a numeric CSV and standardizes it.
pub fn load_csv(path: impl AsRef<Path>, response: &str) -> Result<Dataset> {
    read_csv_raw(path, response)?.standardized()
}

/// Writes predictors followed by the response, with a header row.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = data.column_names.clone();
    header.push(data.response_name.clone());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let row: Vec<String> = (0..data.p()).map(|j| data.x[(i, j)]).chain(std::iter::once(data.y[i])).map(|v| v.to_string()).collect();
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_columns_are_dropped() {
        let x = DMatrix::from_row_slice(3, 2, &[5.0, 1.0, 5.0, 2.0, 5.0, 4.0]);
        let d = Dataset::new(x, DVector::from_vec(vec![1.0, 2.0, 3.0]), vec!["c".into(), "v".into()], "y").unwrap();
        let s = d.standardized().unwrap();
        assert_eq!(s.p(), 1);
        assert_eq!(s.standardization.as_ref().unwrap().dropped, vec!["c".to_string()]);
        assert!(s.x.column(0).mean().abs() < 1e-12);
        assert!(s.y.mean().abs() < 1e-12);
    }
}
