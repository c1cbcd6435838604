use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::glm::Family;

/// A multivariate time series `(X_t)_{t=0..T}` stored as a `(T+1) × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
    column_names: Vec<String>,
    family_hint: Option<Family>,
}

impl TimeSeries {
    pub fn new(values: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        if values.ncols() != column_names.len() {
            return Err(Error::Data(format!(
                "{} columns but {} names",
                values.ncols(),
                column_names.len()
            )));
        }
        if values.ncols() == 0 || values.nrows() == 0 {
            return Err(Error::Data("time series must have at least one row and one column".into()));
        }
        for c in 0..values.ncols() {
            for r in 0..values.nrows() {
                let v = values[(r, c)];
                if !v.is_finite() {
                    return Err(Error::Data(format!("non-finite value {v} at row {r}, column {c}")));
                }
            }
        }
        Ok(Self { values, column_names, family_hint: None })
    }

    /// Series with default column names `x0, x1, …`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|k| format!("x{k}")).collect();
        Self::new(values, names)
    }

    /// Attach a family hint; Poisson hints require non-negative integer entries.
    pub fn with_family_hint(mut self, family: Family) -> Result<Self> {
        if family != Family::Gaussian {
            for c in 0..self.dim() {
                for r in 0..self.values.nrows() {
                    if !family.response_ok(self.values[(r, c)]) {
                        return Err(Error::Data(format!(
                            "value {} at row {r}, column {c} is not valid for the {} family",
                            self.values[(r, c)],
                            family.name()
                        )));
                    }
                }
            }
        }
        self.family_hint = Some(family);
        Ok(self)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn family_hint(&self) -> Option<Family> {
        self.family_hint
    }

    /// Number of series `d`.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Number of transitions `T` (one less than the number of rows).
    pub fn transitions(&self) -> usize {
        self.values.nrows().saturating_sub(1)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    /// Column `k` restricted to rows `start..end`.
    pub fn column_slice(&self, k: usize, start: usize, end: usize) -> Vec<f64> {
        (start..end).map(|t| self.values[(t, k)]).collect()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.values.row(t).iter().copied().collect()
    }

    /// Rows `start..end` as a new series.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_rows() {
            return Err(Error::Data(format!(
                "window {start}..{end} out of range for {} rows",
                self.n_rows()
            )));
        }
        let values = self.values.rows(start, end - start).into_owned();
        Ok(Self {
            values,
            column_names: self.column_names.clone(),
            family_hint: self.family_hint,
        })
    }

    /// Columns in the given order (used to permute nodes).
    pub fn select_columns(&self, order: &[usize]) -> Result<Self> {
        let mut values = DMatrix::zeros(self.n_rows(), order.len());
        let mut names = Vec::with_capacity(order.len());
        for (c, &k) in order.iter().enumerate() {
            if k >= self.dim() {
                return Err(Error::InvalidArgument(format!("column {k} out of range")));
            }
            values.set_column(c, &self.values.column(k));
            names.push(self.column_names[k].clone());
        }
        Ok(Self { values, column_names: names, family_hint: self.family_hint })
    }
}
