use std::path::Path;

use crate::error::{Error, Result};
use crate::io;

/// Dense row-major matrix of precomputed text features, one row per entity
/// (or per base relation).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} feature matrix given {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (rows, cols, data) = io::read_matrix(path)?;
        FeatureMatrix::new(rows, cols, data)
    }

    /// Loads and checks the row count against an expected entity/relation count.
    pub fn load_bound(path: &Path, expected_rows: usize) -> Result<Self> {
        let m = Self::load(path)?;
        if m.rows != expected_rows {
            return Err(Error::Dimension(format!(
                "{} has {} rows, expected {expected_rows}",
                path.display(),
                m.rows
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_matrix(path, self.rows, self.cols, &self.data)
    }
}
