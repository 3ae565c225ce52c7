use crate::error::{Error, Result};
use crate::io;
use crate::numeric::{norm, Matrix};

/// Tolerance on row norms.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// N × d batch whose rows lie on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    rows: Matrix,
}

impl EmbeddingBatch {
    /// Validates that every row has unit norm.
    pub fn new(rows: Matrix) -> Result<Self> {
        if rows.rows() == 0 || rows.cols() == 0 {
            return Err(Error::invalid("embedding batch needs N >= 1 and d >= 1"));
        }
        if !rows.is_finite() {
            return Err(Error::NonFinite("embedding batch entry".into()));
        }
        for (i, r) in rows.row_iter().enumerate() {
            let n = norm(r);
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::invalid(format!("embedding row {i} has norm {n}")));
            }
        }
        Ok(EmbeddingBatch { rows })
    }

    /// L2-normalizes each row; rejects rows with (near-)zero norm.
    pub fn normalized(mut rows: Matrix) -> Result<Self> {
        for i in 0..rows.rows() {
            let r = rows.row_mut(i);
            let n = norm(r);
            if !(n > 1e-300) || !n.is_finite() {
                return Err(Error::invalid(format!(
                    "cannot normalize embedding row {i} with norm {n}"
                )));
            }
            r.iter_mut().for_each(|v| *v /= n);
        }
        Self::new(rows)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.rows
    }

    pub fn into_matrix(self) -> Matrix {
        self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::new(io::read_csv_matrix(text)?)
    }

    pub fn to_csv(&self) -> String {
        io::write_csv_matrix(&self.rows)
    }
}
