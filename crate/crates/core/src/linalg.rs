//! Small dense linear-algebra helpers shared by the variance and β modules.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative eigenvalue threshold below which a symmetric matrix is treated as singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Log-determinant of a symmetric positive definite matrix via its eigendecomposition.
pub fn log_det_spd(m: &DMatrix<f64>, name: &str) -> Result<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    check_spectrum(&eig, name)?;
    Ok(eig.eigenvalues.iter().map(|v| v.ln()).sum())
}

/// Inverse of a symmetric positive definite matrix via its eigendecomposition.
pub fn inverse_spd(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    check_spectrum(&eig, name)?;
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * DMatrix::from_diagonal(&inv_vals) * q.transpose())))
}

/// Inverse of a general square matrix; singular matrices report their null directions.
pub fn inverse_general(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let max = svd.singular_values.max();
    let tol = max * SINGULAR_RTOL * m.nrows() as f64;
    if max == 0.0 || svd.singular_values.iter().any(|&s| s <= tol) {
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let null_directions = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= tol)
            .map(|(i, _)| v_t.row(i).iter().copied().collect())
            .collect();
        return Err(Error::RankDeficient {
            matrix: name.to_string(),
            null_directions,
        });
    }
    svd.pseudo_inverse(0.0)
        .map_err(|e| Error::Dimension(format!("{name}: {e}")))
}

fn check_spectrum(eig: &SymmetricEigen<f64, nalgebra::Dyn>, name: &str) -> Result<()> {
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let tol = max * SINGULAR_RTOL * eig.eigenvalues.len() as f64;
    if max == 0.0 || eig.eigenvalues.iter().any(|&v| v <= tol) {
        let null_directions = eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &v)| v <= tol)
            .map(|(i, _)| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();
        return Err(Error::RankDeficient {
            matrix: name.to_string(),
            null_directions,
        });
    }
    Ok(())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v))
}

/// Row-major matrix wire format: `{"rows": r, "cols": c, "data": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixRecord {
    fn from(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter());
        }
        MatrixRecord {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl MatrixRecord {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Dimension(format!(
                "matrix record {}x{} carries {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// `serde(with = ...)` adapter for `DMatrix<f64>` fields.
pub mod matrix_serde {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRecord::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let rec = MatrixRecord::deserialize(d)?;
        rec.to_matrix().map_err(serde::de::Error::custom)
    }
}

/// Numerically stable log Σ exp.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
