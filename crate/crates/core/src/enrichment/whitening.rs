//! PCA whitening: `x̃ = (x − μ) · U Λ^{-1/2}` where `Σ = U Λ Uᵀ` is the
//! sample covariance of the fitting rows.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this are clamped before inversion.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningParams {
    dim: usize,
    mean: Vec<f32>,
    /// Row-major `dim × dim`; whitened `j` = Σ_i centered_i · transform[i][j].
    transform: Vec<f32>,
    /// Number of eigenvalues that were clamped during fitting.
    pub clamped: usize,
}

impl WhiteningParams {
    pub fn from_parts(dim: usize, mean: Vec<f32>, transform: Vec<f32>) -> Result<Self> {
        if mean.len() != dim || transform.len() != dim * dim {
            return Err(Error::validation(format!(
                "whitening parameters do not match dimension {dim}"
            )));
        }
        Ok(WhiteningParams {
            dim,
            mean,
            transform,
            clamped: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn transform(&self) -> &[f32] {
        &self.transform
    }

    pub fn apply(&self, x: &[f32]) -> Result<Vec<f32>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let d = self.dim;
        let centered: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .map(|(v, m)| *v as f64 - *m as f64)
            .collect();
        let mut out = vec![0.0f64; d];
        for (i, c) in centered.iter().enumerate() {
            let row = &self.transform[i * d..(i + 1) * d];
            for (o, w) in out.iter_mut().zip(row) {
                *o += c * *w as f64;
            }
        }
        Ok(out.into_iter().map(|v| v as f32).collect())
    }

    /// Whiten every row of a row-major matrix.
    pub fn apply_rows(&self, rows: &[f32]) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(rows.len());
        for row in rows.chunks_exact(self.dim) {
            out.extend(self.apply(row)?);
        }
        Ok(out)
    }
}

/// Fit on `rows` (row-major, `dim` columns). Needs at least `dim + 1` rows.
pub fn fit_whitening(rows: &[f32], dim: usize) -> Result<WhiteningParams> {
    if dim == 0 || !rows.len().is_multiple_of(dim) {
        return Err(Error::validation("row buffer does not match dimension"));
    }
    let n = rows.len() / dim;
    if n < dim + 1 {
        return Err(Error::validation(format!(
            "whitening in {dim} dimensions needs at least {} rows, got {n}",
            dim + 1
        )));
    }
    let mut mean = vec![0.0f64; dim];
    for row in rows.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += *v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |r, c| rows[r * dim + c] as f64 - mean[c]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut clamped = 0;
    let scales: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l < EIGENVALUE_FLOOR {
                clamped += 1;
                EIGENVALUE_FLOOR
            } else {
                l
            }
        })
        .map(|l| 1.0 / l.sqrt())
        .collect();
    if clamped > 0 {
        log::warn!("whitening: {clamped} of {dim} covariance eigenvalues clamped to {EIGENVALUE_FLOOR:e}");
    }
    let mut transform = vec![0.0f32; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            transform[i * dim + j] = (eig.eigenvectors[(i, j)] * scales[j]) as f32;
        }
    }
    Ok(WhiteningParams {
        dim,
        mean: mean.into_iter().map(|m| m as f32).collect(),
        transform,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_covariance_scales_to_unit_variance() {
        // Columns with variance 4 and 1, uncorrelated, zero mean.
        let rows: Vec<f32> = vec![2.0, 1.0, -2.0, 1.0, 2.0, -1.0, -2.0, -1.0];
        let w = fit_whitening(&rows, 2).unwrap();
        let out = w.apply_rows(&rows).unwrap();
        let n = 4.0;
        for c in 0..2 {
            let var: f64 = out.chunks(2).map(|r| (r[c] as f64).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var - 1.0).abs() < 1e-6, "column {c}: {var}");
        }
        // Sample variances are 16/3 and 4/3; the transform has
        // entries ±sqrt(3)/4 and ±sqrt(3)/2.
        let mut mags: Vec<f64> = w.transform().iter().map(|v| (*v as f64).abs()).filter(|v| *v > 1e-9).collect();
        mags.sort_by(f64::total_cmp);
        assert!((mags[0] - 3f64.sqrt() / 4.0).abs() < 1e-6);
        assert!((mags[1] - 3f64.sqrt() / 2.0).abs() < 1e-6);
    }

    #[test]
    fn too_few_rows() {
        assert!(fit_whitening(&[1.0, 2.0, 3.0, 4.0], 2).is_err());
    }

    #[test]
    fn rank_deficient_input_is_clamped() {
        // Second column is a copy of the first.
        let rows: Vec<f32> = (0..10).flat_map(|i| [i as f32, i as f32]).collect();
        let w = fit_whitening(&rows, 2).unwrap();
        assert_eq!(w.clamped, 1);
        assert!(w.apply(&[1.0, 1.0]).unwrap().iter().all(|v| v.is_finite()));
    }
}
