// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{DMatrix, DVector};

use super::EncodingError;

/// Principal axes of a data matrix with rows as observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// `[k × d]`, one unit-norm axis per row, by descending variance.
    pub components: DMatrix<f64>,
    /// Variance along each axis (divisor `n - 1`).
    pub explained_variance: Vec<f64>,
}

impl Pca {
    /// Each axis is signed so that its largest-magnitude loading is positive.
    pub fn fit(data: &DMatrix<f64>, k: usize) -> Result<Self, EncodingError> {
        let (n, d) = data.shape();
        if k == 0 || k > n.min(d) {
            return Err(EncodingError::InvalidInput(format!(
                "PCA needs 1 <= k <= min(n, d) = {}, got {k}",
                n.min(d)
            )));
        }
        if n < 2 {
            return Err(EncodingError::InvalidInput("PCA needs at least 2 observations".into()));
        }
        let mean = DVector::from_iterator(d, data.column_iter().map(|c| c.mean()));
        let mut centered = data.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        let svd = centered.svd(false, true);
        let v_t = svd.v_t.expect("v_t requested");
        let mut components = v_t.rows(0, k).clone_owned();
        for mut row in components.row_iter_mut() {
            let imax = row.iamax_full().1;
            if row[imax] < 0.0 {
                row.neg_mut();
            }
        }
        let explained_variance = svd.singular_values.iter().take(k).map(|s| s * s / (n - 1) as f64).collect();
        Ok(Self { mean, components, explained_variance })
    }

    /// Projects rows onto the axes, `[n × k]`.
    pub fn transform(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut centered = data.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
        }
        centered * self.components.transpose()
    }

    pub fn inverse_transform(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = scores * &self.components;
        for mut row in out.row_iter_mut() {
            row += self.mean.transpose();
        }
        out
    }
}

pub fn pca_reduce(data: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, Pca), EncodingError> {
    let pca = Pca::fit(data, k)?;
    Ok((pca.transform(data), pca))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> DMatrix<f64> {
        DMatrix::from_fn(30, 5, |r, c| ((r * 7 + c * 3) as f64 * 0.61).sin() * (c + 1) as f64)
    }

    #[test]
    fn full_rank_preserves_variance_and_reconstructs() {
        let x = data();
        let (scores, pca) = pca_reduce(&x, 5).unwrap();
        let total: f64 = x.column_iter().map(|c| c.variance() * 30.0 / 29.0).sum();
        let kept: f64 = pca.explained_variance.iter().sum();
        assert!((total - kept).abs() < 1e-9 * total);
        assert!((pca.inverse_transform(&scores) - x).amax() < 1e-10);
    }

    #[test]
    fn axes_are_orthonormal_and_signed() {
        let (_, pca) = pca_reduce(&data(), 3).unwrap();
        let gram = &pca.components * pca.components.transpose();
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-10);
        for row in pca.components.row_iter() {
            assert!(row[row.iamax_full().1] > 0.0);
        }
        assert!(pca.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn k_too_large() {
        assert!(pca_reduce(&data(), 6).is_err());
        assert!(pca_reduce(&data(), 0).is_err());
    }
}
