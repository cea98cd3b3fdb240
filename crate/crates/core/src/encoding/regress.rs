// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EncodingError;

/// Relative singular-value cutoff below which a direction counts as null.
const RANK_TOL: f64 = 1e-10;

/// `1 - SS_res / SS_tot` with `SS_tot` taken around the mean of `y`.
/// Zero when `y` is constant.
pub fn r_squared(y: &DVector<f64>, fitted: &DVector<f64>) -> f64 {
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return 0.0;
    }
    let ss_res: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - ss_res / ss_tot
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub r2: f64,
}

/// Least squares against a fixed design; the pseudo-inverse is computed once
/// and reused for every response vector.
#[derive(Debug, Clone)]
pub struct OlsSolver {
    x: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl OlsSolver {
    pub fn new(x: &DMatrix<f64>, names: &[String]) -> Result<Self, EncodingError> {
        let (n, p) = x.shape();
        if names.len() != p {
            return Err(EncodingError::InvalidInput(format!("{} names for {p} columns", names.len())));
        }
        if n <= p {
            return Err(EncodingError::InvalidInput(format!("OLS needs more rows than columns ({n} x {p})")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EncodingError::InvalidInput("design contains non-finite values".into()));
        }
        let svd = x.clone().svd(true, true);
        let s = &svd.singular_values;
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let cutoff = s[0] * RANK_TOL;
        let null: Vec<usize> = (0..s.len()).filter(|&i| !(s[i] > cutoff)).collect();
        if !null.is_empty() {
            let mut cols: Vec<usize> =
                null.iter().flat_map(|&i| (0..p).filter(move |&j| v_t[(i, j)].abs() > 1e-6)).collect();
            cols.sort_unstable();
            cols.dedup();
            return Err(EncodingError::RankDeficient {
                rank: s.len() - null.len(),
                columns: cols.into_iter().map(|j| names[j].clone()).collect(),
            });
        }
        let u = svd.u.as_ref().expect("u requested");
        let inv_s = DMatrix::from_diagonal(&s.map(|v| 1.0 / v));
        let pinv = v_t.transpose() * inv_s * u.transpose();
        Ok(Self { x: x.clone(), pinv })
    }

    pub fn fit(&self, y: &DVector<f64>) -> OlsFit {
        let beta = &self.pinv * y;
        let fitted = &self.x * &beta;
        OlsFit { r2: r_squared(y, &fitted), beta }
    }
}

pub fn fit_ols(x: &DMatrix<f64>, names: &[String], y: &DVector<f64>) -> Result<OlsFit, EncodingError> {
    Ok(OlsSolver::new(x, names)?.fit(y))
}

/// How the ridge penalty is chosen from the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSelection {
    /// Generalized cross-validation, the rotation-invariant form of leave-one-out.
    #[default]
    Gcv,
    /// Contiguous k-fold cross-validation.
    KFold(usize),
}

/// `n` log-spaced values from `10^lo` to `10^hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![10f64.powf(lo)],
        _ => (0..n).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect(),
    }
}

pub fn default_alphas() -> Vec<f64> {
    log_grid(-3.0, 6.0, 10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    /// Coefficients in design column order, intercept included.
    pub beta: DVector<f64>,
    pub alpha: f64,
    pub r2: f64,
}

/// Ridge regression with one SVD per design. The intercept column, when
/// given, is left unpenalized by centering the other columns.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    x: DMatrix<f64>,
    intercept: Option<usize>,
    penalized: Vec<usize>,
    means: DVector<f64>,
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
    folds: Vec<(Vec<usize>, Vec<usize>, RidgeSolver)>,
}

impl RidgeSolver {
    pub fn new(x: &DMatrix<f64>, intercept: Option<usize>) -> Result<Self, EncodingError> {
        let (n, p) = x.shape();
        if n < 2 || p == 0 || x.iter().any(|v| !v.is_finite()) {
            return Err(EncodingError::DegenerateDesign(format!("{n} x {p} design with finite values required")));
        }
        if intercept.is_some_and(|c| c >= p) {
            return Err(EncodingError::InvalidInput("intercept column out of range".into()));
        }
        let penalized: Vec<usize> = (0..p).filter(|&c| Some(c) != intercept).collect();
        if penalized.is_empty() {
            return Err(EncodingError::DegenerateDesign("no penalized columns".into()));
        }
        let mut xc = x.select_columns(&penalized);
        let means = if intercept.is_some() {
            let m = DVector::from_iterator(xc.ncols(), xc.column_iter().map(|c| c.mean()));
            for (j, mut col) in xc.column_iter_mut().enumerate() {
                col.add_scalar_mut(-m[j]);
            }
            m
        } else {
            DVector::zeros(xc.ncols())
        };
        let svd = xc.svd(true, true);
        let smax = svd.singular_values[0];
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > smax * RANK_TOL).collect();
        if keep.is_empty() {
            return Err(EncodingError::DegenerateDesign("design has no variance outside the intercept".into()));
        }
        let u = svd.u.expect("u requested").select_columns(&keep);
        let v = svd.v_t.expect("v_t requested").select_rows(&keep).transpose();
        let s = DVector::from_iterator(keep.len(), keep.iter().map(|&i| svd.singular_values[i]));
        Ok(Self { x: x.clone(), intercept, penalized, means, u, s, v, folds: vec![] })
    }

    /// Switches alpha selection to contiguous k-fold cross-validation.
    pub fn with_kfold(mut self, k: usize) -> Result<Self, EncodingError> {
        let n = self.x.nrows();
        if k < 2 || k > n {
            return Err(EncodingError::InvalidInput(format!("k-fold needs 2 <= k <= {n}, got {k}")));
        }
        self.folds = (0..k)
            .map(|f| {
                let (lo, hi) = (f * n / k, (f + 1) * n / k);
                let test: Vec<usize> = (lo..hi).collect();
                let train: Vec<usize> = (0..lo).chain(hi..n).collect();
                let solver = RidgeSolver::new(&self.x.select_rows(&train), self.intercept)?;
                Ok((train, test, solver))
            })
            .collect::<Result<_, EncodingError>>()?;
        Ok(self)
    }

    pub fn with_selection(self, selection: AlphaSelection) -> Result<Self, EncodingError> {
        match selection {
            AlphaSelection::Gcv => Ok(self),
            AlphaSelection::KFold(k) => self.with_kfold(k),
        }
    }

    fn center(&self, y: &DVector<f64>) -> (f64, DVector<f64>) {
        if self.intercept.is_some() {
            let m = y.mean();
            (m, y.add_scalar(-m))
        } else {
            (0.0, y.clone())
        }
    }

    fn coefficients(&self, y: &DVector<f64>, alpha: f64) -> DVector<f64> {
        let (ybar, yc) = self.center(y);
        let z = self.u.tr_mul(&yc);
        let shrunk = DVector::from_iterator(z.len(), (0..z.len()).map(|i| self.s[i] / (self.s[i] * self.s[i] + alpha) * z[i]));
        let coef = &self.v * shrunk;
        let mut beta = DVector::zeros(self.x.ncols());
        for (j, &c) in self.penalized.iter().enumerate() {
            beta[c] = coef[j];
        }
        if let Some(ic) = self.intercept {
            beta[ic] = ybar - self.means.dot(&coef);
        }
        beta
    }

    /// Generalized cross-validation error `n RSS / (n - df)^2`.
    pub fn gcv_error(&self, y: &DVector<f64>, alpha: f64) -> f64 {
        let n = y.len() as f64;
        let (_, yc) = self.center(y);
        let z = self.u.tr_mul(&yc);
        let mut rss = yc.norm_squared() - z.norm_squared();
        let mut df = if self.intercept.is_some() { 1.0 } else { 0.0 };
        for i in 0..z.len() {
            let s2 = self.s[i] * self.s[i];
            let shrink = alpha / (s2 + alpha);
            rss += shrink * shrink * z[i] * z[i];
            df += s2 / (s2 + alpha);
        }
        let dof = n - df;
        if dof <= 0.0 {
            return f64::INFINITY;
        }
        n * rss.max(0.0) / (dof * dof)
    }

    /// Mean squared prediction error over the configured folds.
    pub fn kfold_error(&self, y: &DVector<f64>, alpha: f64) -> f64 {
        let mut sse = 0.0;
        for (train, test, solver) in &self.folds {
            let beta = solver.coefficients(&y.select_rows(train), alpha);
            let pred = self.x.select_rows(test) * beta;
            sse += (y.select_rows(test) - pred).norm_squared();
        }
        sse / y.len() as f64
    }

    pub fn fit_alpha(&self, y: &DVector<f64>, alpha: f64) -> RidgeFit {
        let beta = self.coefficients(y, alpha);
        let fitted = &self.x * &beta;
        RidgeFit { r2: r_squared(y, &fitted), beta, alpha }
    }

    /// Picks alpha from the grid (first minimum wins), then refits on all rows.
    pub fn fit(&self, y: &DVector<f64>, alphas: &[f64]) -> Result<RidgeFit, EncodingError> {
        check_alphas(alphas)?;
        if y.len() != self.x.nrows() {
            return Err(EncodingError::InvalidInput(format!("{} responses for {} rows", y.len(), self.x.nrows())));
        }
        let mut best = (f64::INFINITY, alphas[0]);
        for &a in alphas {
            let err = if self.folds.is_empty() { self.gcv_error(y, a) } else { self.kfold_error(y, a) };
            if err < best.0 {
                best = (err, a);
            }
        }
        Ok(self.fit_alpha(y, best.1))
    }
}

fn check_alphas(alphas: &[f64]) -> Result<(), EncodingError> {
    if alphas.is_empty() || alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(EncodingError::InvalidInput("alpha grid must be non-empty, finite and non-negative".into()));
    }
    Ok(())
}

pub fn fit_ridge(
    x: &DMatrix<f64>,
    intercept: Option<usize>,
    y: &DVector<f64>,
    alphas: &[f64],
) -> Result<RidgeFit, EncodingError> {
    RidgeSolver::new(x, intercept)?.fit(y, alphas)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("c{i}")).collect()
    }

    fn design() -> DMatrix<f64> {
        DMatrix::from_fn(12, 3, |r, c| match c {
            0 => (r as f64 * 0.7).sin(),
            1 => (r as f64 * 0.3).cos() + 0.1 * r as f64,
            _ => 1.0,
        })
    }

    #[test]
    fn noiseless_recovery() {
        let x = design();
        let truth = DVector::from_vec(vec![1.5, -0.5, 2.0]);
        let fit = fit_ols(&x, &names(3), &(&x * &truth)).unwrap();
        assert!((fit.beta - truth).amax() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_names_the_culprits() {
        let mut x = design();
        x = x.insert_column(3, 0.0);
        let c0 = x.column(0).clone_owned();
        x.set_column(3, &c0);
        let err = OlsSolver::new(&x, &names(4)).unwrap_err();
        match err {
            EncodingError::RankDeficient { rank, columns } => {
                assert_eq!(rank, 3);
                assert_eq!(columns, ["c0", "c3"]);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn ridge_at_zero_is_ols() {
        let x = design();
        let y = DVector::from_fn(12, |r, _| (r as f64).sqrt() - 1.0);
        let ols = fit_ols(&x, &names(3), &y).unwrap();
        let ridge = fit_ridge(&x, Some(2), &y, &[0.0]).unwrap();
        assert!((ols.beta - ridge.beta).amax() < 1e-10);
    }

    #[test]
    fn heavy_penalty_shrinks_to_the_mean() {
        let x = design();
        let y = DVector::from_fn(12, |r, _| (r as f64 * 1.3).sin());
        let fit = fit_ridge(&x, Some(2), &y, &[1e9]).unwrap();
        assert!(fit.beta[0].abs() < 1e-7 && fit.beta[1].abs() < 1e-7);
        assert!((fit.beta[2] - y.mean()).abs() < 1e-7);
        assert!(fit.r2.abs() < 1e-7);
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = default_alphas();
        assert_eq!(g.len(), 10);
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[9] - 1e6).abs() < 1e-6);
        assert!((g[1] / g[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn bad_grids_rejected() {
        let x = design();
        let y = DVector::zeros(12);
        assert!(fit_ridge(&x, Some(2), &y, &[]).is_err());
        assert!(fit_ridge(&x, Some(2), &y, &[-1.0]).is_err());
    }
}
