//! Small dense least-squares helpers shared by the curve fits.

use ndarray::{Array1, Array2};
use ndarray_linalg::SVD;

use crate::error::{Error, Result};

/// Relative singular-value cutoff below which a design is rank deficient.
const RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqFit {
    pub coef: Vec<f64>,
    /// Covariance `(X^T W X)^{-1}` of the coefficients.
    pub cov: Vec<Vec<f64>>,
    /// Weighted residual sum of squares.
    pub rss: f64,
}

impl LstsqFit {
    pub fn se(&self, k: usize) -> f64 {
        self.cov[k][k].max(0.0).sqrt()
    }
}

/// Minimizes `sum_i w_i (y_i - x_i . c)^2` via the SVD of the row-scaled
/// design matrix.
pub fn weighted_lstsq(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<LstsqFit> {
    let n = rows.len();
    if n == 0 || y.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len().min(w.len()),
        });
    }
    let p = rows[0].len();
    if n < p {
        return Err(Error::RankDeficient);
    }
    let mut x = Array2::<f64>::zeros((n, p));
    let mut b = Array1::<f64>::zeros(n);
    for i in 0..n {
        if rows[i].len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: rows[i].len(),
            });
        }
        let s = w[i].sqrt();
        for k in 0..p {
            x[[i, k]] = s * rows[i][k];
        }
        b[i] = s * y[i];
    }
    let (u, sv, vt) = x
        .svd(true, true)
        .map_err(|e| Error::Linalg(e.to_string()))?;
    let (u, vt) = (u.expect("requested U"), vt.expect("requested V^T"));
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if !(smax > 0.0) || sv.iter().any(|&s| s <= RCOND * smax) {
        return Err(Error::RankDeficient);
    }
    let mut coef = vec![0.0; p];
    for k in 0..p {
        let proj: f64 = (0..n).map(|i| u[[i, k]] * b[i]).sum::<f64>() / sv[k];
        for j in 0..p {
            coef[j] += vt[[k, j]] * proj;
        }
    }
    let mut cov = vec![vec![0.0; p]; p];
    for (j1, row) in cov.iter_mut().enumerate() {
        for (j2, c) in row.iter_mut().enumerate() {
            *c = (0..p)
                .map(|k| vt[[k, j1]] * vt[[k, j2]] / (sv[k] * sv[k]))
                .sum();
        }
    }
    let rss = (0..n)
        .map(|i| {
            let fit: f64 = (0..p).map(|k| x[[i, k]] * coef[k]).sum();
            (b[i] - fit).powi(2)
        })
        .sum();
    Ok(LstsqFit { coef, cov, rss })
}

/// Fits `y = sum_k c_k x^k` for `k = 0..=degree` with unit weights.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<LstsqFit> {
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|&v| (0..=degree).map(|k| v.powi(k as i32)).collect())
        .collect();
    weighted_lstsq(&rows, y, &vec![1.0; x.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_line() {
        let f = polyfit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0], 1).unwrap();
        assert_abs_diff_eq!(f.coef[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.coef[1], 2.0, epsilon = 1e-12);
        assert!(f.rss < 1e-20);
    }

    #[test]
    fn ols_slope_variance() {
        // unit weights: var(slope) = 1 / sum (x - xbar)^2
        let x = [0.0, 1.0, 2.0, 3.0];
        let f = polyfit(&x, &[0.1, 0.9, 2.2, 2.8], 1).unwrap();
        assert_abs_diff_eq!(f.cov[1][1], 1.0 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn weights_pull_toward_precise_points() {
        let rows = vec![vec![1.0], vec![1.0]];
        let f = weighted_lstsq(&rows, &[0.0, 1.0], &[1.0, 3.0]).unwrap();
        assert_abs_diff_eq!(f.coef[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(f.cov[0][0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn repeated_abscissa_is_rank_deficient() {
        assert!(matches!(
            polyfit(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0], 1),
            Err(Error::RankDeficient)
        ));
        assert!(matches!(
            polyfit(&[1.0], &[0.0], 1),
            Err(Error::RankDeficient)
        ));
    }
}
