//! Small dense least squares through the normal equations.

use crate::error::{Error, Result};

/// Least-squares fit of `y` on the columns of `x` (no implicit intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coef: Vec<f64>,
    pub rss: f64,
    /// Diagonal of `(X'X)^{-1}`.
    pub inv_diag: Vec<f64>,
    pub nobs: usize,
}

impl LeastSquares {
    /// Conventional OLS t-statistic with `s^2 = RSS / (nobs - k)`.
    pub fn t_stat(&self, j: usize) -> Result<f64> {
        let k = self.coef.len();
        if self.nobs <= k {
            return Err(Error::Regression(format!(
                "{} observations for {k} coefficients",
                self.nobs
            )));
        }
        let s2 = self.rss / (self.nobs - k) as f64;
        let se = (s2 * self.inv_diag[j]).sqrt();
        if !(se > 0.0) {
            return Err(Error::Regression("zero standard error".into()));
        }
        Ok(self.coef[j] / se)
    }
}

/// Row-major design: `rows[i]` holds the regressors of observation `i`.
pub fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<LeastSquares> {
    let nobs = rows.len();
    if nobs == 0 || nobs != y.len() {
        return Err(Error::Regression("empty or mismatched design".into()));
    }
    let k = rows[0].len();
    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k];
    for (row, &yi) in rows.iter().zip(y) {
        for a in 0..k {
            xty[a] += row[a] * yi;
            for b in 0..=a {
                xtx[a * k + b] += row[a] * row[b];
            }
        }
    }
    let chol = cholesky(&xtx, k)?;
    let coef = chol_solve(&chol, k, &xty);
    let mut inv_diag = vec![0.0; k];
    let mut unit = vec![0.0; k];
    for j in 0..k {
        unit.iter_mut().for_each(|u| *u = 0.0);
        unit[j] = 1.0;
        inv_diag[j] = chol_solve(&chol, k, &unit)[j];
    }
    let rss = rows
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let fit: f64 = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
            (yi - fit) * (yi - fit)
        })
        .sum();
    Ok(LeastSquares {
        coef,
        rss,
        inv_diag,
        nobs,
    })
}

/// Lower-triangular factor of a symmetric matrix whose lower triangle is filled.
fn cholesky(a: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    let scale = (0..k).map(|i| a[i * k + i]).fold(0.0, f64::max);
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if !(s > 1e-13 * scale) {
                    return Err(Error::Regression(format!(
                        "design is collinear (pivot {s:e} at column {i})"
                    )));
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    Ok(l)
}

fn chol_solve(l: &[f64], k: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; k];
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i * k + p] * z[p];
        }
        z[i] = s / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = z[i];
        for p in i + 1..k {
            s -= l[p * k + i] * x[p];
        }
        x[i] = s / l[i * k + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_coefficients() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64;
                vec![1.0, t, (t * 0.3).sin()]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 0.5 - 2.0 * r[1] + 3.0 * r[2]).collect();
        let ls = least_squares(&rows, &y).unwrap();
        assert!((ls.coef[0] - 0.5).abs() < 1e-10);
        assert!((ls.coef[1] + 2.0).abs() < 1e-10);
        assert!((ls.coef[2] - 3.0).abs() < 1e-10);
        assert!(ls.rss < 1e-18);
    }

    #[test]
    fn single_regressor_matches_closed_form() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let y = [0.7, -1.0, 0.9, 2.0];
        let rows: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
        let ls = least_squares(&rows, &y).unwrap();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((ls.coef[0] - sxy / sxx).abs() < 1e-14);
        assert!((ls.inv_diag[0] - 1.0 / sxx).abs() < 1e-15);
    }

    #[test]
    fn collinear_design_errors() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(least_squares(&rows, &y), Err(Error::Regression(_))));
    }
}
