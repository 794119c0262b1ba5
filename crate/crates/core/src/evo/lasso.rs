//! LASSO by cyclic coordinate descent on standardized columns.

use thiserror::Error;

use crate::graph::FeatureMatrix;

const TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LassoError {
    #[error("non-finite value in LASSO input")]
    NonFinite,
    #[error("{rows} rows but {targets} targets")]
    Shape { rows: usize, targets: usize },
    #[error("lambda must be non-negative, got {0}")]
    Lambda(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoOptions {
    /// Centre columns and target and report an intercept. Without it the
    /// columns are only scaled to unit root-mean-square.
    pub intercept: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { intercept: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LassoFit {
    /// Coefficients on the original column scale; eliminated terms are exactly 0.
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub sweeps: usize,
}

struct Standardized {
    cols: Vec<Vec<f64>>,
    centers: Vec<f64>,
    scales: Vec<f64>,
    y: Vec<f64>,
    y_center: f64,
}

fn standardize(x: &FeatureMatrix, y: &[f64], opts: LassoOptions) -> Standardized {
    let n = x.rows as f64;
    let mut cols = Vec::with_capacity(x.cols);
    let (mut centers, mut scales) = (Vec::new(), Vec::new());
    for j in 0..x.cols {
        let col = x.col(j);
        let c = if opts.intercept { col.iter().sum::<f64>() / n } else { 0.0 };
        let s = (col.iter().map(|v| (v - c).powi(2)).sum::<f64>() / n).sqrt();
        centers.push(c);
        scales.push(s);
        cols.push(if s > 0.0 { col.iter().map(|v| (v - c) / s).collect() } else { vec![0.0; x.rows] });
    }
    let y_center = if opts.intercept { y.iter().sum::<f64>() / n } else { 0.0 };
    Standardized { cols, centers, scales, y: y.iter().map(|v| v - y_center).collect(), y_center }
}

fn check(x: &FeatureMatrix, y: &[f64], lambda: f64) -> Result<(), LassoError> {
    if x.rows != y.len() {
        return Err(LassoError::Shape { rows: x.rows, targets: y.len() });
    }
    if x.data.iter().chain(y).any(|v| !v.is_finite()) || lambda.is_nan() {
        return Err(LassoError::NonFinite);
    }
    if lambda < 0.0 {
        return Err(LassoError::Lambda(lambda));
    }
    Ok(())
}

/// Smallest penalty at which every coefficient is zero: `max |x_jᵀy| / n`
/// on standardized data.
pub fn lambda_max(x: &FeatureMatrix, y: &[f64], opts: LassoOptions) -> Result<f64, LassoError> {
    check(x, y, 0.0)?;
    let s = standardize(x, y, opts);
    let n = x.rows.max(1) as f64;
    Ok(s.cols
        .iter()
        .map(|c| (c.iter().zip(&s.y).map(|(a, b)| a * b).sum::<f64>() / n).abs())
        .fold(0.0, f64::max))
}

/// Minimises `(1/2n)||y − Xβ||² + λ||β||₁` with an intercept.
pub fn lasso_fit(x: &FeatureMatrix, y: &[f64], lambda: f64) -> Result<LassoFit, LassoError> {
    lasso_fit_with(x, y, lambda, LassoOptions::default())
}

pub fn lasso_fit_with(x: &FeatureMatrix, y: &[f64], lambda: f64, opts: LassoOptions) -> Result<LassoFit, LassoError> {
    check(x, y, lambda)?;
    let s = standardize(x, y, opts);
    let n = x.rows.max(1) as f64;
    let p = x.cols;
    let mut beta = vec![0.0; p];
    let mut resid = s.y.clone();
    let norms: Vec<f64> = s.cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / n).collect();
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if norms[j] <= 0.0 {
                continue;
            }
            let col = &s.cols[j];
            let rho = col.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / n + norms[j] * beta[j];
            let new = soft_threshold(rho, lambda) / norms[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, c) in resid.iter_mut().zip(col) {
                    *r -= delta * c;
                }
                beta[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change < TOL {
            break;
        }
    }
    let coef: Vec<f64> = beta
        .iter()
        .zip(&s.scales)
        .map(|(b, sc)| if *b == 0.0 || *sc <= 0.0 { 0.0 } else { b / sc })
        .collect();
    let intercept = s.y_center - coef.iter().zip(&s.centers).map(|(b, c)| b * c).sum::<f64>();
    if coef.iter().any(|v| !v.is_finite()) || !intercept.is_finite() {
        return Err(LassoError::NonFinite);
    }
    Ok(LassoFit { coef, intercept, sweeps })
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two orthogonal zero-mean columns with unit population variance.
    fn orthonormal(n: usize) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let a = if i % 2 == 0 { 1.0 } else { -1.0 };
                let b = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
                vec![a, b]
            })
            .collect();
        FeatureMatrix::from_rows(0, &rows)
    }

    #[test]
    fn soft_threshold_on_orthonormal_design() {
        let x = orthonormal(8);
        let y: Vec<f64> = (0..8).map(|i| 3.0 * x.get(i, 0)).collect();
        let fit = lasso_fit(&x, &y, 1.0).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-6, "{:?}", fit.coef);
        assert_eq!(fit.coef[1], 0.0);
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, ((i * 13) % 7) as f64]).collect();
        let x = FeatureMatrix::from_rows(0, &rows);
        let y: Vec<f64> = rows.iter().map(|r| 1.0 + 0.5 * r[0] - 2.0 * r[1]).collect();
        let fit = lasso_fit(&x, &y, 0.0).unwrap();
        assert!((fit.coef[0] - 0.5).abs() < 1e-6 && (fit.coef[1] + 2.0).abs() < 1e-6, "{:?}", fit);
        assert!((fit.intercept - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos()]).collect();
        let x = FeatureMatrix::from_rows(0, &rows);
        let y: Vec<f64> = rows.iter().map(|r| r[0] - r[1]).collect();
        let lm = lambda_max(&x, &y, LassoOptions::default()).unwrap();
        assert!(lasso_fit(&x, &y, lm).unwrap().coef.iter().all(|c| *c == 0.0));
        assert!(lasso_fit(&x, &y, lm * 0.9).unwrap().coef.iter().any(|c| *c != 0.0));
    }

    #[test]
    fn nan_rejected() {
        let x = orthonormal(4);
        assert_eq!(lasso_fit(&x, &[1.0, f64::NAN, 0.0, 0.0], 0.1).unwrap_err(), LassoError::NonFinite);
    }
}
