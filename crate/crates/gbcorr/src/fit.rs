//! Least-squares fits for the asymptotic series.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// y = a·k log k + b·k
    KLogK,
    /// y = a·k^c (fitted in log–log form on |y|)
    PowerLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    pub model: FitModel,
    /// (a, b) for KLogK, (a, c) for PowerLaw.
    pub coefficients: Vec<f64>,
    /// y_i − ŷ_i in the original scale.
    pub residuals: Vec<f64>,
    pub r_squared: f64,
}

impl AsymptoticFit {
    pub fn predict(&self, x: f64) -> f64 {
        let c = &self.coefficients;
        match self.model {
            FitModel::KLogK => c[0] * x * x.ln() + c[1] * x,
            FitModel::PowerLaw => c[0] * x.powf(c[1]),
        }
    }

    /// |residual| / |y| at the last point.
    pub fn last_relative_residual(&self, y_last: f64) -> f64 {
        self.residuals.last().map_or(0.0, |r| (r / y_last).abs())
    }
}

/// Minimises ‖Xβ − y‖₂ through SVD; rank deficiency is a numerical failure.
pub fn least_squares(design: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    if design.nrows() != y.len() {
        return Err(Error::validation("design and data lengths differ"));
    }
    if design.nrows() < design.ncols() {
        return Err(Error::numerical("fit: fewer points than parameters"));
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::numerical("fit: rank-deficient design"));
    }
    let b = DVector::from_column_slice(y);
    let sol = svd.solve(&b, 0.0).map_err(|e| Error::numerical(format!("fit: {e}")))?;
    Ok(sol.iter().copied().collect())
}

fn r_squared(y: &[f64], resid: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = resid.iter().map(|r| r * r).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

fn check_points(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::validation("fit: x and y lengths differ"));
    }
    if x.len() < min {
        return Err(Error::validation(format!("fit needs at least {min} points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::numerical("fit: non-finite data"));
    }
    Ok(())
}

pub fn fit_klogk(k: &[f64], y: &[f64]) -> Result<AsymptoticFit> {
    check_points(k, y, 2)?;
    if k.iter().any(|&v| v <= 0.0) {
        return Err(Error::validation("fit: k_F must be positive"));
    }
    let x = DMatrix::from_fn(k.len(), 2, |i, j| if j == 0 { k[i] * k[i].ln() } else { k[i] });
    let c = least_squares(&x, y)?;
    let mut fit = AsymptoticFit { model: FitModel::KLogK, coefficients: c, residuals: vec![], r_squared: 0.0 };
    fit.residuals = k.iter().zip(y).map(|(&ki, &yi)| yi - fit.predict(ki)).collect();
    fit.r_squared = r_squared(y, &fit.residuals);
    Ok(fit)
}

/// y = a·x^c with sign(a) = sign of the data (all y must share a sign).
pub fn fit_power(x: &[f64], y: &[f64]) -> Result<AsymptoticFit> {
    check_points(x, y, 2)?;
    let sign = if y.iter().all(|&v| v > 0.0) {
        1.0
    } else if y.iter().all(|&v| v < 0.0) {
        -1.0
    } else {
        return Err(Error::numerical("power-law fit needs data of one strict sign"));
    };
    if x.iter().any(|&v| v <= 0.0) {
        return Err(Error::validation("power-law fit needs positive abscissae"));
    }
    let (slope, intercept) = loglog_line(x, &y.iter().map(|v| v.abs()).collect::<Vec<_>>())?;
    let mut fit = AsymptoticFit {
        model: FitModel::PowerLaw,
        coefficients: vec![sign * intercept.exp(), slope],
        residuals: vec![],
        r_squared: 0.0,
    };
    fit.residuals = x.iter().zip(y).map(|(&xi, &yi)| yi - fit.predict(xi)).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let lres: Vec<f64> = x.iter().zip(&ly).map(|(xi, yi)| yi - (intercept + slope * xi.ln())).collect();
    fit.r_squared = r_squared(&ly, &lres);
    Ok(fit)
}

/// (slope, intercept) of ln y against ln x.
pub fn loglog_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_points(x, y, 2)?;
    if x.iter().chain(y).any(|&v| v <= 0.0) {
        return Err(Error::numerical("log–log fit needs positive data"));
    }
    let d = DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { x[i].ln() } else { 1.0 });
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let c = least_squares(&d, &ly)?;
    Ok((c[0], c[1]))
}

pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(loglog_line(x, y)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn recovers_klogk_exactly() {
        let k = [4.0, 6.0, 8.0, 12.0, 16.0];
        let y: Vec<f64> = k.iter().map(|&x| -0.3 * x * f64::ln(x) + 1.7 * x).collect();
        let f = fit_klogk(&k, &y).unwrap();
        assert!((f.coefficients[0] + 0.3).abs() < 1e-10);
        assert!((f.coefficients[1] - 1.7).abs() < 1e-10);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-10));
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficiency_is_numerical() {
        let e = fit_klogk(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn power_law_negative_data() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| -2.0 * v.powf(1.1)).collect();
        let f = fit_power(&x, &y).unwrap();
        assert_relative_eq!(f.coefficients[0], -2.0, max_relative = 1e-12);
        assert_relative_eq!(f.coefficients[1], 1.1, max_relative = 1e-12);
        assert!(fit_power(&x, &[1.0, -1.0, 1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn klogk_recovery(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let k = [4.0, 5.0, 7.0, 10.0, 24.0];
            let y: Vec<f64> = k.iter().map(|&x| a * x * x.ln() + b * x).collect();
            let f = fit_klogk(&k, &y).unwrap();
            prop_assert!((f.coefficients[0] - a).abs() < 1e-10);
            prop_assert!((f.coefficients[1] - b).abs() < 1e-10);
        }
    }
}
