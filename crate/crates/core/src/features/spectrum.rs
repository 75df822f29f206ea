use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{determinant, eigenvalues};

/// Condition numbers are capped here when the smallest eigenvalue vanishes.
pub const MAX_CONDITION: f64 = 1e12;

/// Effective number of independent risk factors as a fraction of N:
/// exp(H(p)) / N where p is the eigenvalue spectrum normalized to sum to 1.
pub fn quality_ratio(correlation: &DMatrix<f64>) -> f64 {
    let n = correlation.nrows();
    let values: Vec<f64> = eigenvalues(correlation).into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let entropy: f64 = values
        .iter()
        .map(|v| v / total)
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    entropy.exp() / n as f64
}

/// Standardized generalized variance det(Σ)^(1/N), computed from the
/// eigenvalues in log space.
pub fn sgv(covariance: &DMatrix<f64>) -> Result<f64> {
    let n = covariance.nrows();
    let values = eigenvalues(covariance);
    let largest = values[n - 1].abs().max(f64::MIN_POSITIVE);
    if values[0] < -1e-8 * largest {
        return Err(Error::InvalidCovariance(format!(
            "negative eigenvalue {:.3e} gives a negative determinant",
            values[0]
        )));
    }
    if values[0] <= 0.0 {
        return Ok(0.0);
    }
    let mean_ln = values.iter().map(|v| v.ln()).sum::<f64>() / n as f64;
    Ok(mean_ln.exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumFeatures {
    pub corr_det: f64,
    pub corr_cond: f64,
    /// Share of total variance carried by eigenvalues above the
    /// Marchenko–Pastur upper edge (1 + √(N/T))².
    pub mp_var_fraction: f64,
}

pub fn marchenko_pastur_upper_edge(n_assets: usize, n_obs: usize) -> f64 {
    (1.0 + (n_assets as f64 / n_obs as f64).sqrt()).powi(2)
}

pub fn matrix_spectrum_features(correlation: &DMatrix<f64>, window_len: usize) -> Result<SpectrumFeatures> {
    let n = correlation.nrows();
    if window_len <= n {
        return Err(Error::InsufficientHistory {
            needed: n + 1,
            available: window_len,
        });
    }
    let values = eigenvalues(correlation);
    let (lo, hi) = (values[0], values[n - 1]);
    let corr_cond = if lo < 1e-12 {
        log::debug!("smallest correlation eigenvalue {lo:.3e}; condition number capped");
        MAX_CONDITION
    } else {
        (hi / lo).min(MAX_CONDITION)
    };
    let edge = marchenko_pastur_upper_edge(n, window_len);
    let above = values.iter().filter(|v| **v > edge).fold(0.0, |acc, v| acc + v);
    Ok(SpectrumFeatures {
        corr_det: determinant(correlation).max(0.0),
        corr_cond,
        mp_var_fraction: above / n as f64,
    })
}
