//! Covariance and correlation estimation.
//!
//! The primary estimator is a DCC-GARCH(1,1) one-step forecast. When it
//! cannot be fitted, [`estimate_covariance`] falls back to an exponentially
//! weighted estimate and reports that it did so.

mod dcc;
mod garch;

pub use dcc::{fit_dcc, forecast_covariance, DccParams, MIN_DCC_WINDOW};
pub use garch::{fit_garch, GarchParams};

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    clip_eigenvalues, column_means, covariance_to_correlation, eigenvalues, max_asymmetry,
    sample_covariance_matrix, symmetrize,
};
use crate::market_data::ReturnPanel;

/// Eigenvalue floor used when repairing a matrix that is not PSD.
pub const PSD_FLOOR: f64 = 1e-10;

/// Covariance forecast for the day after `as_of`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub as_of: NaiveDate,
    pub assets: Vec<String>,
    pub covariance: DMatrix<f64>,
    pub correlation: DMatrix<f64>,
    pub variances: Vec<f64>,
}

impl CovarianceEstimate {
    /// Validates and, where needed, repairs `cov`: the matrix is symmetrized,
    /// negative eigenvalues are clipped to [`PSD_FLOOR`], and the correlation
    /// is derived with an exact unit diagonal.
    pub fn from_covariance(as_of: NaiveDate, assets: Vec<String>, cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::InvalidCovariance("matrix is not square".into()));
        }
        if cov.nrows() != assets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} assets for a {}x{} covariance",
                assets.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry".into()));
        }
        let scale = cov.abs().max().max(f64::MIN_POSITIVE);
        if max_asymmetry(&cov) > 1e-8 * scale {
            return Err(Error::InvalidCovariance("matrix is not symmetric".into()));
        }
        let mut cov = symmetrize(&cov);
        if eigenvalues(&cov)[0] < 0.0 {
            cov = clip_eigenvalues(&cov, PSD_FLOOR);
        }
        let variances: Vec<f64> = (0..cov.nrows()).map(|i| cov[(i, i)]).collect();
        let correlation = covariance_to_correlation(&cov);
        Ok(Self {
            as_of,
            assets,
            covariance: cov,
            correlation,
            variances,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.variances.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            as_of: self.as_of,
            assets: self.assets.clone(),
            covariance: &self.covariance * c,
            correlation: self.correlation.clone(),
            variances: self.variances.iter().map(|v| v * c).collect(),
        }
    }

    /// Same estimate with assets permuted: new index `j` is old index `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = perm.len();
        Self {
            as_of: self.as_of,
            assets: perm.iter().map(|&i| self.assets[i].clone()).collect(),
            covariance: DMatrix::from_fn(n, n, |i, j| self.covariance[(perm[i], perm[j])]),
            correlation: DMatrix::from_fn(n, n, |i, j| self.correlation[(perm[i], perm[j])]),
            variances: perm.iter().map(|&i| self.variances[i]).collect(),
        }
    }
}

pub(crate) fn check_window_variances(window: &ReturnPanel) -> Result<()> {
    let r = window.returns();
    for c in 0..r.ncols() {
        let col = r.column(c);
        let first = col[0];
        if col.iter().all(|v| *v == first) {
            return Err(Error::DegenerateVariance { asset: c });
        }
    }
    Ok(())
}

fn as_of(window: &ReturnPanel) -> Result<NaiveDate> {
    window.dates().last().copied().ok_or(Error::InsufficientHistory {
        needed: 1,
        available: 0,
    })
}

/// Unbiased sample covariance of the window.
pub fn sample_covariance(window: &ReturnPanel) -> Result<CovarianceEstimate> {
    let (t, n) = window.returns().shape();
    if t < n + 1 {
        return Err(Error::InsufficientHistory {
            needed: n + 1,
            available: t,
        });
    }
    CovarianceEstimate::from_covariance(
        as_of(window)?,
        window.assets().to_vec(),
        sample_covariance_matrix(window.returns()),
    )
}

/// Exponentially weighted covariance of demeaned returns, seeded with the
/// sample covariance: Sₜ = λ·Sₜ₋₁ + (1 − λ)·εₜεₜ'.
pub fn ewma_covariance(window: &ReturnPanel, decay: f64) -> Result<CovarianceEstimate> {
    if !(0.0..1.0).contains(&decay) {
        return Err(Error::InvalidConfig(format!("ewma decay {decay} outside [0, 1)")));
    }
    let r = window.returns();
    let (t, n) = r.shape();
    if t < n + 1 {
        return Err(Error::InsufficientHistory {
            needed: n + 1,
            available: t,
        });
    }
    let means = column_means(r);
    let mut s = sample_covariance_matrix(r);
    for row in 0..t {
        let e = DVector::from_fn(n, |c, _| r[(row, c)] - means[c]);
        s = s * decay + (&e * e.transpose()) * (1.0 - decay);
    }
    CovarianceEstimate::from_covariance(as_of(window)?, window.assets().to_vec(), s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    #[default]
    Dcc,
    Sample,
    Ewma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FallbackKind {
    #[default]
    Ewma,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceSettings {
    pub estimator: EstimatorKind,
    pub fallback: FallbackKind,
    pub ewma_decay: f64,
}

impl Default for CovarianceSettings {
    fn default() -> Self {
        Self {
            estimator: EstimatorKind::Dcc,
            fallback: FallbackKind::Ewma,
            ewma_decay: 0.94,
        }
    }
}

/// How an estimate was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateInfo {
    pub method: EstimatorKind,
    pub dcc: Option<DccParams>,
    /// Set when the configured estimator failed and the fallback was used.
    pub fallback_reason: Option<String>,
}

/// Runs the configured estimator on `window`, switching to the fallback
/// estimator if a DCC fit fails.
pub fn estimate_covariance(
    window: &ReturnPanel,
    settings: &CovarianceSettings,
) -> Result<(CovarianceEstimate, EstimateInfo)> {
    check_window_variances(window)?;
    let direct = |kind: EstimatorKind| -> Result<CovarianceEstimate> {
        match kind {
            EstimatorKind::Sample => sample_covariance(window),
            EstimatorKind::Ewma => ewma_covariance(window, settings.ewma_decay),
            EstimatorKind::Dcc => unreachable!("dcc handled separately"),
        }
    };
    match settings.estimator {
        EstimatorKind::Dcc => {
            let attempt = fit_dcc(window).and_then(|p| forecast_covariance(&p, window).map(|e| (e, p)));
            match attempt {
                Ok((est, params)) => Ok((
                    est,
                    EstimateInfo {
                        method: EstimatorKind::Dcc,
                        dcc: Some(params),
                        fallback_reason: None,
                    },
                )),
                Err(err @ Error::DccFitFailed { .. }) => {
                    let kind = match settings.fallback {
                        FallbackKind::Ewma => EstimatorKind::Ewma,
                        FallbackKind::Sample => EstimatorKind::Sample,
                    };
                    log::warn!("{err}; falling back to {kind:?}");
                    let est = direct(kind)?;
                    Ok((
                        est,
                        EstimateInfo {
                            method: kind,
                            dcc: None,
                            fallback_reason: Some(err.to_string()),
                        },
                    ))
                }
                Err(other) => Err(other),
            }
        }
        kind => Ok((
            direct(kind)?,
            EstimateInfo {
                method: kind,
                dcc: None,
                fallback_reason: None,
            },
        )),
    }
}

/// Simulates GARCH(1,1) marginals joined by a constant correlation matrix.
/// Each series starts at its unconditional variance.
pub fn simulate_ccc_garch(
    garch: &[GarchParams],
    correlation: &DMatrix<f64>,
    len: usize,
    seed: u64,
) -> Result<ReturnPanel> {
    let n = garch.len();
    if correlation.shape() != (n, n) {
        return Err(Error::DimensionMismatch("correlation does not match garch count".into()));
    }
    if let Some(bad) = garch.iter().find(|g| !g.is_valid()) {
        return Err(Error::InvalidSpec(format!("invalid garch parameters {bad:?}")));
    }
    let chol = correlation
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidSpec("correlation is not positive definite".into()))?
        .l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s2: Vec<f64> = garch.iter().map(|g| g.unconditional_variance()).collect();
    let mut out = DMatrix::zeros(len, n);
    for row in 0..len {
        let e = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let z = &chol * e;
        for c in 0..n {
            let eps = s2[c].sqrt() * z[c];
            out[(row, c)] = eps;
            s2[c] = garch[c].omega + garch[c].alpha * eps * eps + garch[c].beta * s2[c];
        }
    }
    ReturnPanel::from_matrix(out)
}
