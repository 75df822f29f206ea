//! Two-stage DCC-GARCH(1,1) estimation and one-step covariance forecasts.
//!
//! Stage one fits a GARCH(1,1) per asset on demeaned returns. Stage two fits
//! the correlation dynamics
//!
//! ```text
//! Qₜ₊₁ = (1 − a − b)·Q̄ + a·zₜzₜ' + b·Qₜ
//! Rₜ   = diag(Qₜ)^-½ · Qₜ · diag(Qₜ)^-½
//! ```
//!
//! on the standardized residuals z, with Q̄ their sample correlation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::garch::{fit_garch, GarchParams, MAX_PERSISTENCE};
use super::{check_window_variances, CovarianceEstimate};
use crate::error::{Error, Result};
use crate::linalg::{column_means, covariance_to_correlation, eigenvalues, sample_covariance_matrix};
use crate::market_data::ReturnPanel;
use crate::optim::{logistic, logit, nelder_mead, NelderMeadOptions};

/// Shortest window accepted by [`fit_dcc`].
pub const MIN_DCC_WINDOW: usize = 250;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccParams {
    /// Constant conditional mean per asset.
    pub means: Vec<f64>,
    pub garch: Vec<GarchParams>,
    pub a: f64,
    pub b: f64,
    /// Unconditional correlation of the standardized residuals, row-major.
    pub q_bar: Vec<Vec<f64>>,
}

impl DccParams {
    pub fn n_assets(&self) -> usize {
        self.garch.len()
    }

    pub fn q_bar_matrix(&self) -> DMatrix<f64> {
        let n = self.q_bar.len();
        DMatrix::from_fn(n, n, |i, j| self.q_bar[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.garch.len();
        if self.means.len() != n || self.q_bar.len() != n || self.q_bar.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("dcc parameter shapes disagree".into()));
        }
        for (i, g) in self.garch.iter().enumerate() {
            if !g.is_valid() {
                return Err(Error::DccFitFailed {
                    reason: format!("garch parameters for asset {i} violate constraints: {g:?}"),
                    fallback: true,
                });
            }
        }
        if !(self.a >= 0.0 && self.b >= 0.0 && self.a + self.b < 1.0) {
            return Err(Error::DccFitFailed {
                reason: format!("correlation dynamics a={} b={} not stationary", self.a, self.b),
                fallback: true,
            });
        }
        let q = self.q_bar_matrix();
        for i in 0..n {
            if (q[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidCorrelation("q_bar diagonal must be 1".into()));
            }
        }
        Ok(())
    }
}

/// Conditional correlation state after filtering a window.
struct Filtered {
    /// Standardized residual of the last observation.
    last_z: DVector<f64>,
    /// Q for the last observation.
    last_q: DMatrix<f64>,
}

fn q_to_r(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let d: Vec<f64> = (0..n).map(|i| q[(i, i)].sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { q[(i, j)] / (d[i] * d[j]) })
}

/// Negative correlation log-likelihood (up to constants and ½); also returns
/// the final filter state.
fn dcc_filter(z: &DMatrix<f64>, q_bar: &DMatrix<f64>, a: f64, b: f64) -> (f64, Filtered) {
    let t = z.nrows();
    let mut q = q_bar.clone();
    let mut nll = 0.0;
    let intercept = q_bar * (1.0 - a - b);
    let mut last_z = DVector::zeros(z.ncols());
    for row in 0..t {
        let zt = z.row(row).transpose();
        let r = q_to_r(&q);
        match r.clone().cholesky() {
            Some(chol) => {
                let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                let solved = chol.solve(&zt);
                nll += logdet + zt.dot(&solved);
            }
            None => {
                nll = f64::INFINITY;
            }
        }
        last_z = zt.clone();
        if row + 1 < t {
            q = &intercept + (&zt * zt.transpose()) * a + &q * b;
        }
    }
    (
        nll,
        Filtered {
            last_z,
            last_q: q,
        },
    )
}

fn decode(theta: &[f64]) -> (f64, f64) {
    let persistence = MAX_PERSISTENCE * logistic(theta[0]);
    let a = persistence * logistic(theta[1]);
    (a, persistence - a)
}

fn encode(a: f64, b: f64) -> Vec<f64> {
    let p = a + b;
    vec![logit(p / MAX_PERSISTENCE), logit(a / p)]
}

/// Demeaned residuals, per-asset GARCH variance paths and standardized residuals.
fn standardize(
    returns: &DMatrix<f64>,
    means: &[f64],
    garch: &[GarchParams],
) -> (DMatrix<f64>, Vec<Vec<f64>>, DMatrix<f64>) {
    let (t, n) = returns.shape();
    let resid = DMatrix::from_fn(t, n, |r, c| returns[(r, c)] - means[c]);
    let paths: Vec<Vec<f64>> = (0..n)
        .map(|c| garch[c].variance_path(resid.column(c).as_slice()))
        .collect();
    let z = DMatrix::from_fn(t, n, |r, c| resid[(r, c)] / paths[c][r].sqrt());
    (resid, paths, z)
}

/// Two-stage QMLE fit of a DCC-GARCH(1,1) model on `window`.
pub fn fit_dcc(window: &ReturnPanel) -> Result<DccParams> {
    let (t, n) = window.returns().shape();
    if t < MIN_DCC_WINDOW {
        return Err(Error::InsufficientHistory {
            needed: MIN_DCC_WINDOW,
            available: t,
        });
    }
    if n < 2 {
        return Err(Error::InsufficientAssets {
            needed: 2,
            available: n,
        });
    }
    check_window_variances(window)?;

    let returns = window.returns();
    let means = column_means(returns);
    let mut garch = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        let resid: Vec<f64> = returns.column(c).iter().map(|r| r - mean).collect();
        let (p, _) = fit_garch(&resid).ok_or_else(|| Error::DccFitFailed {
            reason: format!("univariate garch fit failed for asset {}", window.assets()[c]),
            fallback: true,
        })?;
        garch.push(p);
    }

    let (_, _, z) = standardize(returns, &means, &garch);
    let q_bar = covariance_to_correlation(&sample_covariance_matrix(&z));
    let min_eig = eigenvalues(&q_bar)[0];
    if !(min_eig > 1e-8) {
        return Err(Error::DccFitFailed {
            reason: format!("residual correlation is singular (min eigenvalue {min_eig:.3e})"),
            fallback: true,
        });
    }

    let objective = |theta: &[f64]| {
        let (a, b) = decode(theta);
        dcc_filter(&z, &q_bar, a, b).0
    };
    let opts = NelderMeadOptions {
        max_evals: 600,
        f_tol: 1e-8,
        x_tol: 1e-6,
        initial_step: 0.5,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (a, b) in [(0.02, 0.95), (0.05, 0.85), (0.01, 0.50)] {
        let m = nelder_mead(objective, &encode(a, b), opts);
        if best.as_ref().is_none_or(|(_, v)| m.value < *v) {
            best = Some((m.x, m.value));
        }
    }
    let (theta, value) = best.expect("at least one start");
    if !value.is_finite() {
        return Err(Error::DccFitFailed {
            reason: "correlation likelihood is not finite".into(),
            fallback: true,
        });
    }
    let (a, b) = decode(&theta);

    let params = DccParams {
        means,
        garch,
        a,
        b,
        q_bar: (0..n).map(|i| (0..n).map(|j| q_bar[(i, j)]).collect()).collect(),
    };
    params.validate()?;
    Ok(params)
}

/// One-step-ahead conditional covariance H = D·R·D for the day after the
/// window, given parameters fitted on that window.
pub fn forecast_covariance(params: &DccParams, window: &ReturnPanel) -> Result<CovarianceEstimate> {
    params.validate()?;
    let (t, n) = window.returns().shape();
    if n != params.n_assets() {
        return Err(Error::AssetMismatch);
    }
    if t == 0 {
        return Err(Error::InsufficientHistory {
            needed: 1,
            available: 0,
        });
    }
    let (_, paths, z) = standardize(window.returns(), &params.means, &params.garch);
    let q_bar = params.q_bar_matrix();
    let (_, state) = dcc_filter(&z, &q_bar, params.a, params.b);
    let q_next = &q_bar * (1.0 - params.a - params.b)
        + (&state.last_z * state.last_z.transpose()) * params.a
        + &state.last_q * params.b;
    let r_next = q_to_r(&q_next);
    let vols: Vec<f64> = paths.iter().map(|p| p[t].sqrt()).collect();
    let cov = DMatrix::from_fn(n, n, |i, j| vols[i] * r_next[(i, j)] * vols[j]);
    let as_of = *window.dates().last().expect("non-empty window");
    CovarianceEstimate::from_covariance(as_of, window.assets().to_vec(), cov)
}
