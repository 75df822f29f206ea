//! Naïve and hierarchical risk-parity allocators.

mod hrp;

pub use hrp::{
    augmented_distance, cluster_variance, correlation_to_distance, hrp_pipeline, hrp_weights,
    hrp_weights_with, quasi_diagonalize, recursive_bisection, tree_bisection, tree_cluster,
    tree_cluster_with, Bisection, ClusterTree, DistanceMatrix, HrpPortfolio, HrpSettings, Linkage,
    Merge,
};

use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};

/// Variances below this are treated as degenerate.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Long-only, fully invested allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    assets: Vec<String>,
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(assets: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if assets.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} assets but {} weights",
                assets.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidSpec(format!("weights must be finite and nonnegative: {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { assets, weights })
    }

    pub fn equal(assets: Vec<String>) -> Self {
        let n = assets.len();
        Self {
            assets,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, asset: &str) -> Option<f64> {
        self.assets.iter().position(|a| a == asset).map(|i| self.weights[i])
    }
}

pub(crate) fn check_variances(variances: &[f64]) -> Result<()> {
    match variances.iter().position(|v| !(*v >= VARIANCE_FLOOR) || !v.is_finite()) {
        Some(asset) => Err(Error::DegenerateVariance { asset }),
        None => Ok(()),
    }
}

/// Inverse-variance weights: wᵢ = (1/σᵢ²) / Σⱼ (1/σⱼ²). Off-diagonal
/// covariances are ignored.
pub fn nrp_weights(estimate: &CovarianceEstimate) -> Result<WeightVector> {
    check_variances(&estimate.variances)?;
    let inv: Vec<f64> = estimate.variances.iter().map(|v| 1.0 / v).collect();
    let total: f64 = inv.iter().sum();
    WeightVector::new(estimate.assets.clone(), inv.iter().map(|x| x / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use nalgebra::DMatrix;

    pub(crate) fn diag_estimate(vars: &[f64]) -> CovarianceEstimate {
        let n = vars.len();
        CovarianceEstimate::from_covariance(
            NaiveDate::MIN,
            (0..n).map(|i| format!("A{i}")).collect(),
            DMatrix::from_fn(n, n, |i, j| if i == j { vars[i] } else { 0.0 }),
        )
        .unwrap()
    }

    #[test]
    fn nrp_examples() {
        let w = nrp_weights(&diag_estimate(&[0.04, 0.04])).unwrap();
        assert_eq!(w.weights(), &[0.5, 0.5]);
        let w = nrp_weights(&diag_estimate(&[0.01, 0.04])).unwrap();
        assert!((w.weights()[0] - 0.8).abs() < 1e-12 && (w.weights()[1] - 0.2).abs() < 1e-12);
        let w = nrp_weights(&diag_estimate(&[0.01, 0.02, 0.04])).unwrap();
        for (got, want) in w.weights().iter().zip([4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn nrp_ignores_off_diagonals() {
        let cov = DMatrix::from_row_slice(3, 3, &[0.04, 0.01, -0.005, 0.01, 0.02, 0.003, -0.005, 0.003, 0.09]);
        let names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let full = CovarianceEstimate::from_covariance(NaiveDate::MIN, names.clone(), cov.clone()).unwrap();
        let diag = CovarianceEstimate::from_covariance(
            NaiveDate::MIN,
            names,
            DMatrix::from_fn(3, 3, |i, j| if i == j { cov[(i, j)] } else { 0.0 }),
        )
        .unwrap();
        assert_eq!(nrp_weights(&full).unwrap(), nrp_weights(&diag).unwrap());
    }

    #[test]
    fn degenerate_variance_rejected() {
        let est = diag_estimate(&[0.01, 1e-13]);
        assert_eq!(nrp_weights(&est).unwrap_err(), Error::DegenerateVariance { asset: 1 });
    }

    #[test]
    fn weight_vector_invariants() {
        assert!(WeightVector::new(vec!["a".into(), "b".into()], vec![0.6, 0.5]).is_err());
        assert!(WeightVector::new(vec!["a".into(), "b".into()], vec![1.1, -0.1]).is_err());
        let w = WeightVector::new(vec!["a".into(), "b".into()], vec![0.25, 0.75]).unwrap();
        assert_eq!(w.get("b"), Some(0.75));
    }
}
