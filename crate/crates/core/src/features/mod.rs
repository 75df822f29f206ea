//! Predictive features describing the asset universe and the recent behaviour
//! of both component strategies.

mod cluster;
mod entropy;
mod performance;
mod spectrum;

pub use cluster::{
    cluster_features, cophenetic_correlation, default_cluster_count, intra_cluster_variance, ClusterFeatures,
};
pub use entropy::{kth_neighbor_sq_distances, knn_entropy, knn_entropy_points, ln_unit_ball_volume, DEFAULT_K};
pub use performance::{
    correlation_summary, max_drawdown, performance_features, universe_moments, PerformanceFeatures, TRADING_DAYS,
};
pub use spectrum::{
    marchenko_pastur_upper_edge, matrix_spectrum_features, quality_ratio, sgv, SpectrumFeatures, MAX_CONDITION,
};

use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::allocators::HrpPortfolio;
use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::market_data::{ReturnPanel, DATE_FORMAT};

/// The twenty features produced by [`assemble_features`].
pub const FEATURE_NAMES: [&str; 20] = [
    "hrp_avg_ret",
    "nrp_avg_ret",
    "hrp_real_vol",
    "nrp_real_vol",
    "hrp_max_dd",
    "nrp_max_dd",
    "hrp_down_dev",
    "nrp_down_dev",
    "univ_mean_ret",
    "univ_std",
    "meanCORR",
    "stdCORR",
    "knn_entropy",
    "quality_ratio",
    "sgv",
    "cophenetic_average",
    "intra_cluster_var",
    "corr_det",
    "corr_cond",
    "mp_var_fraction",
];

/// Named finite feature values. Iteration order is by name, so two vectors
/// with the same names always serialize and feed the learner identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct FeatureVector(BTreeMap<String, f64>);

impl FeatureVector {
    pub fn new(values: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((name, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::FeatureAssemblyFailed(format!("{name} is {v}")));
        }
        Ok(Self(values))
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn same_names(&self, other: &FeatureVector) -> bool {
        self.0.len() == other.0.len() && self.0.keys().zip(other.0.keys()).all(|(a, b)| a == b)
    }
}

impl TryFrom<BTreeMap<String, f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: BTreeMap<String, f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for BTreeMap<String, f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// Everything one decision date contributes to its feature vector.
#[derive(Debug, Clone, Copy)]
pub struct FeatureInputs<'a> {
    /// Trailing daily returns of the HRP portfolio (T_m values).
    pub hrp_returns: &'a [f64],
    /// Trailing daily returns of the NRP portfolio (T_m values).
    pub nrp_returns: &'a [f64],
    /// Trailing asset returns (T_m rows).
    pub window: &'a ReturnPanel,
    pub estimate: &'a CovarianceEstimate,
    pub hrp: &'a HrpPortfolio,
    /// Observations behind `estimate`, used for the Marchenko–Pastur edge.
    pub estimation_len: usize,
}

pub fn assemble_features(inputs: &FeatureInputs<'_>) -> Result<FeatureVector> {
    let hrp = performance_features(inputs.hrp_returns)?;
    let nrp = performance_features(inputs.nrp_returns)?;
    let (univ_mean_ret, univ_std) = universe_moments(inputs.window)?;
    let corr = &inputs.estimate.correlation;
    let (mean_corr, std_corr) = correlation_summary(corr)?;
    let clusters = cluster_features(&inputs.hrp.tree, &inputs.hrp.augmented);
    let spectrum = matrix_spectrum_features(corr, inputs.estimation_len)?;
    let values = [
        ("hrp_avg_ret", hrp.avg_ret),
        ("nrp_avg_ret", nrp.avg_ret),
        ("hrp_real_vol", hrp.real_vol),
        ("nrp_real_vol", nrp.real_vol),
        ("hrp_max_dd", hrp.max_dd),
        ("nrp_max_dd", nrp.max_dd),
        ("hrp_down_dev", hrp.down_dev),
        ("nrp_down_dev", nrp.down_dev),
        ("univ_mean_ret", univ_mean_ret),
        ("univ_std", univ_std),
        ("meanCORR", mean_corr),
        ("stdCORR", std_corr),
        ("knn_entropy", knn_entropy(inputs.window, DEFAULT_K)?),
        ("quality_ratio", quality_ratio(corr)),
        ("sgv", sgv(&inputs.estimate.covariance)?),
        ("cophenetic_average", clusters.cophenetic_average),
        ("intra_cluster_var", clusters.intra_cluster_var),
        ("corr_det", spectrum.corr_det),
        ("corr_cond", spectrum.corr_cond),
        ("mp_var_fraction", spectrum.mp_var_fraction),
    ];
    FeatureVector::from_pairs(values)
}

/// One row per date: `date` followed by the feature columns in name order.
pub fn write_features_csv<W: Write>(rows: &[(NaiveDate, FeatureVector)], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let Some((_, first)) = rows.first() else {
        out.write_record(["date"])?;
        out.flush()?;
        return Ok(());
    };
    let names: Vec<&str> = first.names().collect();
    out.write_record(std::iter::once("date").chain(names.iter().copied()))?;
    for (date, fv) in rows {
        if !fv.same_names(first) {
            return Err(Error::FeatureMismatch(format!("feature names differ on {date}")));
        }
        let mut record = vec![date.format(DATE_FORMAT).to_string()];
        record.extend(fv.iter().map(|(_, v)| v.to_string()));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}
