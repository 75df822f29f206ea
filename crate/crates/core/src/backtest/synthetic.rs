use chrono::{Datelike, Days, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sorted_eigen;
use crate::market_data::PricePanel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    #[serde(default)]
    pub name: String,
    /// Daily mean return per asset.
    pub mean: Vec<f64>,
    /// Daily return covariance.
    pub covariance: Vec<Vec<f64>>,
    /// Inclusive bounds of the uniformly drawn regime duration, in days.
    pub min_duration: usize,
    pub max_duration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub assets: Vec<String>,
    pub regimes: Vec<RegimeSpec>,
    /// Number of price rows, including the starting row.
    pub days: usize,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
    #[serde(default = "default_price")]
    pub initial_price: f64,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

fn default_price() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub prices: PricePanel,
    /// Regime index generating each return (one per price row after the first).
    pub regimes: Vec<usize>,
}

/// A factor B with B·Bᵀ = cov, from the eigendecomposition so singular
/// covariances are allowed.
fn psd_sqrt(cov: &DMatrix<f64>, label: &str) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    for i in 0..n {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * (1.0 + cov[(i, j)].abs()) {
                return Err(Error::InvalidSpec(format!("{label}: covariance is not symmetric")));
            }
        }
    }
    let (values, vectors) = sorted_eigen(cov);
    let scale = values.last().copied().unwrap_or(0.0).abs().max(1e-300);
    if values[0] < -1e-10 * scale {
        return Err(Error::InvalidSpec(format!(
            "{label}: covariance is not positive semidefinite (eigenvalue {:.3e})",
            values[0]
        )));
    }
    let root = DMatrix::from_diagonal(&DVector::from_iterator(n, values.iter().map(|v| v.max(0.0).sqrt())));
    Ok(&vectors * root)
}

fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

impl MarketSpec {
    pub fn validate(&self) -> Result<Vec<DMatrix<f64>>> {
        let n = self.assets.len();
        if n == 0 {
            return Err(Error::InvalidSpec("no assets".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::InvalidSpec("at least one regime is required".into()));
        }
        if self.days < 2 {
            return Err(Error::InvalidSpec("days must be at least 2".into()));
        }
        if !(self.initial_price > 0.0 && self.initial_price.is_finite()) {
            return Err(Error::InvalidSpec("initial_price must be positive".into()));
        }
        self.regimes
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let label = if r.name.is_empty() { format!("regime {k}") } else { r.name.clone() };
                if r.mean.len() != n || r.covariance.len() != n || r.covariance.iter().any(|row| row.len() != n) {
                    return Err(Error::InvalidSpec(format!("{label}: dimensions do not match {n} assets")));
                }
                if r.min_duration == 0 || r.min_duration > r.max_duration {
                    return Err(Error::InvalidSpec(format!("{label}: need 1 ≤ min_duration ≤ max_duration")));
                }
                if r.mean.iter().chain(r.covariance.iter().flatten()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec(format!("{label}: non-finite parameter")));
                }
                let cov = DMatrix::from_fn(n, n, |i, j| r.covariance[i][j]);
                psd_sqrt(&cov, &label)
            })
            .collect()
    }
}

/// Regime-switching multivariate Gaussian returns compounded into prices.
/// The first regime is drawn uniformly; each spell lasts a uniform number of
/// days within its bounds and is followed by a uniformly chosen different
/// regime (or the same one when only one exists).
pub fn generate_synthetic_market(spec: &MarketSpec, seed: u64) -> Result<SyntheticMarket> {
    let roots = spec.validate()?;
    let n = spec.assets.len();
    let k = spec.regimes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = spec.days - 1;

    let mut labels = Vec::with_capacity(steps);
    let mut regime = rng.random_range(0..k);
    while labels.len() < steps {
        let r = &spec.regimes[regime];
        let spell = rng.random_range(r.min_duration..=r.max_duration);
        labels.extend(std::iter::repeat_n(regime, spell.min(steps - labels.len())));
        if k > 1 {
            let next = rng.random_range(0..k - 1);
            regime = if next >= regime { next + 1 } else { next };
        }
    }

    let mut prices = DMatrix::zeros(spec.days, n);
    prices.row_mut(0).fill(spec.initial_price);
    for (t, &g) in labels.iter().enumerate() {
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let shock = &roots[g] * z;
        for a in 0..n {
            let r = (spec.regimes[g].mean[a] + shock[a]).max(-0.95);
            prices[(t + 1, a)] = prices[(t, a)] * (1.0 + r);
        }
    }
    let dates = business_days(spec.start, spec.days);
    Ok(SyntheticMarket {
        prices: PricePanel::new(dates, spec.assets.clone(), prices)?,
        regimes: labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::correlation_summary;
    use crate::linalg::{covariance_to_correlation, sample_covariance_matrix};
    use crate::market_data::compute_returns;

    fn regime(mean: f64, rho: f64, vol: f64, n: usize) -> RegimeSpec {
        RegimeSpec {
            name: String::new(),
            mean: vec![mean; n],
            covariance: (0..n)
                .map(|i| (0..n).map(|j| vol * vol * if i == j { 1.0 } else { rho }).collect())
                .collect(),
            min_duration: 60,
            max_duration: 120,
        }
    }

    fn spec(regimes: Vec<RegimeSpec>, days: usize) -> MarketSpec {
        let n = regimes[0].mean.len();
        MarketSpec {
            assets: (0..n).map(|i| format!("S{i}")).collect(),
            regimes,
            days,
            start: default_start(),
            initial_price: 100.0,
        }
    }

    #[test]
    fn single_regime_moments() {
        let mut r = regime(0.0, 0.0, 1.0, 2);
        r.covariance = vec![vec![1e-4, 0.0], vec![0.0, 1e-4]];
        let m = generate_synthetic_market(&spec(vec![r], 5001), 1).unwrap();
        let ret = compute_returns(&m.prices).unwrap();
        let x = ret.returns();
        let t = x.nrows() as f64;
        for a in 0..2 {
            let col: Vec<f64> = x.column(a).iter().copied().collect();
            let mean = col.iter().sum::<f64>() / t;
            assert!(mean.abs() < 4.0 * 0.01 / t.sqrt());
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
            // var of a sample variance ≈ 2σ⁴/(T−1)
            assert!((var - 1e-4).abs() < 4.0 * 1e-4 * (2.0 / t).sqrt());
        }
        let c = covariance_to_correlation(&sample_covariance_matrix(x));
        assert!(c[(0, 1)].abs() < 4.0 / t.sqrt());
    }

    #[test]
    fn same_seed_same_panel() {
        let s = spec(vec![regime(0.0005, 0.2, 0.01, 3), regime(-0.001, 0.8, 0.02, 3)], 600);
        let a = generate_synthetic_market(&s, 7).unwrap();
        let b = generate_synthetic_market(&s, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic_market(&s, 8).unwrap());
        assert_eq!(a.prices.len(), 600);
        assert_eq!(a.regimes.len(), 599);
        assert!(a.regimes.contains(&0) && a.regimes.contains(&1));
        assert!(a.prices.dates().iter().all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let mut r = regime(0.0, 0.0, 0.01, 2);
        r.covariance = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(
            generate_synthetic_market(&spec(vec![r], 10), 0),
            Err(Error::InvalidSpec(_))
        ));
        let mut empty = spec(vec![regime(0.0, 0.0, 0.01, 2)], 10);
        empty.regimes.clear();
        assert!(generate_synthetic_market(&empty, 0).is_err());
    }

    #[test]
    fn rolling_mean_correlation_separates_regimes() {
        let s = spec(vec![regime(0.0, 0.1, 0.01, 4), regime(0.0, 0.8, 0.01, 4)], 3000);
        let m = generate_synthetic_market(&s, 3).unwrap();
        let ret = compute_returns(&m.prices).unwrap();
        let w = 40;
        let mut scored: Vec<(f64, bool)> = Vec::new();
        for end in (w..ret.len()).step_by(10) {
            let labels = &m.regimes[end - w..end];
            if labels.iter().any(|l| *l != labels[0]) {
                continue;
            }
            let x = ret.window(end - w, end);
            let corr = covariance_to_correlation(&sample_covariance_matrix(x.returns()));
            scored.push((correlation_summary(&corr).unwrap().0, labels[0] == 1));
        }
        let pos: Vec<f64> = scored.iter().filter(|s| s.1).map(|s| s.0).collect();
        let neg: Vec<f64> = scored.iter().filter(|s| !s.1).map(|s| s.0).collect();
        let wins: f64 = pos
            .iter()
            .flat_map(|p| neg.iter().map(move |q| if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 }))
            .sum();
        let auc = wins / (pos.len() * neg.len()) as f64;
        assert!(auc > 0.9, "{auc}");
    }
}
