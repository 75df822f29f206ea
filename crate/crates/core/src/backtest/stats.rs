use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::BacktestReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceTest {
    #[default]
    PairedT,
    Wilcoxon,
}

/// One-sided test of "mean difference > 0".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    /// t statistic, or W⁺ for the signed-rank test.
    pub statistic: f64,
    pub p_value: f64,
}

/// Paired one-sided t-test on `diffs`. With zero dispersion the p-value is
/// 0.5 for a zero mean and 0 or 1 according to the sign otherwise.
pub fn paired_t_test(diffs: &[f64]) -> Result<TestOutcome> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, available: n });
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    if !(se > 0.0) || se < 1e-14 * mean.abs() {
        let (statistic, p_value) = match mean.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => (f64::INFINITY, 0.0),
            Some(std::cmp::Ordering::Less) => (f64::NEG_INFINITY, 1.0),
            _ => (0.0, 0.5),
        };
        return Ok(TestOutcome { statistic, p_value });
    }
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df ≥ 1");
    Ok(TestOutcome {
        statistic: t,
        p_value: dist.sf(t),
    })
}

/// Exact one-sided Wilcoxon signed-rank test. Zero differences are dropped;
/// tied magnitudes share their average rank.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<TestOutcome> {
    if diffs.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            available: diffs.len(),
        });
    }
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nz.is_empty() {
        return Ok(TestOutcome {
            statistic: 0.0,
            p_value: 0.5,
        });
    }
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    // Doubled ranks stay integral under averaging.
    let m = nz.len();
    let mut ranks2 = vec![0usize; m];
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        for r in ranks2.iter_mut().take(j + 1).skip(i) {
            *r = i + j + 2;
        }
        i = j + 1;
    }
    let w_plus2: usize = nz.iter().zip(&ranks2).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total2: usize = ranks2.iter().sum();
    // counts[s] = number of sign patterns with doubled W⁺ = s
    let mut counts = vec![0f64; total2 + 1];
    counts[0] = 1.0;
    for &r in &ranks2 {
        for s in (r..=total2).rev() {
            counts[s] += counts[s - r];
        }
    }
    let patterns = 2f64.powi(m as i32);
    let tail: f64 = counts[w_plus2..].iter().sum();
    Ok(TestOutcome {
        statistic: w_plus2 as f64 / 2.0,
        p_value: tail / patterns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// "hrp" or "nrp".
    pub baseline: String,
    /// "sharpe" or "cumulative_return".
    pub metric: String,
    /// (universe id, MPM − baseline)
    pub deltas: Vec<(u32, f64)>,
    pub mean_delta: f64,
    pub outcome: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceSummary {
    pub test: SignificanceTest,
    pub comparisons: Vec<Comparison>,
}

impl SignificanceSummary {
    pub fn get(&self, baseline: &str, metric: &str) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.baseline == baseline && c.metric == metric)
    }
}

/// Paired tests across universes of MPM against each component, for Sharpe
/// and cumulative return.
pub fn compare_strategies(reports: &[BacktestReport], test: SignificanceTest) -> Result<SignificanceSummary> {
    if reports.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            available: reports.len(),
        });
    }
    let mut ordered: Vec<&BacktestReport> = reports.iter().collect();
    ordered.sort_by_key(|r| r.universe_id);
    let mut comparisons = Vec::new();
    for baseline in ["hrp", "nrp"] {
        for metric in ["sharpe", "cumulative_return"] {
            let deltas: Vec<(u32, f64)> = ordered
                .iter()
                .map(|r| {
                    let base = if baseline == "hrp" { r.metrics.hrp } else { r.metrics.nrp };
                    let pick = |m: &super::StrategyMetrics| {
                        if metric == "sharpe" {
                            m.sharpe
                        } else {
                            m.cumulative_return
                        }
                    };
                    (r.universe_id, pick(&r.metrics.mpm) - pick(&base))
                })
                .collect();
            let values: Vec<f64> = deltas.iter().map(|d| d.1).collect();
            let outcome = match test {
                SignificanceTest::PairedT => paired_t_test(&values)?,
                SignificanceTest::Wilcoxon => wilcoxon_signed_rank(&values)?,
            };
            comparisons.push(Comparison {
                baseline: baseline.into(),
                metric: metric.into(),
                mean_delta: values.iter().sum::<f64>() / values.len() as f64,
                deltas,
                outcome,
            });
        }
    }
    Ok(SignificanceSummary { test, comparisons })
}
