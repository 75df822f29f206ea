use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{mean, population_std, sample_std};
use crate::market_data::ReturnPanel;

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceFeatures {
    pub avg_ret: f64,
    /// Annualized sample standard deviation.
    pub real_vol: f64,
    /// Largest peak-to-trough fall of compounded wealth, as a positive fraction.
    pub max_dd: f64,
    /// Root mean square of negative returns (MAR = 0).
    pub down_dev: f64,
}

pub fn performance_features(returns: &[f64]) -> Result<PerformanceFeatures> {
    if returns.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: returns.len(),
        });
    }
    let down = returns.iter().map(|r| r.min(0.0).powi(2)).sum::<f64>() / returns.len() as f64;
    Ok(PerformanceFeatures {
        avg_ret: mean(returns),
        real_vol: sample_std(returns) * TRADING_DAYS.sqrt(),
        max_dd: max_drawdown(returns),
        down_dev: down.sqrt(),
    })
}

/// Maximum drawdown of the wealth curve that starts at 1 and compounds `returns`.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let mut wealth = 1.0;
    let mut peak = 1.0;
    let mut worst: f64 = 0.0;
    for r in returns {
        wealth *= 1.0 + r;
        peak = f64::max(peak, wealth);
        worst = worst.max((peak - wealth) / peak);
    }
    worst
}

/// Mean and sample standard deviation over every (date, asset) cell.
pub fn universe_moments(window: &ReturnPanel) -> Result<(f64, f64)> {
    if window.is_empty() {
        return Err(Error::InsufficientHistory {
            needed: 1,
            available: 0,
        });
    }
    let cells: Vec<f64> = window.returns().iter().copied().collect();
    Ok((mean(&cells), sample_std(&cells)))
}

/// Mean and population standard deviation of the strictly lower-triangular entries.
pub fn correlation_summary(correlation: &DMatrix<f64>) -> Result<(f64, f64)> {
    let n = correlation.nrows();
    if n < 2 {
        return Err(Error::InsufficientAssets {
            needed: 2,
            available: n,
        });
    }
    let lower: Vec<f64> = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| correlation[(i, j)])
        .collect();
    Ok((mean(&lower), population_std(&lower)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_returns() {
        let f = performance_features(&[0.0; 10]).unwrap();
        assert_eq!((f.avg_ret, f.real_vol, f.max_dd, f.down_dev), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn drawdown_example() {
        // prices 100, 110, 99, 121
        let r = [0.10, 99.0 / 110.0 - 1.0, 121.0 / 99.0 - 1.0];
        let f = performance_features(&r).unwrap();
        assert!((f.max_dd - 0.10).abs() < 1e-12);
    }

    #[test]
    fn downside_deviation_example() {
        let f = performance_features(&[0.01, -0.02, 0.03, -0.01]).unwrap();
        assert!((f.down_dev - 0.011180339887498949).abs() < 1e-12);
        assert!((f.avg_ret - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn too_short() {
        assert!(performance_features(&[0.01]).is_err());
    }

    #[test]
    fn moments_examples() {
        let p = ReturnPanel::from_matrix(DMatrix::zeros(4, 3)).unwrap();
        assert_eq!(universe_moments(&p).unwrap(), (0.0, 0.0));
        let p = ReturnPanel::from_matrix(DMatrix::from_row_slice(1, 2, &[0.01, 0.03])).unwrap();
        let (m, s) = universe_moments(&p).unwrap();
        assert!((m - 0.02).abs() < 1e-15 && (s - 0.014_142_135_623_730_95).abs() < 1e-12);
        let col = [0.01, -0.02, 0.005, 0.03];
        let p = ReturnPanel::from_matrix(DMatrix::from_column_slice(4, 1, &col)).unwrap();
        assert_eq!(universe_moments(&p).unwrap(), (mean(&col), sample_std(&col)));
    }

    #[test]
    fn correlation_summary_examples() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert_eq!(correlation_summary(&c).unwrap(), (0.5, 0.0));
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.4, 0.2, 1.0, 0.6, 0.4, 0.6, 1.0]);
        let (m, s) = correlation_summary(&c).unwrap();
        assert!((m - 0.4).abs() < 1e-12 && (s - 0.16330).abs() < 1e-5);
        assert_eq!(correlation_summary(&DMatrix::identity(4, 4)).unwrap(), (0.0, 0.0));
        assert!(correlation_summary(&DMatrix::identity(1, 1)).is_err());
    }
}
