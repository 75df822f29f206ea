use serde::{Deserialize, Serialize};

use super::BacktestReport;
use crate::error::{Error, Result};
use crate::learner::Strategy;
use crate::linalg::sample_std;

pub const DENSITY_GRID_POINTS: usize = 401;

/// Kernel density estimates of daily returns per non-overlapping bucket,
/// evaluated on a shared return grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySurface {
    pub grid: Vec<f64>,
    /// Row label (strategy name) for each entry of `densities`.
    pub series: Vec<String>,
    /// Index of the first day in each bucket.
    pub bucket_starts: Vec<Vec<usize>>,
    /// `densities[s][b][g]`: series s, bucket b, grid point g.
    pub densities: Vec<Vec<Vec<f64>>>,
}

fn silverman(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let (lo, frac) = (pos.floor() as usize, pos.fract());
        sorted[lo] + frac * (sorted[(lo + 1).min(sorted.len() - 1)] - sorted[lo])
    };
    let iqr = q(0.75) - q(0.25);
    let sd = if xs.len() >= 2 { sample_std(xs) } else { 0.0 };
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Evenly spaced grid spanning every value in `series` with a margin of four
/// bandwidths (at least 1e-3 of the data scale).
pub fn density_grid(series: &[&[f64]], bucket: usize, points: usize) -> Vec<f64> {
    let all = series.iter().flat_map(|s| s.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let widest = series
        .iter()
        .flat_map(|s| s.chunks(bucket.max(1)).filter(|c| c.len() == bucket).map(silverman))
        .fold(0.0, f64::max);
    let pad = (4.0 * widest).max(1e-3 * lo.abs().max(hi.abs()).max(1e-2));
    let (a, b) = (lo - pad, hi + pad);
    (0..points).map(|i| a + (b - a) * i as f64 / (points - 1) as f64).collect()
}

fn trapezoid(grid: &[f64], f: &[f64]) -> f64 {
    grid.windows(2).zip(f.windows(2)).map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0])).sum()
}

fn kde(sample: &[f64], grid: &[f64]) -> Vec<f64> {
    let h = silverman(sample);
    let mut f: Vec<f64> = if h > 0.0 {
        let norm = 1.0 / (sample.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        grid.iter()
            .map(|&g| norm * sample.iter().map(|&x| (-0.5 * ((g - x) / h).powi(2)).exp()).sum::<f64>())
            .collect()
    } else {
        // No dispersion: all mass on the grid point nearest the value.
        let v = sample[0];
        let nearest = grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut f = vec![0.0; grid.len()];
        f[nearest] = 1.0;
        f
    };
    let mass = trapezoid(grid, &f);
    if mass > 0.0 {
        f.iter_mut().for_each(|v| *v /= mass);
    }
    f
}

/// Densities of each full `bucket`-day block of `series` on `grid`, each
/// normalized to integrate to 1 under the trapezoid rule.
pub fn density_surface(series: &[f64], bucket: usize, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    if bucket == 0 || bucket > series.len() {
        return Err(Error::InsufficientHistory {
            needed: bucket.max(1),
            available: series.len(),
        });
    }
    Ok(series.chunks_exact(bucket).map(|c| kde(c, grid)).collect())
}

/// Density surfaces of the HRP, NRP and MPM daily net returns in `report`.
pub fn strategy_density_surface(report: &BacktestReport, bucket: usize) -> Result<DensitySurface> {
    let picks = [("hrp", Some(Strategy::Hrp)), ("nrp", Some(Strategy::Nrp)), ("mpm", None)];
    let all: Vec<&[f64]> = picks.iter().map(|(_, s)| report.series(*s)).collect();
    if bucket == 0 || bucket > all[0].len() {
        return Err(Error::InsufficientHistory {
            needed: bucket.max(1),
            available: all[0].len(),
        });
    }
    let grid = density_grid(&all, bucket, DENSITY_GRID_POINTS);
    let mut densities = Vec::new();
    let mut bucket_starts = Vec::new();
    for s in &all {
        let d = density_surface(s, bucket, &grid)?;
        bucket_starts.push((0..d.len()).map(|b| b * bucket).collect());
        densities.push(d);
    }
    Ok(DensitySurface {
        grid,
        series: picks.iter().map(|(n, _)| n.to_string()).collect(),
        bucket_starts,
        densities,
    })
}
