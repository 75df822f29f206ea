//! CSV renderings of a backtest report.

use std::io::Write;

use super::{BacktestReport, DensitySurface};
use crate::error::{Error, Result};
use crate::learner::Strategy;
use crate::market_data::DATE_FORMAT;

/// Columns: `universe_id,date,hrp,nrp,mpm`. The first row of each universe
/// is its first decision date with all wealth values at 1.
pub fn write_wealth_csv<W: Write>(reports: &[BacktestReport], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["universe_id", "date", "hrp", "nrp", "mpm"])?;
    for rep in reports {
        let Some(first) = rep.decisions.first() else {
            continue;
        };
        let dates = std::iter::once(first.date).chain(rep.daily.dates.iter().copied());
        let (h, n, m) = (rep.wealth(Some(Strategy::Hrp)), rep.wealth(Some(Strategy::Nrp)), rep.wealth(None));
        for (i, date) in dates.enumerate() {
            out.write_record([
                rep.universe_id.to_string(),
                date.format(DATE_FORMAT).to_string(),
                h[i].to_string(),
                n[i].to_string(),
                m[i].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Columns: `universe_id,date` then one column per feature in name order.
pub fn write_report_features_csv<W: Write>(reports: &[BacktestReport], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let first = reports.iter().flat_map(|r| r.features.first()).next();
    let names: Vec<&str> = first.map(|f| f.features.names().collect()).unwrap_or_default();
    out.write_record(["universe_id", "date"].into_iter().chain(names.iter().copied()))?;
    for rep in reports {
        for rec in &rep.features {
            if !rec.features.names().eq(names.iter().copied()) {
                return Err(Error::FeatureMismatch(format!(
                    "feature names differ in universe {} on {}",
                    rep.universe_id, rec.date
                )));
            }
            let mut record = vec![rep.universe_id.to_string(), rec.date.format(DATE_FORMAT).to_string()];
            record.extend(rec.features.iter().map(|(_, v)| v.to_string()));
            out.write_record(&record)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Long format: `universe_id,date,feature,importance`.
pub fn write_importances_csv<W: Write>(reports: &[BacktestReport], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["universe_id", "date", "feature", "importance"])?;
    for rep in reports {
        for rec in &rep.importances {
            for (name, v) in &rec.importances {
                out.write_record([
                    rep.universe_id.to_string(),
                    rec.date.format(DATE_FORMAT).to_string(),
                    name.clone(),
                    v.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Long format: `universe_id,strategy,bucket,start_day,return,density`.
pub fn write_density_csv<W: Write>(surfaces: &[(u32, DensitySurface)], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["universe_id", "strategy", "bucket", "start_day", "return", "density"])?;
    for (id, s) in surfaces {
        for (k, name) in s.series.iter().enumerate() {
            for (b, dens) in s.densities[k].iter().enumerate() {
                for (x, f) in s.grid.iter().zip(dens) {
                    out.write_record([
                        id.to_string(),
                        name.clone(),
                        b.to_string(),
                        s.bucket_starts[k][b].to_string(),
                        x.to_string(),
                        f.to_string(),
                    ])?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
