//! Price ingestion, panel alignment and return computation.
//!
//! Input files are long-format CSV with a `date,ticker,price` header, one row
//! per (date, ticker). Panels are aligned by inner join: a date survives only
//! if every requested ticker has a price on it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::allocators::WeightVector;
use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Aligned date × asset matrix of strictly positive prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    prices: DMatrix<f64>,
}

impl PricePanel {
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != assets.len() {
            return Err(Error::DimensionMismatch(format!(
                "price matrix is {}x{} but panel has {} dates and {} assets",
                prices.nrows(),
                prices.ncols(),
                dates.len(),
                assets.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec("dates must be strictly increasing".into()));
        }
        check_unique(&assets)?;
        for (t, date) in dates.iter().enumerate() {
            for (n, ticker) in assets.iter().enumerate() {
                let p = prices[(t, n)];
                if !(p.is_finite() && p > 0.0) {
                    return Err(Error::InvalidPrice {
                        ticker: ticker.clone(),
                        date: date.format(DATE_FORMAT).to_string(),
                        price: p,
                    });
                }
            }
        }
        Ok(Self {
            dates,
            assets,
            prices,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Restrict the panel to `tickers`, in the requested order.
    pub fn select(&self, tickers: &[String]) -> Result<Self> {
        let cols = tickers
            .iter()
            .map(|t| {
                self.assets
                    .iter()
                    .position(|a| a == t)
                    .ok_or_else(|| Error::UnknownAsset(t.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let prices = DMatrix::from_fn(self.len(), cols.len(), |t, j| self.prices[(t, cols[j])]);
        Self::new(self.dates.clone(), tickers.to_vec(), prices)
    }
}

/// Simple returns; row `t` is dated at the later of the two prices it spans.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    returns: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.nrows() != dates.len() || returns.ncols() != assets.len() {
            return Err(Error::DimensionMismatch(format!(
                "return matrix is {}x{} but panel has {} dates and {} assets",
                returns.nrows(),
                returns.ncols(),
                dates.len(),
                assets.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec("dates must be strictly increasing".into()));
        }
        check_unique(&assets)?;
        if let Some(bad) = returns.iter().find(|r| !(r.is_finite() && **r > -1.0)) {
            return Err(Error::InvalidSpec(format!("return {bad} is not above -1")));
        }
        Ok(Self {
            dates,
            assets,
            returns,
        })
    }

    /// Builds a panel with synthetic consecutive dates. Handy for tests and
    /// simulations where calendar dates are irrelevant.
    pub fn from_matrix(returns: DMatrix<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = (0..returns.nrows())
            .map(|i| start + chrono::Duration::days(i as i64))
            .collect();
        let assets = (0..returns.ncols()).map(|i| format!("A{i}")).collect();
        Self::new(dates, assets, returns)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.returns.row(t).iter().copied().collect()
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        self.returns.column(n).iter().copied().collect()
    }

    /// Rows `start..end` as a new panel.
    pub fn window(&self, start: usize, end: usize) -> ReturnPanel {
        assert!(start <= end && end <= self.len(), "window out of range");
        ReturnPanel {
            dates: self.dates[start..end].to_vec(),
            assets: self.assets.clone(),
            returns: self.returns.rows(start, end - start).into_owned(),
        }
    }

    /// Same data with columns permuted: new column `j` is old column `perm[j]`.
    pub fn permute_assets(&self, perm: &[usize]) -> ReturnPanel {
        ReturnPanel {
            dates: self.dates.clone(),
            assets: perm.iter().map(|&j| self.assets[j].clone()).collect(),
            returns: DMatrix::from_fn(self.len(), perm.len(), |t, j| self.returns[(t, perm[j])]),
        }
    }

    pub fn scaled(&self, c: f64) -> ReturnPanel {
        ReturnPanel {
            dates: self.dates.clone(),
            assets: self.assets.clone(),
            returns: &self.returns * c,
        }
    }
}

/// One investment universe drawn from the ticker basket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniverseSpec {
    pub universe_id: u32,
    pub tickers: Vec<String>,
}

impl UniverseSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut findings = Vec::new();
        if self.tickers.len() < 2 {
            findings.push(format!(
                "universe {} has {} tickers; at least 2 are required",
                self.universe_id,
                self.tickers.len()
            ));
        }
        let mut seen = BTreeSet::new();
        for t in &self.tickers {
            if !seen.insert(t) {
                findings.push(format!("universe {} lists ticker {t} twice", self.universe_id));
            }
        }
        findings
    }
}

/// Maximum number of tickers any two universes may have in common.
pub const MAX_SHARED_TICKERS: usize = 2;

/// Checks each universe on its own and every pair against the shared-ticker
/// cap. Returns human-readable findings; empty means valid.
pub fn validate_universes(universes: &[UniverseSpec]) -> Vec<String> {
    let mut findings: Vec<String> = universes.iter().flat_map(UniverseSpec::validate).collect();
    let mut ids = BTreeSet::new();
    for u in universes {
        if !ids.insert(u.universe_id) {
            findings.push(format!("universe id {} is used more than once", u.universe_id));
        }
    }
    for (i, a) in universes.iter().enumerate() {
        let set_a: BTreeSet<&String> = a.tickers.iter().collect();
        for b in &universes[i + 1..] {
            let shared: Vec<&str> = b
                .tickers
                .iter()
                .filter(|t| set_a.contains(t))
                .map(String::as_str)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if shared.len() > MAX_SHARED_TICKERS {
                findings.push(format!(
                    "universes {} and {} share {} tickers ({}); at most {} allowed",
                    a.universe_id,
                    b.universe_id,
                    shared.len(),
                    shared.join(", "),
                    MAX_SHARED_TICKERS
                ));
            }
        }
    }
    findings
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: String,
    ticker: String,
    price: f64,
}

/// Reads every ticker present in a long-format price CSV.
pub fn read_prices<R: Read>(reader: R) -> Result<PricePanel> {
    read_prices_filtered(reader, None)
}

fn read_prices_filtered<R: Read>(reader: R, tickers: Option<&[String]>) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["date", "ticker", "price"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `date,ticker,price`, found `{}`", names.join(",")),
        });
    }

    let mut series: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: PriceRow = record.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let date = NaiveDate::parse_from_str(&row.date, DATE_FORMAT).map_err(|e| Error::Parse {
            line,
            message: format!("bad date `{}`: {e}", row.date),
        })?;
        if !(row.price.is_finite() && row.price > 0.0) {
            return Err(Error::InvalidPrice {
                ticker: row.ticker,
                date: row.date,
                price: row.price,
            });
        }
        let entry = series.entry(row.ticker.clone()).or_default();
        if entry.insert(date, row.price).is_some() {
            return Err(Error::DuplicateRow {
                ticker: row.ticker,
                date: row.date,
            });
        }
    }

    let tickers: Vec<String> = match tickers {
        Some(t) => {
            check_unique(t)?;
            for name in t {
                if !series.contains_key(name) {
                    return Err(Error::UnknownAsset(name.clone()));
                }
            }
            t.to_vec()
        }
        None => series.keys().cloned().collect(),
    };
    if tickers.is_empty() {
        return Err(Error::NoOverlappingDates);
    }

    let mut common: BTreeSet<NaiveDate> = series[&tickers[0]].keys().copied().collect();
    for t in &tickers[1..] {
        let dates = &series[t];
        common.retain(|d| dates.contains_key(d));
    }
    if common.is_empty() {
        return Err(Error::NoOverlappingDates);
    }
    let dates: Vec<NaiveDate> = common.into_iter().collect();
    let prices = DMatrix::from_fn(dates.len(), tickers.len(), |t, n| series[&tickers[n]][&dates[t]]);
    PricePanel::new(dates, tickers, prices)
}

/// Loads `tickers` from the CSV at `path`, keeping only dates on which every
/// requested ticker has a price.
pub fn load_prices(path: impl AsRef<Path>, tickers: &[String]) -> Result<PricePanel> {
    let file = std::fs::File::open(path)?;
    read_prices_filtered(std::io::BufReader::new(file), Some(tickers))
}

/// Writes the canonical long-format CSV: rows ordered by date, then by panel
/// column order. Prices use the shortest round-tripping decimal form, so
/// reading the output back reproduces the panel bit-exactly.
pub fn write_prices<W: Write>(panel: &PricePanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "ticker", "price"])?;
    for (t, date) in panel.dates.iter().enumerate() {
        let d = date.format(DATE_FORMAT).to_string();
        for (n, ticker) in panel.assets.iter().enumerate() {
            w.write_record([d.as_str(), ticker.as_str(), &panel.prices[(t, n)].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn compute_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    let t = panel.len();
    if t < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: t,
        });
    }
    let p = &panel.prices;
    let returns = DMatrix::from_fn(t - 1, panel.n_assets(), |i, n| p[(i + 1, n)] / p[(i, n)] - 1.0);
    ReturnPanel::new(panel.dates[1..].to_vec(), panel.assets.clone(), returns)
}

/// Portfolio return on each date `t`, using the most recent weight vector
/// dated strictly before `t`. Dates with no earlier weight vector are skipped.
pub fn portfolio_returns(
    returns: &ReturnPanel,
    weights_by_date: &BTreeMap<NaiveDate, WeightVector>,
) -> Result<Vec<(NaiveDate, f64)>> {
    for w in weights_by_date.values() {
        if w.assets() != returns.assets() {
            return Err(Error::AssetMismatch);
        }
    }
    let mut out = Vec::with_capacity(returns.len());
    for (t, date) in returns.dates.iter().enumerate() {
        let Some((_, w)) = weights_by_date.range(..*date).next_back() else {
            continue;
        };
        let r: f64 = w
            .weights()
            .iter()
            .enumerate()
            .map(|(n, wn)| wn * returns.returns[(t, n)])
            .sum();
        out.push((*date, r));
    }
    Ok(out)
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashMap::with_capacity(names.len());
    for name in names {
        if seen.insert(name.as_str(), ()).is_some() {
            return Err(Error::InvalidSpec(format!("asset {name} listed twice")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    fn panel_1col(prices: &[f64]) -> PricePanel {
        let dates = (0..prices.len())
            .map(|i| d("2020-01-01") + chrono::Duration::days(i as i64))
            .collect();
        PricePanel::new(
            dates,
            vec!["A".into()],
            DMatrix::from_column_slice(prices.len(), 1, prices),
        )
        .unwrap()
    }

    const CSV_FULL: &str = "date,ticker,price\n\
        2020-01-01,A,100\n2020-01-01,B,50\n\
        2020-01-02,A,101\n2020-01-02,B,51\n\
        2020-01-03,A,102\n2020-01-03,B,49\n";

    #[test]
    fn load_full_panel() {
        let p = read_prices_filtered(CSV_FULL.as_bytes(), Some(&["A".into(), "B".into()])).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.n_assets(), 2);
        assert_eq!(p.prices()[(2, 1)], 49.0);
    }

    #[test]
    fn load_drops_dates_missing_any_ticker() {
        let csv = "date,ticker,price\n\
            2020-01-01,A,100\n2020-01-01,B,50\n\
            2020-01-02,A,101\n\
            2020-01-03,A,102\n2020-01-03,B,49\n";
        let p = read_prices_filtered(csv.as_bytes(), Some(&["A".into(), "B".into()])).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.dates(), &[d("2020-01-01"), d("2020-01-03")]);
    }

    #[test]
    fn load_unknown_ticker() {
        let err = read_prices_filtered(CSV_FULL.as_bytes(), Some(&["ZZZ".into()])).unwrap_err();
        assert_eq!(err, Error::UnknownAsset("ZZZ".into()));
        assert!(err.to_string().contains("unknown asset"));
    }

    #[test]
    fn load_rejects_bad_rows() {
        let csv = "date,ticker,price\n2020-01-01,A,0\n";
        assert!(matches!(read_prices(csv.as_bytes()), Err(Error::InvalidPrice { .. })));
        let csv = "date,ticker,price\n2020-01-01,A,1\n2020-01-01,A,2\n";
        assert!(matches!(read_prices(csv.as_bytes()), Err(Error::DuplicateRow { .. })));
        let csv = "date,ticker,price\n2020-01-01,A,1\n2020-01-02,B,2\n";
        assert_eq!(
            read_prices_filtered(csv.as_bytes(), Some(&["A".into(), "B".into()])).unwrap_err(),
            Error::NoOverlappingDates
        );
        let csv = "day,ticker,price\n2020-01-01,A,1\n";
        assert!(matches!(read_prices(csv.as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn returns_examples() {
        let r = compute_returns(&panel_1col(&[100.0, 110.0])).unwrap();
        assert!((r.returns()[(0, 0)] - 0.10).abs() < 1e-15);

        let r = compute_returns(&panel_1col(&[100.0, 100.0, 100.0])).unwrap();
        assert_eq!(r.column(0), vec![0.0, 0.0]);

        let r = compute_returns(&panel_1col(&[100.0, 80.0, 100.0])).unwrap();
        assert!((r.returns()[(0, 0)] + 0.20).abs() < 1e-15);
        assert!((r.returns()[(1, 0)] - 0.25).abs() < 1e-15);
        assert_eq!(r.dates()[0], d("2020-01-02"));

        assert!(matches!(
            compute_returns(&panel_1col(&[100.0])),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    fn two_asset_returns(r: [f64; 2]) -> ReturnPanel {
        ReturnPanel::new(
            vec![d("2020-01-02")],
            vec!["A".into(), "B".into()],
            DMatrix::from_row_slice(1, 2, &r),
        )
        .unwrap()
    }

    fn weights_before(w: [f64; 2]) -> BTreeMap<NaiveDate, WeightVector> {
        let mut m = BTreeMap::new();
        m.insert(
            d("2020-01-01"),
            WeightVector::new(vec!["A".into(), "B".into()], w.to_vec()).unwrap(),
        );
        m
    }

    #[test]
    fn portfolio_return_examples() {
        let cases = [([0.5, 0.5], [0.02, -0.02], 0.0), ([1.0, 0.0], [0.03, 0.99], 0.03), ([0.8, 0.2], [0.01, 0.05], 0.018)];
        for (w, r, expected) in cases {
            let out = portfolio_returns(&two_asset_returns(r), &weights_before(w)).unwrap();
            assert_eq!(out.len(), 1);
            assert!((out[0].1 - expected).abs() < 1e-15, "{w:?} {r:?}");
        }
    }

    #[test]
    fn portfolio_returns_use_strictly_earlier_weights() {
        let mut weights = weights_before([1.0, 0.0]);
        // same-day weights must not be used
        weights.insert(
            d("2020-01-02"),
            WeightVector::new(vec!["A".into(), "B".into()], vec![0.0, 1.0]).unwrap(),
        );
        let out = portfolio_returns(&two_asset_returns([0.03, 0.5]), &weights).unwrap();
        assert_eq!(out[0].1, 0.03);
    }

    #[test]
    fn portfolio_returns_asset_mismatch() {
        let mut m = BTreeMap::new();
        m.insert(
            d("2020-01-01"),
            WeightVector::new(vec!["A".into(), "C".into()], vec![0.5, 0.5]).unwrap(),
        );
        assert_eq!(
            portfolio_returns(&two_asset_returns([0.0, 0.0]), &m).unwrap_err(),
            Error::AssetMismatch
        );
    }

    #[test]
    fn universe_sharing_rule() {
        let u = |id, t: &[&str]| UniverseSpec {
            universe_id: id,
            tickers: t.iter().map(|s| s.to_string()).collect(),
        };
        let ok = [u(1, &["AGG", "EEM", "GLD"]), u(2, &["AGG", "EEM", "SPY"])];
        assert!(validate_universes(&ok).is_empty());
        let bad = [u(1, &["AGG", "EEM", "GLD", "TLT"]), u(2, &["AGG", "EEM", "GLD", "SPY"])];
        let findings = validate_universes(&bad);
        assert_eq!(findings.len(), 1);
        assert!(findings[0].contains("universes 1 and 2"));
        assert!(!validate_universes(&[u(3, &["SPY"])]).is_empty());
        assert!(!validate_universes(&[u(3, &["SPY", "SPY"])]).is_empty());
    }

    proptest! {
        #[test]
        fn compounding_recovers_price_ratio(prices in proptest::collection::vec(1.0f64..1000.0, 2..60)) {
            let panel = panel_1col(&prices);
            let r = compute_returns(&panel).unwrap();
            let growth: f64 = r.column(0).iter().map(|x| 1.0 + x).product();
            let ratio = prices[prices.len() - 1] / prices[0];
            prop_assert!(((growth - ratio) / ratio).abs() < 1e-12);
        }

        #[test]
        fn portfolio_returns_linear_in_weights(
            a in 0.0f64..1.0, w1 in 0.0f64..1.0, w2 in 0.0f64..1.0,
            r0 in -0.5f64..0.5, r1 in -0.5f64..0.5,
        ) {
            let panel = two_asset_returns([r0, r1]);
            let get = |w: f64| portfolio_returns(&panel, &weights_before([w, 1.0 - w])).unwrap()[0].1;
            let mixed = get(a * w1 + (1.0 - a) * w2);
            prop_assert!((mixed - (a * get(w1) + (1.0 - a) * get(w2))).abs() < 1e-12);
        }

        #[test]
        fn canonical_csv_round_trips(prices in proptest::collection::vec(0.01f64..1e6, 4..40)) {
            let t = prices.len() / 2;
            let dates = (0..t).map(|i| d("2021-03-01") + chrono::Duration::days(i as i64)).collect();
            let panel = PricePanel::new(
                dates,
                vec!["X".into(), "Y".into()],
                DMatrix::from_row_slice(t, 2, &prices[..2 * t]),
            ).unwrap();
            let mut buf = Vec::new();
            write_prices(&panel, &mut buf).unwrap();
            let back = read_prices_filtered(buf.as_slice(), Some(&["X".into(), "Y".into()])).unwrap();
            prop_assert_eq!(back, panel);
        }
    }
}
