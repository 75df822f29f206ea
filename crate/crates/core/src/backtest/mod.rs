//! Walk-forward evaluation of HRP, NRP and the switching meta-portfolio.

mod density;
mod report;
mod stats;
mod synthetic;

pub use density::{density_grid, density_surface, strategy_density_surface, DensitySurface, DENSITY_GRID_POINTS};
pub use report::{write_density_csv, write_importances_csv, write_report_features_csv, write_wealth_csv};
pub use stats::{
    compare_strategies, paired_t_test, wilcoxon_signed_rank, Comparison, SignificanceSummary, SignificanceTest,
    TestOutcome,
};
pub use synthetic::{generate_synthetic_market, MarketSpec, RegimeSpec, SyntheticMarket};

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocators::{hrp_pipeline, nrp_weights, HrpSettings, WeightVector};
use crate::covariance::{estimate_covariance, CovarianceSettings, EstimateInfo, EstimatorKind, MIN_DCC_WINDOW};
use crate::error::{Error, Result};
use crate::features::{assemble_features, max_drawdown, FeatureInputs, FeatureVector, DEFAULT_K, TRADING_DAYS};
use crate::learner::{
    bayes_optimize, decide, feature_importance, make_target, predict, realized_sharpe, train_gbt, HyperParams,
    SearchBox, Strategy, TrainingExample, MIN_TRAINING_EXAMPLES,
};
use crate::linalg::sample_std;
use crate::market_data::ReturnPanel;

/// Window lengths in trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Covariance and training lookback.
    pub t_r: usize,
    /// Performance-feature lookback.
    pub t_m: usize,
    /// Holding period.
    pub t_h: usize,
    /// Advance between decisions.
    pub t_a: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            t_r: 756,
            t_m: 63,
            t_h: 21,
            t_a: 21,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("t_r", self.t_r), ("t_m", self.t_m), ("t_h", self.t_h), ("t_a", self.t_a)] {
            if v == 0 {
                out.push(format!("window {name} must be positive"));
            }
        }
        if self.t_m > self.t_r {
            out.push(format!("window t_m ({}) must not exceed t_r ({})", self.t_m, self.t_r));
        }
        if self.t_a > self.t_h {
            out.push(format!("window t_a ({}) must not exceed t_h ({})", self.t_a, self.t_h));
        }
        if self.t_m <= DEFAULT_K {
            out.push(format!("window t_m ({}) must exceed the entropy neighbour count {DEFAULT_K}", self.t_m));
        }
        if self.t_h < 2 {
            out.push("window t_h must be at least 2 to measure a Sharpe ratio".into());
        }
        out
    }

    /// Shortest return panel that yields one decision.
    pub fn min_panel_len(&self) -> usize {
        self.t_r + self.t_h + 1
    }

    /// Row index of each decision date: `t_r + k·t_a` while a full holding
    /// period fits after it.
    pub fn decision_rows(&self, panel_len: usize) -> Vec<usize> {
        (0..)
            .map(|k| self.t_r + k * self.t_a)
            .take_while(|d| d + self.t_h < panel_len)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    /// Charged per unit of one-way turnover.
    pub rate: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { rate: 0.001 }
    }
}

/// `rate × Σ|new − prev|`, where `prev` has already drifted to the end of
/// the previous period.
pub fn apply_costs(prev: &WeightVector, new: &WeightVector, rate: f64) -> Result<f64> {
    if prev.assets() != new.assets() {
        return Err(Error::AssetMismatch);
    }
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidConfig(format!("cost rate {rate} must be finite and nonnegative")));
    }
    Ok(rate * turnover(prev.weights(), new.weights()))
}

fn turnover(prev: &[f64], new: &[f64]) -> f64 {
    prev.iter().zip(new).map(|(a, b)| (b - a).abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecisionPolicy {
    /// Gradient-boosted prediction of the Sharpe spread.
    #[default]
    Learned,
    AlwaysHrp,
    AlwaysNrp,
    /// Ex-post better component over the held period. Uses future data;
    /// only meaningful as an upper bound.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSettings {
    pub search: SearchBox,
    /// Hyperparameter trials per optimization.
    pub budget: usize,
    /// Decisions between re-optimizations; 1 re-optimizes every period.
    pub cadence: usize,
    /// Used until the first optimization has run.
    pub initial: HyperParams,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        Self {
            search: SearchBox::default(),
            budget: 30,
            cadence: 6,
            initial: HyperParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub window: WindowConfig,
    pub cost: CostModel,
    pub covariance: CovarianceSettings,
    pub hrp: HrpSettings,
    pub learner: LearnerSettings,
    pub policy: DecisionPolicy,
}

impl BacktestConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut out = self.window.validate();
        if !(self.cost.rate >= 0.0 && self.cost.rate.is_finite()) {
            out.push(format!("cost rate {} must be finite and nonnegative", self.cost.rate));
        }
        if self.covariance.estimator == EstimatorKind::Dcc && self.window.t_r < MIN_DCC_WINDOW {
            out.push(format!(
                "window t_r ({}) is shorter than the {MIN_DCC_WINDOW} days a DCC fit needs",
                self.window.t_r
            ));
        }
        if !(self.covariance.ewma_decay > 0.0 && self.covariance.ewma_decay < 1.0) {
            out.push(format!("ewma_decay {} must lie in (0, 1)", self.covariance.ewma_decay));
        }
        if self.learner.budget == 0 {
            out.push("learner budget must be at least 1".into());
        }
        if self.learner.cadence == 0 {
            out.push("learner cadence must be at least 1".into());
        }
        if let Err(e) = self.learner.search.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.learner.initial.validate() {
            out.push(e.to_string());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Model,
    /// Too few realized examples to train; HRP held.
    ColdStart,
    /// Features or the model failed; HRP held.
    Fallback,
    Fixed,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub date: NaiveDate,
    /// Return-panel row of the decision date.
    pub row: usize,
    /// Days this allocation is held before the next decision.
    pub holding_days: usize,
    pub predicted_spread: Option<f64>,
    pub choice: Strategy,
    pub source: DecisionSource,
    pub hrp_weights: Vec<f64>,
    pub nrp_weights: Vec<f64>,
    pub covariance: Option<EstimateInfo>,
    pub training_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackEvent {
    pub date: NaiveDate,
    pub component: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    /// Annualized; 0 when the return series has no dispersion.
    pub sharpe: f64,
    pub cumulative_return: f64,
    pub max_drawdown: f64,
    pub realized_vol: f64,
    /// Sum of one-way turnover over all rebalances after the first.
    pub turnover: f64,
    /// Sum of cost fractions deducted.
    pub cost_drag: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSet {
    pub hrp: StrategyMetrics,
    pub nrp: StrategyMetrics,
    pub mpm: StrategyMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub date: NaiveDate,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRecord {
    pub date: NaiveDate,
    pub importances: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamRecord {
    pub date: NaiveDate,
    pub params: HyperParams,
    pub cv_rmse: f64,
    pub holdout_rmse: Option<f64>,
}

/// Daily net returns over the evaluated span, one entry per date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyReturns {
    pub dates: Vec<NaiveDate>,
    pub hrp: Vec<f64>,
    pub nrp: Vec<f64>,
    pub mpm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub universe_id: u32,
    pub assets: Vec<String>,
    pub seed: u64,
    pub config: BacktestConfig,
    pub decisions: Vec<DecisionRecord>,
    pub daily: DailyReturns,
    pub metrics: MetricsSet,
    pub features: Vec<FeatureRecord>,
    pub importances: Vec<ImportanceRecord>,
    pub hyperparams: Vec<HyperparamRecord>,
    pub fallbacks: Vec<FallbackEvent>,
}

impl BacktestReport {
    pub fn series(&self, strategy: Option<Strategy>) -> &[f64] {
        match strategy {
            Some(Strategy::Hrp) => &self.daily.hrp,
            Some(Strategy::Nrp) => &self.daily.nrp,
            None => &self.daily.mpm,
        }
    }

    /// Wealth at the first decision date (1.0) followed by one value per
    /// daily return.
    pub fn wealth(&self, strategy: Option<Strategy>) -> Vec<f64> {
        wealth_curve(self.series(strategy))
    }
}

pub fn wealth_curve(returns: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len() + 1);
    let mut w = 1.0;
    out.push(w);
    for r in returns {
        w *= 1.0 + r;
        out.push(w);
    }
    out
}

fn metrics(returns: &[f64], turnover: f64, cost_drag: f64) -> StrategyMetrics {
    StrategyMetrics {
        sharpe: realized_sharpe(returns).unwrap_or(0.0),
        cumulative_return: wealth_curve(returns).last().copied().unwrap_or(1.0) - 1.0,
        max_drawdown: max_drawdown(returns),
        realized_vol: if returns.len() >= 2 {
            sample_std(returns) * TRADING_DAYS.sqrt()
        } else {
            0.0
        },
        turnover,
        cost_drag,
    }
}

/// Gross daily returns of `weights` held over `rows` with drift, and the
/// weights at the end of the last day.
fn hold(panel: &ReturnPanel, weights: &[f64], rows: std::ops::Range<usize>) -> (Vec<f64>, Vec<f64>) {
    let r = panel.returns();
    let mut w = weights.to_vec();
    let mut out = Vec::with_capacity(rows.len());
    for t in rows {
        let gross: f64 = w.iter().enumerate().map(|(n, wn)| wn * r[(t, n)]).sum();
        for (n, wn) in w.iter_mut().enumerate() {
            *wn *= (1.0 + r[(t, n)]) / (1.0 + gross);
        }
        out.push(gross);
    }
    (out, w)
}

/// Static-weight returns of `weights` over `rows`.
fn apply_static(panel: &ReturnPanel, weights: &[f64], rows: std::ops::Range<usize>) -> Vec<f64> {
    let r = panel.returns();
    rows.map(|t| weights.iter().enumerate().map(|(n, w)| w * r[(t, n)]).sum())
        .collect()
}

struct Book {
    weights: Option<Vec<f64>>,
    turnover: f64,
    cost: f64,
}

impl Book {
    fn new() -> Self {
        Self {
            weights: None,
            turnover: 0.0,
            cost: 0.0,
        }
    }

    /// Cost of moving from the drifted holdings to `target`; the first
    /// allocation is free.
    fn rebalance(&mut self, target: &[f64], rate: f64) -> f64 {
        let c = match &self.weights {
            Some(prev) => {
                let t = turnover(prev, target);
                self.turnover += t;
                rate * t
            }
            None => 0.0,
        };
        self.cost += c;
        c
    }
}

struct Pending {
    row: usize,
    date: NaiveDate,
    features: FeatureVector,
    hrp: Vec<f64>,
    nrp: Vec<f64>,
}

/// Runs the walk-forward loop on one universe. The decision at row `d` uses
/// returns from rows `d − t_r .. d` only and takes effect from row `d + 1`.
pub fn run_backtest(panel: &ReturnPanel, config: &BacktestConfig, universe_id: u32, seed: u64) -> Result<BacktestReport> {
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(Error::InvalidConfig(issues.join("; ")));
    }
    let w = config.window;
    if panel.len() < w.min_panel_len() {
        return Err(Error::InsufficientHistory {
            needed: w.min_panel_len(),
            available: panel.len(),
        });
    }
    let n = panel.n_assets();
    let assets = panel.assets().to_vec();
    let rows = w.decision_rows(panel.len());
    let rate = config.cost.rate;

    let mut books = [Book::new(), Book::new(), Book::new()];
    let mut daily = DailyReturns {
        dates: Vec::new(),
        hrp: Vec::new(),
        nrp: Vec::new(),
        mpm: Vec::new(),
    };
    let mut decisions = Vec::with_capacity(rows.len());
    let mut features_log = Vec::new();
    let mut importances = Vec::new();
    let mut hyper_log = Vec::new();
    let mut fallbacks = Vec::new();
    let mut pending: Vec<Pending> = Vec::new();
    let mut examples: Vec<TrainingExample> = Vec::new();
    let mut last_weights: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut tuned: Option<HyperParams> = None;
    let mut trained_decisions = 0usize;

    for (k, &d) in rows.iter().enumerate() {
        let date = panel.dates()[d];
        let end = if k + 1 < rows.len() { rows[k + 1] } else { d + w.t_h };
        let held = (d + 1)..(end + 1);
        let mut log_fallback = |component: &str, message: String| {
            log::warn!("universe {universe_id} {date}: {component}: {message}");
            fallbacks.push(FallbackEvent {
                date,
                component: component.to_string(),
                message,
            });
        };

        // Realized targets for earlier decisions whose holding window closed
        // before this decision date.
        let mut still_pending = Vec::with_capacity(pending.len());
        for p in pending.drain(..) {
            if p.row + w.t_h < d {
                let window = (p.row + 1)..(p.row + w.t_h + 1);
                let (h, _) = hold(panel, &p.hrp, window.clone());
                let (r, _) = hold(panel, &p.nrp, window);
                match make_target(&h, &r) {
                    Ok(target) => examples.push(TrainingExample {
                        as_of: p.date,
                        features: p.features,
                        target,
                    }),
                    Err(e) => log_fallback("target", format!("example from {} dropped: {e}", p.date)),
                }
            } else {
                still_pending.push(p);
            }
        }
        pending = still_pending;

        let window = panel.window(d - w.t_r, d);
        let mut estimate_info = None;
        let mut built = None;
        match estimate_covariance(&window, &config.covariance) {
            Ok((est, info)) => {
                if let Some(reason) = &info.fallback_reason {
                    log_fallback("covariance", reason.clone());
                }
                match (hrp_pipeline(&est, &config.hrp), nrp_weights(&est)) {
                    (Ok(h), Ok(r)) => built = Some((est, h, r)),
                    (Err(e), _) | (_, Err(e)) => log_fallback("allocation", e.to_string()),
                }
                estimate_info = Some(info);
            }
            Err(e) => log_fallback("covariance", e.to_string()),
        }

        let (hrp_w, nrp_w, feats) = match &built {
            Some((est, hrp, nrp)) => {
                let perf_rows = (d - w.t_m)..d;
                let h = apply_static(panel, hrp.weights.weights(), perf_rows.clone());
                let r = apply_static(panel, nrp.weights(), perf_rows.clone());
                let perf_window = panel.window(perf_rows.start, perf_rows.end);
                let feats = assemble_features(&FeatureInputs {
                    hrp_returns: &h,
                    nrp_returns: &r,
                    window: &perf_window,
                    estimate: est,
                    hrp,
                    estimation_len: w.t_r,
                });
                let feats = match feats {
                    Ok(f) => Some(f),
                    Err(e) => {
                        log_fallback("features", e.to_string());
                        None
                    }
                };
                (hrp.weights.weights().to_vec(), nrp.weights().to_vec(), feats)
            }
            None => {
                let (h, r) = last_weights
                    .clone()
                    .unwrap_or_else(|| (vec![1.0 / n as f64; n], vec![1.0 / n as f64; n]));
                (h, r, None)
            }
        };
        last_weights = Some((hrp_w.clone(), nrp_w.clone()));

        let (gross_h, end_h) = hold(panel, &hrp_w, held.clone());
        let (gross_r, end_r) = hold(panel, &nrp_w, held.clone());

        let (choice, source, predicted) = match config.policy {
            DecisionPolicy::AlwaysHrp => (Strategy::Hrp, DecisionSource::Fixed, None),
            DecisionPolicy::AlwaysNrp => (Strategy::Nrp, DecisionSource::Fixed, None),
            DecisionPolicy::Oracle => {
                let sh = realized_sharpe(&gross_h).unwrap_or(0.0);
                let sr = realized_sharpe(&gross_r).unwrap_or(0.0);
                (if sh >= sr { Strategy::Hrp } else { Strategy::Nrp }, DecisionSource::Oracle, None)
            }
            DecisionPolicy::Learned => match &feats {
                None => (Strategy::Hrp, DecisionSource::Fallback, None),
                Some(_) if examples.len() < MIN_TRAINING_EXAMPLES => (Strategy::Hrp, DecisionSource::ColdStart, None),
                Some(fv) => {
                    if trained_decisions.is_multiple_of(config.learner.cadence) {
                        match bayes_optimize(&examples, config.learner.budget, &config.learner.search, seed) {
                            Ok(opt) => {
                                hyper_log.push(HyperparamRecord {
                                    date,
                                    params: opt.params,
                                    cv_rmse: opt.cv_rmse,
                                    holdout_rmse: opt.holdout_rmse,
                                });
                                tuned = Some(opt.params);
                            }
                            Err(e) => log_fallback("hyperopt", e.to_string()),
                        }
                    }
                    trained_decisions += 1;
                    let params = tuned.unwrap_or(config.learner.initial);
                    let outcome = train_gbt(&examples, &params, seed).and_then(|model| {
                        importances.push(ImportanceRecord {
                            date,
                            importances: feature_importance(&model),
                        });
                        decide(predict(&model, fv)?, date)
                    });
                    match outcome {
                        Ok(dec) => (dec.choice, DecisionSource::Model, Some(dec.predicted_spread)),
                        Err(e) => {
                            log_fallback("learner", e.to_string());
                            (Strategy::Hrp, DecisionSource::Fallback, None)
                        }
                    }
                }
            },
        };

        let c_h = books[0].rebalance(&hrp_w, rate);
        let c_r = books[1].rebalance(&nrp_w, rate);
        let (mpm_target, mpm_gross, mpm_end) = match choice {
            Strategy::Hrp => (&hrp_w, &gross_h, &end_h),
            Strategy::Nrp => (&nrp_w, &gross_r, &end_r),
        };
        let c_m = books[2].rebalance(mpm_target, rate);
        books[0].weights = Some(end_h.clone());
        books[1].weights = Some(end_r.clone());
        books[2].weights = Some(mpm_end.clone());

        for (i, t) in held.clone().enumerate() {
            let first = i == 0;
            daily.dates.push(panel.dates()[t]);
            daily.hrp.push(if first { gross_h[i] - c_h } else { gross_h[i] });
            daily.nrp.push(if first { gross_r[i] - c_r } else { gross_r[i] });
            daily.mpm.push(if first { mpm_gross[i] - c_m } else { mpm_gross[i] });
        }

        if let Some(fv) = &feats {
            features_log.push(FeatureRecord {
                date,
                features: fv.clone(),
            });
            pending.push(Pending {
                row: d,
                date,
                features: fv.clone(),
                hrp: hrp_w.clone(),
                nrp: nrp_w.clone(),
            });
        }
        decisions.push(DecisionRecord {
            date,
            row: d,
            holding_days: held.len(),
            predicted_spread: predicted,
            choice,
            source,
            hrp_weights: hrp_w,
            nrp_weights: nrp_w,
            covariance: estimate_info,
            training_examples: examples.len(),
        });
    }

    let metrics = MetricsSet {
        hrp: metrics(&daily.hrp, books[0].turnover, books[0].cost),
        nrp: metrics(&daily.nrp, books[1].turnover, books[1].cost),
        mpm: metrics(&daily.mpm, books[2].turnover, books[2].cost),
    };
    Ok(BacktestReport {
        universe_id,
        assets,
        seed,
        config: *config,
        decisions,
        daily,
        metrics,
        features: features_log,
        importances,
        hyperparams: hyper_log,
        fallbacks,
    })
}

/// Per-universe seed derived from the run seed.
pub fn universe_seed(seed: u64, universe_id: u32) -> u64 {
    seed ^ (u64::from(universe_id)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs each universe in parallel; results come back ordered by universe id.
pub fn run_universes(
    universes: &[(u32, ReturnPanel)],
    config: &BacktestConfig,
    seed: u64,
) -> Vec<(u32, Result<BacktestReport>)> {
    let mut out: Vec<(u32, Result<BacktestReport>)> = universes
        .par_iter()
        .map(|(id, panel)| (*id, run_backtest(panel, config, *id, universe_seed(seed, *id))))
        .collect();
    out.sort_by_key(|(id, _)| *id);
    out
}
