//! Gradient-boosted regression of the HRP−NRP Sharpe spread, its
//! hyperparameter search, and the resulting allocation decision.

mod gbt;
mod tpe;

pub use gbt::{
    feature_importance, predict, train_gbt, ModelMetadata, Node, RegressionTree, TreeEnsemble,
    MIN_TRAINING_EXAMPLES,
};
pub use tpe::{bayes_optimize, cv_rmse, Optimization, Trial, CV_FOLDS, TRAIN_FRACTION};

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, TRADING_DAYS};
use crate::linalg::{mean, sample_std};

/// Annualized Sharpe ratio with a zero risk-free rate.
pub fn realized_sharpe(returns: &[f64]) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: returns.len(),
        });
    }
    let sd = sample_std(returns);
    if !(sd > 0.0) {
        return Err(Error::DegenerateSharpe);
    }
    Ok(mean(returns) / sd * TRADING_DAYS.sqrt())
}

/// SR(HRP) − SR(NRP) over the same holding window.
pub fn make_target(hrp_returns: &[f64], nrp_returns: &[f64]) -> Result<f64> {
    if hrp_returns.len() != nrp_returns.len() {
        return Err(Error::DimensionMismatch(format!(
            "holding windows of {} and {} days",
            hrp_returns.len(),
            nrp_returns.len()
        )));
    }
    Ok(realized_sharpe(hrp_returns)? - realized_sharpe(nrp_returns)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub as_of: NaiveDate,
    pub features: FeatureVector,
    /// Realized over the holding window that starts at `as_of`.
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    Hrp,
    Nrp,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Hrp => "HRP",
            Strategy::Nrp => "NRP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyDecision {
    pub as_of: NaiveDate,
    pub predicted_spread: f64,
    pub choice: Strategy,
}

/// HRP when the predicted spread is ≥ 0 (including −0.0), NRP otherwise.
pub fn decide(predicted_spread: f64, as_of: NaiveDate) -> Result<StrategyDecision> {
    if !predicted_spread.is_finite() {
        return Err(Error::InvalidPrediction(predicted_spread));
    }
    let choice = if predicted_spread >= 0.0 { Strategy::Hrp } else { Strategy::Nrp };
    Ok(StrategyDecision {
        as_of,
        predicted_spread,
        choice,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub row_subsample: f64,
    pub col_subsample: f64,
    pub l2: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 5,
            row_subsample: 1.0,
            col_subsample: 1.0,
            l2: 1.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidHyperParams(what.to_string()));
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        for (name, v) in [("row_subsample", self.row_subsample), ("col_subsample", self.col_subsample)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(&format!("{name} must lie in (0, 1]"));
            }
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be finite and nonnegative");
        }
        Ok(())
    }
}

/// Inclusive bounds for each hyperparameter; the learning rate is searched
/// on a log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchBox {
    pub n_trees: [usize; 2],
    pub max_depth: [usize; 2],
    pub learning_rate: [f64; 2],
    pub min_leaf: [usize; 2],
    pub row_subsample: [f64; 2],
    pub col_subsample: [f64; 2],
    pub l2: [f64; 2],
}

impl Default for SearchBox {
    fn default() -> Self {
        Self {
            n_trees: [50, 500],
            max_depth: [2, 6],
            learning_rate: [0.01, 0.3],
            min_leaf: [2, 20],
            row_subsample: [0.5, 1.0],
            col_subsample: [0.5, 1.0],
            l2: [0.0, 10.0],
        }
    }
}

/// Number of searched coordinates.
pub const SEARCH_DIMS: usize = 7;

impl SearchBox {
    pub fn point(p: HyperParams) -> Self {
        Self {
            n_trees: [p.n_trees; 2],
            max_depth: [p.max_depth; 2],
            learning_rate: [p.learning_rate; 2],
            min_leaf: [p.min_leaf; 2],
            row_subsample: [p.row_subsample; 2],
            col_subsample: [p.col_subsample; 2],
            l2: [p.l2; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered_u = [self.n_trees, self.max_depth, self.min_leaf].iter().all(|[lo, hi]| lo <= hi);
        let ordered_f = [self.learning_rate, self.row_subsample, self.col_subsample, self.l2]
            .iter()
            .all(|[lo, hi]| lo <= hi);
        if !(ordered_u && ordered_f) {
            return Err(Error::InvalidHyperParams("search box bounds must satisfy lo ≤ hi".into()));
        }
        if self.n_trees[0] == 0 {
            return Err(Error::InvalidHyperParams("n_trees lower bound must be at least 1".into()));
        }
        self.decode(&[0.0; SEARCH_DIMS]).validate()?;
        self.decode(&[1.0; SEARCH_DIMS]).validate()
    }

    pub fn contains(&self, p: &HyperParams) -> bool {
        let within_u = |[lo, hi]: [usize; 2], v: usize| lo <= v && v <= hi;
        let within_f = |[lo, hi]: [f64; 2], v: f64| lo <= v && v <= hi;
        within_u(self.n_trees, p.n_trees)
            && within_u(self.max_depth, p.max_depth)
            && within_f(self.learning_rate, p.learning_rate)
            && within_u(self.min_leaf, p.min_leaf)
            && within_f(self.row_subsample, p.row_subsample)
            && within_f(self.col_subsample, p.col_subsample)
            && within_f(self.l2, p.l2)
    }

    /// Maps a point of the unit cube onto the box. Integer ranges are split
    /// into equal-width cells; the learning rate is interpolated in log space.
    pub fn decode(&self, u: &[f64; SEARCH_DIMS]) -> HyperParams {
        let int = |[lo, hi]: [usize; 2], u: f64| {
            let cells = (hi - lo + 1) as f64;
            (lo + (u.clamp(0.0, 1.0) * cells).floor() as usize).min(hi)
        };
        let lin = |[lo, hi]: [f64; 2], u: f64| lo + u.clamp(0.0, 1.0) * (hi - lo);
        let [lr_lo, lr_hi] = self.learning_rate;
        let learning_rate = if lr_lo == lr_hi {
            lr_lo
        } else {
            (lr_lo.ln() + u[2].clamp(0.0, 1.0) * (lr_hi.ln() - lr_lo.ln())).exp().clamp(lr_lo, lr_hi)
        };
        HyperParams {
            n_trees: int(self.n_trees, u[0]),
            max_depth: int(self.max_depth, u[1]),
            learning_rate,
            min_leaf: int(self.min_leaf, u[3]),
            row_subsample: lin(self.row_subsample, u[4]),
            col_subsample: lin(self.col_subsample, u[5]),
            l2: lin(self.l2, u[6]),
        }
    }

    /// A uniform draw from the box (in its search coordinates).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HyperParams {
        let mut u = [0.0; SEARCH_DIMS];
        for v in &mut u {
            *v = rng.random::<f64>();
        }
        self.decode(&u)
    }
}
