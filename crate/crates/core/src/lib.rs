//! Covariance forecasting, risk-parity allocation and a learned switch
//! between hierarchical and naïve risk parity, evaluated walk-forward.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocators;
pub mod backtest;
pub mod covariance;
pub mod error;
pub mod features;
pub mod learner;
pub mod linalg;
pub mod market_data;
pub mod optim;

pub use allocators::{ClusterTree, DistanceMatrix, HrpSettings, Linkage, WeightVector};
pub use backtest::{
    BacktestConfig, BacktestReport, CostModel, DecisionPolicy, LearnerSettings, MarketSpec, SignificanceSummary,
    SignificanceTest, WindowConfig,
};
pub use covariance::{CovarianceEstimate, CovarianceSettings, DccParams};
pub use error::{Error, Result};
pub use features::FeatureVector;
pub use learner::{HyperParams, SearchBox, Strategy, StrategyDecision, TrainingExample, TreeEnsemble};
pub use market_data::{PricePanel, ReturnPanel, UniverseSpec};
