//! Tree-structured Parzen estimator over the hyperparameter box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::gbt::{fit, Dataset};
use super::{HyperParams, SearchBox, TrainingExample, SEARCH_DIMS};
use crate::error::{Error, Result};

/// Leading (chronological) share of examples used for selection.
pub const TRAIN_FRACTION: f64 = 0.7;
pub const CV_FOLDS: usize = 5;
const GAMMA: f64 = 0.25;
const STARTUP_TRIALS: usize = 10;
const CANDIDATES: usize = 24;
const MIN_BANDWIDTH: f64 = 0.05;
const MAX_BANDWIDTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: HyperParams,
    pub cv_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimization {
    pub params: HyperParams,
    pub cv_rmse: f64,
    /// RMSE on the chronological tail after refitting on the selection part.
    /// Reported only; never used to choose.
    pub holdout_rmse: Option<f64>,
    pub trials: Vec<Trial>,
}

fn fold_bounds(n: usize) -> Vec<(usize, usize)> {
    (0..CV_FOLDS).map(|k| (k * n / CV_FOLDS, (k + 1) * n / CV_FOLDS)).collect()
}

fn rmse_on(model: &super::TreeEnsemble, ds: &Dataset, rows: std::ops::Range<usize>) -> f64 {
    let m = rows.len() as f64;
    let sse: f64 = rows
        .map(|i| {
            let pred = model.base()
                + model
                    .trees()
                    .iter()
                    .map(|t| model.learning_rate() * t.eval(|name| ds.value(i, name)))
                    .sum::<f64>();
            (ds.targets[i] - pred).powi(2)
        })
        .sum();
    (sse / m).sqrt()
}

fn cv_on(ds: &Dataset, params: &HyperParams, seed: u64) -> Result<f64> {
    let n = ds.len();
    let folds = fold_bounds(n);
    let scores: Vec<Result<f64>> = folds
        .par_iter()
        .map(|&(lo, hi)| {
            let train: Vec<usize> = (0..lo).chain(hi..n).collect();
            let model = fit(&ds.subset(&train), params, seed)?;
            let held = ds.subset(&(lo..hi).collect::<Vec<_>>());
            Ok(rmse_on(&model, &held, 0..held.len()))
        })
        .collect();
    let mut total = 0.0;
    for s in scores {
        total += s?;
    }
    Ok(total / CV_FOLDS as f64)
}

fn selection_split(n: usize) -> usize {
    ((TRAIN_FRACTION * n as f64).floor() as usize).max(2 * CV_FOLDS).min(n)
}

/// Mean RMSE over contiguous folds of the leading 70% of `data`.
pub fn cv_rmse(data: &[TrainingExample], params: &HyperParams, seed: u64) -> Result<f64> {
    let ds = Dataset::from_examples(data)?;
    check_size(ds.len())?;
    let train = ds.subset(&(0..selection_split(ds.len())).collect::<Vec<_>>());
    cv_on(&train, params, seed)
}

fn check_size(n: usize) -> Result<()> {
    if n < 2 * CV_FOLDS {
        return Err(Error::InsufficientTrainingData {
            needed: 2 * CV_FOLDS,
            available: n,
        });
    }
    Ok(())
}

/// One-dimensional Parzen estimator on [0, 1]: a uniform prior component
/// plus a truncated Gaussian at each observation.
struct Parzen {
    centers: Vec<f64>,
    bandwidth: f64,
}

impl Parzen {
    fn new(centers: Vec<f64>) -> Self {
        let n = centers.len() as f64;
        let m = centers.iter().sum::<f64>() / n;
        let sd = (centers.iter().map(|c| (c - m).powi(2)).sum::<f64>() / n).sqrt();
        let bandwidth = (1.06 * sd * n.powf(-0.2)).clamp(MIN_BANDWIDTH, MAX_BANDWIDTH);
        Self { centers, bandwidth }
    }

    fn mass(&self, c: f64) -> f64 {
        let h = self.bandwidth * std::f64::consts::SQRT_2;
        0.5 * (erf((1.0 - c) / h) - erf(-c / h))
    }

    fn density(&self, u: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        let kernels: f64 = self
            .centers
            .iter()
            .map(|&c| norm * (-0.5 * ((u - c) / h).powi(2)).exp() / self.mass(c))
            .sum();
        (1.0 + kernels) / (self.centers.len() as f64 + 1.0)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let pick = rng.random_range(0..=self.centers.len());
        if pick == self.centers.len() {
            return rng.random::<f64>();
        }
        let c = self.centers[pick];
        for _ in 0..64 {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            let u = c + self.bandwidth * z;
            if (0.0..=1.0).contains(&u) {
                return u;
            }
        }
        c
    }
}

fn propose(history: &[([f64; SEARCH_DIMS], f64)], rng: &mut ChaCha8Rng) -> [f64; SEARCH_DIMS] {
    let mut ranked: Vec<usize> = (0..history.len()).collect();
    ranked.sort_by(|&a, &b| history[a].1.total_cmp(&history[b].1).then(a.cmp(&b)));
    let n_good = ((GAMMA * history.len() as f64).ceil() as usize).clamp(1, history.len() - 1);
    let (good, bad) = ranked.split_at(n_good);
    let fit_dims = |idx: &[usize]| -> Vec<Parzen> {
        (0..SEARCH_DIMS)
            .map(|d| Parzen::new(idx.iter().map(|&i| history[i].0[d]).collect()))
            .collect()
    };
    let (l, g) = (fit_dims(good), fit_dims(bad));
    let mut best = ([0.0; SEARCH_DIMS], f64::NEG_INFINITY);
    for _ in 0..CANDIDATES {
        let mut u = [0.0; SEARCH_DIMS];
        let mut score = 0.0;
        for d in 0..SEARCH_DIMS {
            u[d] = l[d].sample(rng);
            score += l[d].density(u[d]).ln() - g[d].density(u[d]).ln();
        }
        if score > best.1 {
            best = (u, score);
        }
    }
    best.0
}

/// Sequential model-based search for the hyperparameters minimizing
/// cross-validated RMSE on the leading 70% of `data` (kept in the given,
/// chronological, order). The first trials are uniform draws; later ones
/// maximize the ratio of the good-trial and bad-trial Parzen densities.
pub fn bayes_optimize(data: &[TrainingExample], budget: usize, search: &SearchBox, seed: u64) -> Result<Optimization> {
    if budget < 1 {
        return Err(Error::InvalidBudget(budget));
    }
    search.validate()?;
    let ds = Dataset::from_examples(data)?;
    check_size(ds.len())?;
    let split = selection_split(ds.len());
    let train = ds.subset(&(0..split).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history: Vec<([f64; SEARCH_DIMS], f64)> = Vec::with_capacity(budget);
    let mut trials = Vec::with_capacity(budget);
    for k in 0..budget {
        let u = if k < STARTUP_TRIALS.min(budget) || history.len() < 2 {
            let mut u = [0.0; SEARCH_DIMS];
            u.iter_mut().for_each(|v| *v = rng.random::<f64>());
            u
        } else {
            propose(&history, &mut rng)
        };
        let params = search.decode(&u);
        let loss = match cv_on(&train, &params, seed) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(_) => f64::INFINITY,
        };
        history.push((u, loss));
        trials.push(Trial { params, cv_rmse: loss });
    }
    let best = trials
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cv_rmse.total_cmp(&b.1.cv_rmse).then(a.0.cmp(&b.0)))
        .map(|(_, t)| t.clone())
        .expect("budget ≥ 1");
    let holdout_rmse = if split < ds.len() {
        let model = fit(&train, &best.params, seed)?;
        Some(rmse_on(&model, &ds, split..ds.len()))
    } else {
        None
    };
    Ok(Optimization {
        params: best.params,
        cv_rmse: best.cv_rmse,
        holdout_rmse,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use chrono::NaiveDate;
    use rand_distr::{Distribution, Normal, Uniform};

    fn task(n: usize, seed: u64) -> Vec<TrainingExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let eps = Normal::new(0.0, 0.2).unwrap();
        let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..5).map(|_| u.sample(&mut rng)).collect();
                let target = (2.0 * x[0]).sin() + if x[1] > 0.0 { 0.5 } else { -0.5 } + eps.sample(&mut rng);
                TrainingExample {
                    as_of: start + chrono::Days::new(i as u64),
                    features: FeatureVector::from_pairs((0..5).map(|j| (format!("x{j}"), x[j]))).unwrap(),
                    target,
                }
            })
            .collect()
    }

    #[test]
    fn collapsed_box_returns_the_point() {
        let data = task(60, 1);
        let p = HyperParams {
            n_trees: 20,
            ..HyperParams::default()
        };
        let out = bayes_optimize(&data, 3, &SearchBox::point(p), 0).unwrap();
        assert_eq!(out.params, p);
        assert_eq!(out.trials.len(), 3);
        assert!(out.holdout_rmse.unwrap().is_finite());
    }

    #[test]
    fn deterministic_given_seed() {
        let data = task(60, 2);
        let search = SearchBox {
            n_trees: [10, 60],
            ..SearchBox::default()
        };
        let a = bayes_optimize(&data, 14, &search, 9).unwrap();
        let b = bayes_optimize(&data, 14, &search, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.trials.iter().all(|t| search.contains(&t.params)));
    }

    #[test]
    fn zero_budget_rejected() {
        assert_eq!(
            bayes_optimize(&task(30, 1), 0, &SearchBox::default(), 0),
            Err(Error::InvalidBudget(0))
        );
    }

    #[test]
    fn holdout_is_not_used_for_selection() {
        let mut data = task(60, 3);
        let before = bayes_optimize(&data, 6, &SearchBox::point(HyperParams::default()), 1).unwrap();
        for e in data.iter_mut().skip(selection_split(60)) {
            e.target += 100.0;
        }
        let after = bayes_optimize(&data, 6, &SearchBox::point(HyperParams::default()), 1).unwrap();
        assert_eq!(before.cv_rmse, after.cv_rmse);
        assert!(after.holdout_rmse > before.holdout_rmse);
    }

    #[test]
    fn parzen_density_integrates_to_one() {
        let p = Parzen::new(vec![0.02, 0.4, 0.41, 0.97]);
        let m = 20_000;
        let total: f64 = (0..m).map(|i| p.density((i as f64 + 0.5) / m as f64)).sum::<f64>() / m as f64;
        assert!((total - 1.0).abs() < 1e-4);
    }

    #[test]
    fn folds_cover_training_part() {
        let b = fold_bounds(23);
        assert_eq!(b.first().unwrap().0, 0);
        assert_eq!(b.last().unwrap().1, 23);
        assert!(b.windows(2).all(|w| w[0].1 == w[1].0));
    }
}
