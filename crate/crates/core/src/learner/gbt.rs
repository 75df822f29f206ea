use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HyperParams, TrainingExample};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Below this many examples the model is not trusted for decisions.
pub const MIN_TRAINING_EXAMPLES: usize = 20;

/// A split sends `x <= threshold` to `left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: String,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Nodes in creation order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    /// Index of the leaf reached by a row.
    pub fn leaf_for(&self, value_of: impl Fn(&str) -> f64) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if value_of(feature) <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn eval(&self, value_of: impl Fn(&str) -> f64) -> f64 {
        match self.nodes[self.leaf_for(value_of)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_for stops at leaves"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub params: Option<HyperParams>,
    pub n_examples: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    feature_names: Vec<String>,
    base: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
    metadata: ModelMetadata,
}

impl TreeEnsemble {
    /// Checks that every split names a known feature and every child index
    /// points forward inside its tree.
    pub fn new(
        mut feature_names: Vec<String>,
        base: f64,
        learning_rate: f64,
        trees: Vec<RegressionTree>,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        feature_names.sort();
        feature_names.dedup();
        for tree in &trees {
            if tree.nodes.is_empty() {
                return Err(Error::InvalidHyperParams("tree without nodes".into()));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                if let Node::Split {
                    feature, left, right, ..
                } = node
                {
                    if feature_names.binary_search(feature).is_err() {
                        return Err(Error::FeatureMismatch(format!("split on unknown feature {feature}")));
                    }
                    if *left <= i || *right <= i || *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                        return Err(Error::InvalidHyperParams(format!("node {i} has invalid children")));
                    }
                }
            }
        }
        Ok(Self {
            feature_names,
            base,
            learning_rate,
            trees,
            metadata,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    /// Prediction from the first `n_trees` trees only.
    pub fn predict_truncated(&self, features: &FeatureVector, n_trees: usize) -> Result<f64> {
        if !self.feature_names.iter().map(String::as_str).eq(features.names()) {
            let missing: Vec<&str> = self
                .feature_names
                .iter()
                .map(String::as_str)
                .filter(|n| features.get(n).is_none())
                .collect();
            return Err(Error::FeatureMismatch(if missing.is_empty() {
                "input has features the model was not trained on".into()
            } else {
                format!("missing {}", missing.join(", "))
            }));
        }
        let lookup = |name: &str| features.get(name).expect("names checked above");
        let mut out = self.base;
        for tree in self.trees.iter().take(n_trees) {
            out += self.learning_rate * tree.eval(lookup);
        }
        Ok(out)
    }
}

pub fn predict(ensemble: &TreeEnsemble, features: &FeatureVector) -> Result<f64> {
    ensemble.predict_truncated(features, ensemble.trees.len())
}

/// Total split gain per feature, normalized to sum to 1. All zeros when the
/// ensemble never splits.
pub fn feature_importance(ensemble: &TreeEnsemble) -> BTreeMap<String, f64> {
    let mut gains: BTreeMap<String, f64> = ensemble.feature_names.iter().map(|n| (n.clone(), 0.0)).collect();
    for tree in &ensemble.trees {
        for node in &tree.nodes {
            if let Node::Split { feature, gain, .. } = node {
                *gains.get_mut(feature).expect("validated feature") += gain;
            }
        }
    }
    let total: f64 = gains.values().sum();
    if total > 0.0 {
        gains.values_mut().for_each(|g| *g /= total);
    } else {
        log::debug!("ensemble has no splits; importances are all zero");
    }
    gains
}

/// Column-major training matrix with per-feature row orders.
#[derive(Debug, Clone)]
pub(crate) struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub dates: Vec<NaiveDate>,
    sorted: Vec<Vec<u32>>,
}

impl Dataset {
    pub fn from_examples(data: &[TrainingExample]) -> Result<Self> {
        let first = data.first().ok_or(Error::InsufficientTrainingData {
            needed: 1,
            available: 0,
        })?;
        let names: Vec<String> = first.features.names().map(str::to_string).collect();
        let mut columns = vec![Vec::with_capacity(data.len()); names.len()];
        for ex in data {
            if !ex.features.same_names(&first.features) {
                return Err(Error::FeatureMismatch(format!("example dated {} has a different feature set", ex.as_of)));
            }
            if !ex.target.is_finite() {
                return Err(Error::InvalidPrediction(ex.target));
            }
            for (col, (_, v)) in columns.iter_mut().zip(ex.features.iter()) {
                col.push(v);
            }
        }
        Ok(Self::build(
            names,
            columns,
            data.iter().map(|e| e.target).collect(),
            data.iter().map(|e| e.as_of).collect(),
        ))
    }

    fn build(names: Vec<String>, columns: Vec<Vec<f64>>, targets: Vec<f64>, dates: Vec<NaiveDate>) -> Self {
        let sorted = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self {
            names,
            columns,
            targets,
            dates,
            sorted,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self::build(
            self.names.clone(),
            self.columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
            rows.iter().map(|&r| self.targets[r]).collect(),
            rows.iter().map(|&r| self.dates[r]).collect(),
        )
    }

    pub fn value(&self, row: usize, name: &str) -> f64 {
        let f = self.names.binary_search_by(|n| n.as_str().cmp(name)).expect("known feature");
        self.columns[f][row]
    }
}

pub fn train_gbt(data: &[TrainingExample], params: &HyperParams, seed: u64) -> Result<TreeEnsemble> {
    if data.len() < MIN_TRAINING_EXAMPLES {
        return Err(Error::InsufficientTrainingData {
            needed: MIN_TRAINING_EXAMPLES,
            available: data.len(),
        });
    }
    fit(&Dataset::from_examples(data)?, params, seed)
}

/// Boosting without the minimum-size guard, used on cross-validation folds.
pub(crate) fn fit(ds: &Dataset, params: &HyperParams, seed: u64) -> Result<TreeEnsemble> {
    params.validate()?;
    let n = ds.len();
    if n < 2 {
        return Err(Error::InsufficientTrainingData {
            needed: 2,
            available: n,
        });
    }
    let p = ds.names.len();
    let base = ds.targets.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base; n];
    let mut resid = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_rows = ((params.row_subsample * n as f64).round() as usize).clamp(2, n);
    let n_cols = ((params.col_subsample * p as f64).round() as usize).clamp(1, p.max(1));
    let mut in_sample = vec![false; n];
    let mut trees = Vec::with_capacity(params.n_trees);

    for _ in 0..params.n_trees {
        for i in 0..n {
            resid[i] = ds.targets[i] - fitted[i];
        }
        let rows: Vec<usize> = if n_rows == n {
            (0..n).collect()
        } else {
            let mut r = sample(&mut rng, n, n_rows).into_vec();
            r.sort_unstable();
            r
        };
        let cols: Vec<usize> = if n_cols == p {
            (0..p).collect()
        } else {
            let mut c = sample(&mut rng, p, n_cols).into_vec();
            c.sort_unstable();
            c
        };
        in_sample.iter_mut().for_each(|v| *v = false);
        rows.iter().for_each(|&r| in_sample[r] = true);
        let sorted: Vec<Vec<u32>> = cols
            .iter()
            .map(|&f| ds.sorted[f].iter().copied().filter(|&r| in_sample[r as usize]).collect())
            .collect();

        let mut grower = Grower {
            ds,
            resid: &resid,
            params,
            cols: &cols,
            nodes: Vec::new(),
            goes_left: vec![false; n],
        };
        grower.grow(sorted, 0);
        let tree = RegressionTree { nodes: grower.nodes };
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += params.learning_rate * tree.eval(|name| ds.value(i, name));
        }
        trees.push(tree);
    }

    let metadata = ModelMetadata {
        seed,
        params: Some(*params),
        n_examples: n,
        first_date: ds.dates.first().copied(),
        last_date: ds.dates.last().copied(),
    };
    TreeEnsemble::new(ds.names.clone(), base, params.learning_rate, trees, metadata)
}

struct Grower<'a> {
    ds: &'a Dataset,
    resid: &'a [f64],
    params: &'a HyperParams,
    cols: &'a [usize],
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

struct Candidate {
    slot: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    /// `sorted[k]` lists this node's rows ordered by feature `cols[k]`.
    fn grow(&mut self, sorted: Vec<Vec<u32>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let n = rows.len();
        let lambda = self.params.l2;
        let g: f64 = rows.iter().map(|&r| self.resid[r as usize]).sum();
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: g / (n as f64 + lambda),
        });
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf {
            return at;
        }
        let Some(best) = self.best_split(&sorted, g) else {
            return at;
        };

        let column = &self.ds.columns[self.cols[best.slot]];
        for &r in &sorted[best.slot] {
            self.goes_left[r as usize] = column[r as usize] <= best.threshold;
        }
        let (mut left, mut right) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for list in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&r| self.goes_left[r as usize]);
            left.push(l);
            right.push(r);
        }
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[at] = Node::Split {
            feature: self.ds.names[self.cols[best.slot]].clone(),
            threshold: best.threshold,
            gain: best.gain,
            left: l,
            right: r,
        };
        at
    }

    /// Highest positive gain; ties keep the earlier feature (names are
    /// sorted) and then the lower threshold.
    fn best_split(&self, sorted: &[Vec<u32>], g: f64) -> Option<Candidate> {
        let lambda = self.params.l2;
        let min_leaf = self.params.min_leaf;
        let n = sorted[0].len();
        let parent = g * g / (n as f64 + lambda);
        let mut best: Option<Candidate> = None;
        for (slot, list) in sorted.iter().enumerate() {
            let column = &self.ds.columns[self.cols[slot]];
            let mut gl = 0.0;
            for i in 0..n - 1 {
                let r = list[i] as usize;
                gl += self.resid[r];
                let nl = i + 1;
                if nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let (a, b) = (column[r], column[list[i + 1] as usize]);
                if a >= b {
                    continue;
                }
                let gr = g - gl;
                let gain = gl * gl / (nl as f64 + lambda) + gr * gr / ((n - nl) as f64 + lambda) - parent;
                if gain > 0.0 && best.as_ref().is_none_or(|c| gain > c.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Candidate { slot, threshold, gain });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Uniform};

    fn day(i: usize) -> NaiveDate {
        NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + chrono::Days::new(i as u64)
    }

    fn threshold_task(n: usize, seed: u64) -> Vec<TrainingExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                let f: f64 = u.sample(&mut rng);
                let features = FeatureVector::from_pairs([
                    ("f", f),
                    ("noise_a", u.sample(&mut rng)),
                    ("noise_b", u.sample(&mut rng)),
                    ("noise_c", u.sample(&mut rng)),
                ])
                .unwrap();
                TrainingExample {
                    as_of: day(i),
                    features,
                    target: if f > 0.5 { 1.0 } else { 0.0 },
                }
            })
            .collect()
    }

    fn r_squared(model: &TreeEnsemble, data: &[TrainingExample]) -> f64 {
        let mean = data.iter().map(|e| e.target).sum::<f64>() / data.len() as f64;
        let (mut ss_res, mut ss_tot) = (0.0, 0.0);
        for e in data {
            ss_res += (e.target - predict(model, &e.features).unwrap()).powi(2);
            ss_tot += (e.target - mean).powi(2);
        }
        1.0 - ss_res / ss_tot
    }

    fn rmse(model: &TreeEnsemble, data: &[TrainingExample], trees: usize) -> f64 {
        let sse: f64 = data
            .iter()
            .map(|e| (e.target - model.predict_truncated(&e.features, trees).unwrap()).powi(2))
            .sum();
        (sse / data.len() as f64).sqrt()
    }

    #[test]
    fn recovers_single_threshold() {
        let data = threshold_task(200, 1);
        let params = HyperParams {
            max_depth: 1,
            ..HyperParams::default()
        };
        let model = train_gbt(&data, &params, 7).unwrap();
        assert!(r_squared(&model, &data) >= 0.99);
        let imp = feature_importance(&model);
        assert!(imp["f"] >= 0.9);
        assert!((imp.values().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_target_gives_constant_prediction() {
        let mut data = threshold_task(40, 2);
        data.iter_mut().for_each(|e| e.target = 0.37);
        let model = train_gbt(&data, &HyperParams::default(), 1).unwrap();
        for e in &data {
            assert!((predict(&model, &e.features).unwrap() - 0.37).abs() < 1e-12);
        }
        assert!(feature_importance(&model).values().all(|v| *v == 0.0));
    }

    #[test]
    fn training_error_never_increases() {
        let mut data = threshold_task(150, 3);
        for (i, e) in data.iter_mut().enumerate() {
            e.target += e.features.get("noise_a").unwrap().sin() + (i % 7) as f64 * 0.1;
        }
        let params = HyperParams {
            n_trees: 60,
            max_depth: 3,
            learning_rate: 0.3,
            min_leaf: 2,
            l2: 0.5,
            ..HyperParams::default()
        };
        let model = train_gbt(&data, &params, 4).unwrap();
        let path: Vec<f64> = (0..=60).map(|k| rmse(&model, &data, k)).collect();
        assert!(path.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{path:?}");
    }

    #[test]
    fn too_few_examples() {
        assert!(matches!(
            train_gbt(&threshold_task(19, 1), &HyperParams::default(), 0),
            Err(Error::InsufficientTrainingData { needed: 20, available: 19 })
        ));
    }

    #[test]
    fn hand_built_tree() {
        let tree = RegressionTree {
            nodes: vec![
                Node::Split {
                    feature: "x".into(),
                    threshold: 0.5,
                    gain: 1.0,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: -1.0 },
                Node::Leaf { value: 3.0 },
            ],
        };
        let model = TreeEnsemble::new(vec!["x".into(), "y".into()], 0.5, 0.1, vec![tree], ModelMetadata::default())
            .unwrap();
        let at = |x: f64| predict(&model, &FeatureVector::from_pairs([("y", 9.0), ("x", x)]).unwrap()).unwrap();
        assert!((at(0.2) - 0.4).abs() < 1e-15);
        assert!((at(0.5) - 0.4).abs() < 1e-15);
        assert!((at(0.7) - 0.8).abs() < 1e-15);
        assert_eq!(feature_importance(&model)["x"], 1.0);
        assert_eq!(feature_importance(&model)["y"], 0.0);
        let empty = TreeEnsemble::new(vec!["x".into()], 0.25, 0.1, vec![], ModelMetadata::default()).unwrap();
        assert_eq!(predict(&empty, &FeatureVector::from_pairs([("x", 1.0)]).unwrap()).unwrap(), 0.25);
        assert!(matches!(
            predict(&model, &FeatureVector::from_pairs([("x", 1.0)]).unwrap()),
            Err(Error::FeatureMismatch(_))
        ));
    }

    #[test]
    fn rejects_splits_on_unknown_features() {
        let tree = RegressionTree {
            nodes: vec![
                Node::Split {
                    feature: "z".into(),
                    threshold: 0.0,
                    gain: 1.0,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: 0.0 },
                Node::Leaf { value: 0.0 },
            ],
        };
        assert!(TreeEnsemble::new(vec!["x".into()], 0.0, 0.1, vec![tree], ModelMetadata::default()).is_err());
    }

    #[test]
    fn deterministic_and_serializable() {
        let data = threshold_task(80, 5);
        let params = HyperParams {
            row_subsample: 0.7,
            col_subsample: 0.5,
            ..HyperParams::default()
        };
        let a = train_gbt(&data, &params, 11).unwrap();
        let b = train_gbt(&data, &params, 11).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        let back: TreeEnsemble = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
        assert_eq!(a.metadata().first_date, Some(day(0)));
        assert_eq!(a.metadata().n_examples, 80);
    }

    #[test]
    fn monotone_transform_keeps_partitions() {
        let data = threshold_task(120, 6);
        let mut warped = data.clone();
        for e in &mut warped {
            let pairs: Vec<(String, f64)> = e
                .features
                .iter()
                .map(|(k, v)| (k.to_string(), if k == "noise_b" { (3.0 * v).exp() } else { v }))
                .collect();
            e.features = FeatureVector::from_pairs(pairs).unwrap();
        }
        let params = HyperParams {
            n_trees: 20,
            max_depth: 3,
            min_leaf: 3,
            ..HyperParams::default()
        };
        let a = train_gbt(&data, &params, 2).unwrap();
        let b = train_gbt(&warped, &params, 2).unwrap();
        for (ta, tb) in a.trees().iter().zip(b.trees()) {
            for (ea, eb) in data.iter().zip(&warped) {
                let la = ta.leaf_for(|n| ea.features.get(n).unwrap());
                let lb = tb.leaf_for(|n| eb.features.get(n).unwrap());
                assert_eq!(la, lb);
            }
        }
    }

    #[test]
    fn insertion_order_is_irrelevant() {
        let data = threshold_task(40, 8);
        let model = train_gbt(&data, &HyperParams::default(), 0).unwrap();
        let e = &data[3].features;
        let reversed: Vec<(String, f64)> = e.iter().map(|(k, v)| (k.to_string(), v)).collect::<Vec<_>>().into_iter().rev().collect();
        let again = FeatureVector::from_pairs(reversed).unwrap();
        assert_eq!(predict(&model, e).unwrap(), predict(&model, &again).unwrap());
    }
}
