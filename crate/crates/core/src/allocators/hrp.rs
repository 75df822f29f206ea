//! Hierarchical risk parity: correlation distances, agglomerative
//! clustering, quasi-diagonal ordering and recursive bisection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_variances, WeightVector};
use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};

/// Correlations may stray outside [-1, 1] by this much before being rejected.
const CORRELATION_SLACK: f64 = 1e-8;

/// d = √(½(1 − ρ)), elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(DMatrix<f64>);

impl DistanceMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }
}

pub fn correlation_to_distance(correlation: &DMatrix<f64>) -> Result<DistanceMatrix> {
    if !correlation.is_square() {
        return Err(Error::InvalidCorrelation("matrix is not square".into()));
    }
    let n = correlation.nrows();
    for i in 0..n {
        for j in 0..n {
            let rho = correlation[(i, j)];
            if !rho.is_finite() || rho.abs() > 1.0 + CORRELATION_SLACK {
                return Err(Error::InvalidCorrelation(format!("entry ({i}, {j}) = {rho}")));
            }
        }
    }
    Ok(DistanceMatrix(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let rho = correlation[(i, j)].clamp(-1.0, 1.0);
            (0.5 * (1.0 - rho)).max(0.0).sqrt()
        }
    })))
}

/// Euclidean distance between columns of `d`: d̃ᵢⱼ = √(Σₙ (dₙᵢ − dₙⱼ)²).
pub fn augmented_distance(d: &DistanceMatrix) -> DMatrix<f64> {
    let m = &d.0;
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m.column(i) - m.column(j)).norm();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Single,
    Complete,
    Average,
}

/// Where recursive bisection splits a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bisection {
    /// Contiguous halves of the quasi-diagonal order, left half ⌈len/2⌉.
    #[default]
    Halving,
    /// The two children of each tree node.
    TreeSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct HrpSettings {
    pub linkage: Linkage,
    pub bisection: Bisection,
}

/// One agglomeration step. Nodes `0..n` are leaves; merge `k` creates node `n + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    n_leaves: usize,
    merges: Vec<Merge>,
}

impl ClusterTree {
    /// Validates a hand-built linkage: every merge joins two existing,
    /// not-yet-merged nodes, sizes add up and heights never decrease.
    pub fn new(n_leaves: usize, merges: Vec<Merge>) -> Result<Self> {
        if n_leaves == 0 || merges.len() != n_leaves - 1 {
            return Err(Error::InvalidSpec(format!(
                "{n_leaves} leaves need {} merges, got {}",
                n_leaves.saturating_sub(1),
                merges.len()
            )));
        }
        let mut used = vec![false; 2 * n_leaves - 1];
        let mut sizes = vec![1usize; 2 * n_leaves - 1];
        let mut last_height = f64::NEG_INFINITY;
        for (k, m) in merges.iter().enumerate() {
            let node = n_leaves + k;
            for child in [m.left, m.right] {
                if child >= node || used[child] {
                    return Err(Error::InvalidSpec(format!("merge {k} reuses or forward-references node {child}")));
                }
                used[child] = true;
            }
            if m.left == m.right {
                return Err(Error::InvalidSpec(format!("merge {k} joins a node with itself")));
            }
            sizes[node] = sizes[m.left] + sizes[m.right];
            if sizes[node] != m.size {
                return Err(Error::InvalidSpec(format!("merge {k} size {} should be {}", m.size, sizes[node])));
            }
            if !(m.height >= last_height) {
                return Err(Error::InvalidSpec(format!("merge {k} height decreases")));
            }
            last_height = m.height;
        }
        Ok(Self { n_leaves, merges })
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn root(&self) -> usize {
        2 * self.n_leaves - 2
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        if node < self.n_leaves {
            None
        } else {
            let m = &self.merges[node - self.n_leaves];
            Some((m.left, m.right))
        }
    }

    pub fn height(&self, node: usize) -> f64 {
        if node < self.n_leaves {
            0.0
        } else {
            self.merges[node - self.n_leaves].height
        }
    }

    /// Leaves under `node`, left subtree first.
    pub fn members(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            match self.children(x) {
                None => out.push(x),
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out
    }

    /// Matrix of merge heights at which each pair of leaves first shares a cluster.
    pub fn cophenetic_matrix(&self) -> DMatrix<f64> {
        let n = self.n_leaves;
        let mut out = DMatrix::zeros(n, n);
        for m in &self.merges {
            let left = self.members(m.left);
            let right = self.members(m.right);
            for &i in &left {
                for &j in &right {
                    out[(i, j)] = m.height;
                    out[(j, i)] = m.height;
                }
            }
        }
        out
    }

    /// Flat clustering into `k` groups, obtained by undoing the last `k − 1`
    /// merges. Each group lists its leaves in tree order.
    pub fn cut(&self, k: usize) -> Vec<Vec<usize>> {
        let k = k.clamp(1, self.n_leaves);
        let mut roots = vec![self.root()];
        // undo merges from the top; the highest-numbered node is always the last merge
        while roots.len() < k {
            let (pos, _) = roots
                .iter()
                .enumerate()
                .filter(|(_, &r)| r >= self.n_leaves)
                .max_by_key(|(_, &r)| r)
                .expect("an internal node remains while fewer than n clusters");
            let node = roots.remove(pos);
            let (l, r) = self.children(node).expect("internal node");
            roots.insert(pos, r);
            roots.insert(pos, l);
        }
        roots.into_iter().map(|r| self.members(r)).collect()
    }
}

/// Single-linkage agglomerative clustering on the augmented distances.
pub fn tree_cluster(d_aug: &DMatrix<f64>) -> ClusterTree {
    tree_cluster_with(d_aug, Linkage::Single)
}

/// Agglomerative clustering via Lance–Williams updates.
///
/// The closest pair of active clusters is merged at each step; exact ties go
/// to the lexicographically smallest pair of node ids. Each merge is oriented
/// so that the larger child comes first, then the tighter one (lower merge
/// height), then the one whose members sit closer to the rest of the universe
/// on average. The orientation depends only on distances, not on labels, so
/// permuting the input assets permutes the resulting leaf order.
pub fn tree_cluster_with(d_aug: &DMatrix<f64>, linkage: Linkage) -> ClusterTree {
    let n = d_aug.nrows();
    assert!(n >= 1, "cannot cluster an empty universe");
    let total = 2 * n - 1;
    let mut dist = DMatrix::from_element(total, total, f64::INFINITY);
    for i in 0..n {
        for j in 0..n {
            dist[(i, j)] = d_aug[(i, j)];
        }
    }
    let row_mean: Vec<f64> = (0..n).map(|i| d_aug.row(i).sum() / n as f64).collect();
    let mut size = vec![1usize; total];
    let mut height = vec![0.0f64; total];
    let mut spread = vec![0.0f64; total];
    let mut min_leaf: Vec<usize> = (0..total).collect();
    spread[..n].copy_from_slice(&row_mean);

    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let v = dist[(i, j)];
                if v < best.2 || best.0 == usize::MAX {
                    best = (i, j, v);
                }
            }
        }
        let (i, j, h) = best;
        let node = n + k;

        let key = |c: usize| (std::cmp::Reverse(size[c]), height[c], spread[c], min_leaf[c]);
        let (ki, kj) = (key(i), key(j));
        let i_first = match ki.0.cmp(&kj.0) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => {
                match ki.1.total_cmp(&kj.1).then(ki.2.total_cmp(&kj.2)) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => ki.3 < kj.3,
                }
            }
        };
        let (left, right) = if i_first { (i, j) } else { (j, i) };

        size[node] = size[i] + size[j];
        height[node] = h;
        spread[node] = (spread[i] * size[i] as f64 + spread[j] * size[j] as f64) / size[node] as f64;
        min_leaf[node] = min_leaf[i].min(min_leaf[j]);
        merges.push(Merge {
            left,
            right,
            height: h,
            size: size[node],
        });

        active.retain(|&x| x != i && x != j);
        for &m in &active {
            let (di, dj) = (dist[(i, m)], dist[(j, m)]);
            let v = match linkage {
                Linkage::Single => di.min(dj),
                Linkage::Complete => di.max(dj),
                Linkage::Average => {
                    (di * size[i] as f64 + dj * size[j] as f64) / (size[i] + size[j]) as f64
                }
            };
            dist[(node, m)] = v;
            dist[(m, node)] = v;
        }
        active.push(node);
    }
    ClusterTree {
        n_leaves: n,
        merges,
    }
}

/// Leaf order obtained by expanding the tree from the root, left child first.
pub fn quasi_diagonalize(tree: &ClusterTree) -> Vec<usize> {
    tree.members(tree.root())
}

/// w'Σw for the inverse-variance portfolio over `members`.
pub fn cluster_variance(covariance: &DMatrix<f64>, members: &[usize]) -> f64 {
    let inv: Vec<f64> = members.iter().map(|&i| 1.0 / covariance[(i, i)]).collect();
    let total: f64 = inv.iter().sum();
    let w: Vec<f64> = inv.iter().map(|x| x / total).collect();
    let mut v = 0.0;
    for (a, &i) in members.iter().enumerate() {
        for (b, &j) in members.iter().enumerate() {
            v += w[a] * covariance[(i, j)] * w[b];
        }
    }
    v
}

fn split_factor(covariance: &DMatrix<f64>, left: &[usize], right: &[usize]) -> f64 {
    let vl = cluster_variance(covariance, left);
    let vr = cluster_variance(covariance, right);
    1.0 - vl / (vl + vr)
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::InvalidSpec(format!("order has {} entries for {n} assets", order.len())));
    }
    for &i in order {
        if i >= n || seen[i] {
            return Err(Error::InvalidSpec(format!("order {order:?} is not a permutation")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Top-down inverse-variance allocation over contiguous halves of `order`.
pub fn recursive_bisection(estimate: &CovarianceEstimate, order: &[usize]) -> Result<WeightVector> {
    let n = estimate.n_assets();
    check_permutation(order, n)?;
    check_variances(&estimate.variances)?;
    let mut weights = vec![0.0; n];

    fn recurse(cov: &DMatrix<f64>, segment: &[usize], scale: f64, weights: &mut [f64]) {
        if segment.len() == 1 {
            weights[segment[0]] = scale;
            return;
        }
        let (left, right) = segment.split_at(segment.len().div_ceil(2));
        let alpha = split_factor(cov, left, right);
        recurse(cov, left, scale * alpha, weights);
        recurse(cov, right, scale * (1.0 - alpha), weights);
    }
    recurse(&estimate.covariance, order, 1.0, &mut weights);
    WeightVector::new(estimate.assets.clone(), weights)
}

/// Inverse-variance bisection that splits each cluster into its two tree children.
pub fn tree_bisection(estimate: &CovarianceEstimate, tree: &ClusterTree) -> Result<WeightVector> {
    let n = estimate.n_assets();
    if tree.n_leaves() != n {
        return Err(Error::DimensionMismatch(format!("tree has {} leaves for {n} assets", tree.n_leaves())));
    }
    check_variances(&estimate.variances)?;
    let mut weights = vec![0.0; n];
    let mut stack = vec![(tree.root(), 1.0)];
    while let Some((node, scale)) = stack.pop() {
        match tree.children(node) {
            None => weights[node] = scale,
            Some((l, r)) => {
                let alpha = split_factor(&estimate.covariance, &tree.members(l), &tree.members(r));
                stack.push((l, scale * alpha));
                stack.push((r, scale * (1.0 - alpha)));
            }
        }
    }
    WeightVector::new(estimate.assets.clone(), weights)
}

/// Intermediate products of an HRP allocation.
#[derive(Debug, Clone)]
pub struct HrpPortfolio {
    pub weights: WeightVector,
    pub distance: DistanceMatrix,
    pub augmented: DMatrix<f64>,
    pub tree: ClusterTree,
    pub order: Vec<usize>,
}

pub fn hrp_pipeline(estimate: &CovarianceEstimate, settings: &HrpSettings) -> Result<HrpPortfolio> {
    check_variances(&estimate.variances)?;
    let distance = correlation_to_distance(&estimate.correlation)?;
    let augmented = augmented_distance(&distance);
    let tree = tree_cluster_with(&augmented, settings.linkage);
    let order = quasi_diagonalize(&tree);
    let weights = match settings.bisection {
        Bisection::Halving => recursive_bisection(estimate, &order)?,
        Bisection::TreeSplit => tree_bisection(estimate, &tree)?,
    };
    Ok(HrpPortfolio {
        weights,
        distance,
        augmented,
        tree,
        order,
    })
}

pub fn hrp_weights(estimate: &CovarianceEstimate) -> Result<WeightVector> {
    hrp_weights_with(estimate, &HrpSettings::default())
}

pub fn hrp_weights_with(estimate: &CovarianceEstimate, settings: &HrpSettings) -> Result<WeightVector> {
    Ok(hrp_pipeline(estimate, settings)?.weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocators::nrp_weights;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn estimate(cov: DMatrix<f64>) -> CovarianceEstimate {
        let n = cov.nrows();
        CovarianceEstimate::from_covariance(NaiveDate::MIN, (0..n).map(|i| format!("A{i}")).collect(), cov).unwrap()
    }

    fn random_cov(n: usize, seed: &[f64]) -> DMatrix<f64> {
        // seed supplies n*(n+1) values in [-1, 1]
        let a = DMatrix::from_fn(n, n + 1, |i, j| seed[i * (n + 1) + j]);
        let mut cov = &a * a.transpose() * 0.01;
        for i in 0..n {
            cov[(i, i)] += 1e-3 * (1.0 + seed[i].abs());
        }
        cov
    }

    fn leaf_sets(tree: &ClusterTree) -> Vec<Vec<usize>> {
        tree.merges()
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let mut m = tree.members(tree.n_leaves() + k);
                m.sort();
                m
            })
            .collect()
    }

    #[test]
    fn distance_examples() {
        let corr = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, -1.0, 1.0, 1.0, 0.0, -1.0, 0.0, 1.0]);
        let d = correlation_to_distance(&corr).unwrap();
        assert_eq!(d.matrix()[(0, 1)], 0.0);
        assert_eq!(d.matrix()[(0, 2)], 1.0);
        assert!((d.matrix()[(1, 2)] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distance_tolerates_rounding_but_not_garbage() {
        let slightly = DMatrix::from_row_slice(2, 2, &[1.0, 1.0 + 1e-12, 1.0 + 1e-12, 1.0]);
        assert_eq!(correlation_to_distance(&slightly).unwrap().matrix()[(0, 1)], 0.0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.1, 1.1, 1.0]);
        assert!(correlation_to_distance(&bad).is_err());
    }

    #[test]
    fn augmented_two_assets() {
        let x = 0.37;
        let d = DistanceMatrix(DMatrix::from_row_slice(2, 2, &[0.0, x, x, 0.0]));
        let aug = augmented_distance(&d);
        assert!((aug[(0, 1)] - x * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(aug[(0, 0)], 0.0);
    }

    #[test]
    fn augmented_identical_columns_are_zero_apart() {
        let corr = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.2, 1.0, 1.0, 0.2, 0.2, 0.2, 1.0]);
        let aug = augmented_distance(&correlation_to_distance(&corr).unwrap());
        assert_eq!(aug[(0, 1)], 0.0);
    }

    #[test]
    fn two_leaf_tree() {
        let aug = DMatrix::from_row_slice(2, 2, &[0.0, 0.8, 0.8, 0.0]);
        let tree = tree_cluster(&aug);
        assert_eq!(tree.merges().len(), 1);
        assert_eq!(tree.merges()[0].height, 0.8);
        assert_eq!(tree.merges()[0].size, 2);
    }

    #[test]
    fn closest_pair_merges_first() {
        // A=0, B=1 close together, C=2 far from both
        let aug = DMatrix::from_row_slice(3, 3, &[0.0, 0.1, 1.0, 0.1, 0.0, 1.05, 1.0, 1.05, 0.0]);
        let tree = tree_cluster(&aug);
        assert_eq!(leaf_sets(&tree)[0], vec![0, 1]);
        assert_eq!(tree.merges()[1].height, 1.0);
    }

    #[test]
    fn block_structure_merges_within_pairs_first() {
        // tight pairs (0,2) and (1,3)
        let aug = DMatrix::from_row_slice(
            4,
            4,
            &[0.0, 0.9, 0.1, 0.95, 0.9, 0.0, 0.92, 0.12, 0.1, 0.92, 0.0, 0.97, 0.95, 0.12, 0.97, 0.0],
        );
        let tree = tree_cluster(&aug);
        let sets = leaf_sets(&tree);
        assert_eq!(sets[0], vec![0, 2]);
        assert_eq!(sets[1], vec![1, 3]);
        let order = quasi_diagonalize(&tree);
        let pos = |x: usize| order.iter().position(|&o| o == x).unwrap();
        assert_eq!(pos(0).abs_diff(pos(2)), 1);
        assert_eq!(pos(1).abs_diff(pos(3)), 1);
    }

    #[test]
    fn quasi_diag_of_hand_built_trees() {
        let m = |left, right, height, size| Merge {
            left,
            right,
            height,
            size,
        };
        let chain = ClusterTree::new(4, vec![m(0, 1, 0.1, 2), m(4, 2, 0.2, 3), m(5, 3, 0.3, 4)]).unwrap();
        assert_eq!(quasi_diagonalize(&chain), vec![0, 1, 2, 3]);

        let pairs = ClusterTree::new(4, vec![m(0, 2, 0.1, 2), m(1, 3, 0.2, 2), m(4, 5, 0.5, 4)]).unwrap();
        assert_eq!(quasi_diagonalize(&pairs), vec![0, 2, 1, 3]);

        assert!(ClusterTree::new(3, vec![m(0, 1, 0.5, 2), m(3, 1, 0.6, 3)]).is_err());
        assert!(ClusterTree::new(3, vec![m(0, 1, 0.5, 2), m(3, 2, 0.4, 3)]).is_err());
    }

    #[test]
    fn cut_and_cophenetic() {
        let m = |left, right, height, size| Merge {
            left,
            right,
            height,
            size,
        };
        let tree = ClusterTree::new(4, vec![m(0, 2, 0.1, 2), m(1, 3, 0.2, 2), m(4, 5, 0.5, 4)]).unwrap();
        assert_eq!(tree.cut(1), vec![vec![0, 2, 1, 3]]);
        assert_eq!(tree.cut(2), vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(tree.cut(3), vec![vec![0, 2], vec![1], vec![3]]);
        assert_eq!(tree.cut(4).len(), 4);
        let c = tree.cophenetic_matrix();
        assert_eq!(c[(0, 2)], 0.1);
        assert_eq!(c[(1, 3)], 0.2);
        assert_eq!(c[(0, 3)], 0.5);
    }

    #[test]
    fn bisection_worked_example() {
        let est = estimate(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.01, 0.01, 0.09])));
        let w = recursive_bisection(&est, &[0, 1, 2]).unwrap();
        let left = 0.09 / 0.095;
        let expected = [left / 2.0, left / 2.0, 1.0 - left];
        for (g, e) in w.weights().iter().zip(expected) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!((w.weights()[0] - 0.4737).abs() < 1e-4 && (w.weights()[2] - 0.0526).abs() < 1e-4);
    }

    #[test]
    fn identity_gives_equal_weights() {
        let est = estimate(DMatrix::identity(4, 4));
        for settings in [
            HrpSettings::default(),
            HrpSettings {
                linkage: Linkage::Average,
                bisection: Bisection::TreeSplit,
            },
        ] {
            let w = hrp_weights_with(&est, &settings).unwrap();
            for x in w.weights() {
                assert!((x - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bisection_rejects_bad_order() {
        let est = estimate(DMatrix::identity(3, 3));
        assert!(recursive_bisection(&est, &[0, 0, 1]).is_err());
        assert!(recursive_bisection(&est, &[0, 1]).is_err());
    }

    #[test]
    fn zero_correlation_hrp_matches_nrp() {
        let est = estimate(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.01, 0.04, 0.02, 0.09, 0.03])));
        let h = hrp_weights(&est).unwrap();
        let n = nrp_weights(&est).unwrap();
        for (a, b) in h.weights().iter().zip(n.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn two_asset_hrp_equals_nrp(v0 in 1e-4f64..1.0, v1 in 1e-4f64..1.0, rho in -0.99f64..0.99) {
            let c = rho * (v0 * v1).sqrt();
            let est = estimate(DMatrix::from_row_slice(2, 2, &[v0, c, c, v1]));
            let h = hrp_weights(&est).unwrap();
            let n = nrp_weights(&est).unwrap();
            prop_assert!((h.weights()[0] - n.weights()[0]).abs() < 1e-9);
        }

        #[test]
        fn allocations_are_label_invariant(
            seed in proptest::collection::vec(-1.0f64..1.0, 42),
            perm_seed in proptest::collection::vec(0usize..1000, 6),
        ) {
            let n = 6;
            let est = estimate(random_cov(n, &seed));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.sort_by_key(|&i| (perm_seed[i], i));
            let permuted = est.permuted(&perm);
            for settings in [HrpSettings::default(), HrpSettings { linkage: Linkage::Average, bisection: Bisection::Halving }] {
                let base = hrp_weights_with(&est, &settings).unwrap();
                let moved = hrp_weights_with(&permuted, &settings).unwrap();
                for (j, &i) in perm.iter().enumerate() {
                    prop_assert!((moved.weights()[j] - base.weights()[i]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn weights_are_scale_invariant_and_valid(
            seed in proptest::collection::vec(-1.0f64..1.0, 30),
            c in 1e-3f64..1e3,
        ) {
            let est = estimate(random_cov(5, &seed));
            let scaled = est.scaled(c);
            for (a, b) in [
                (hrp_weights(&est).unwrap(), hrp_weights(&scaled).unwrap()),
                (nrp_weights(&est).unwrap(), nrp_weights(&scaled).unwrap()),
            ] {
                prop_assert!((a.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(a.weights().iter().all(|w| *w >= 0.0));
                for (x, y) in a.weights().iter().zip(b.weights()) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn linkage_heights_monotone(seed in proptest::collection::vec(-1.0f64..1.0, 56)) {
            let est = estimate(random_cov(7, &seed));
            let aug = augmented_distance(&correlation_to_distance(&est.correlation).unwrap());
            for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
                let tree = tree_cluster_with(&aug, linkage);
                prop_assert!(tree.merges().windows(2).all(|w| w[0].height <= w[1].height));
                let mut order = quasi_diagonalize(&tree);
                order.sort();
                prop_assert_eq!(order, (0..7).collect::<Vec<_>>());
            }
        }
    }
}
