use nalgebra::DMatrix;

use crate::allocators::ClusterTree;
use crate::linalg::pearson;

/// Number of flat clusters used for the intra-cluster variance: ⌈√N⌉.
pub fn default_cluster_count(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

/// Pearson correlation between the pairwise `distances` and the cophenetic
/// distances of `tree`. `None` when fewer than three leaves or when either
/// side has no variation.
pub fn cophenetic_correlation(tree: &ClusterTree, distances: &DMatrix<f64>) -> Option<f64> {
    let n = tree.n_leaves();
    if n < 3 {
        return None;
    }
    let coph = tree.cophenetic_matrix();
    let mut original = Vec::with_capacity(n * (n - 1) / 2);
    let mut merged = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            original.push(distances[(i, j)]);
            merged.push(coph[(i, j)]);
        }
    }
    pearson(&original, &merged)
}

/// Mean over the `k` flat clusters of the average squared distance from each
/// member to the cluster medoid. The medoid minimizes the summed distance to
/// the other members; ties go to the lowest asset index.
pub fn intra_cluster_variance(tree: &ClusterTree, distances: &DMatrix<f64>, k: usize) -> f64 {
    let clusters = tree.cut(k);
    let total: f64 = clusters
        .iter()
        .map(|members| {
            let medoid = members
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let sa: f64 = members.iter().map(|&m| distances[(a, m)]).sum();
                    let sb: f64 = members.iter().map(|&m| distances[(b, m)]).sum();
                    sa.total_cmp(&sb).then(a.cmp(&b))
                })
                .expect("clusters are non-empty");
            members.iter().map(|&m| distances[(m, medoid)].powi(2)).sum::<f64>() / members.len() as f64
        })
        .sum();
    total / clusters.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterFeatures {
    pub cophenetic_average: f64,
    pub intra_cluster_var: f64,
}

/// Cophenetic correlation (0 when undefined) and the intra-cluster variance
/// at ⌈√N⌉ clusters, both measured on `distances`, the matrix the tree was
/// built from.
pub fn cluster_features(tree: &ClusterTree, distances: &DMatrix<f64>) -> ClusterFeatures {
    let cophenetic_average = cophenetic_correlation(tree, distances).unwrap_or_else(|| {
        log::debug!("cophenetic correlation undefined for {} leaves; using 0", tree.n_leaves());
        0.0
    });
    ClusterFeatures {
        cophenetic_average,
        intra_cluster_var: intra_cluster_variance(tree, distances, default_cluster_count(tree.n_leaves())),
    }
}
