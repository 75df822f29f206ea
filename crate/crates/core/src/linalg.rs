//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted
/// ascending (eigenvector columns reordered to match).
pub fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    (values, vectors)
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    sorted_eigen(m).0
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Rebuilds `m` with every eigenvalue below `floor` raised to `floor`.
pub fn clip_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(m);
    let clipped = DVector::from_iterator(values.len(), values.iter().map(|v| v.max(floor)));
    let rebuilt = &vectors * DMatrix::from_diagonal(&clipped) * vectors.transpose();
    symmetrize(&rebuilt)
}

/// Correlation implied by a covariance matrix. The diagonal is exactly 1 and
/// off-diagonals are clamped into [-1, 1]. Zero variances yield zero
/// correlation for that row and column.
pub fn covariance_to_correlation(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    let sd: Vec<f64> = (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if sd[i] > 0.0 && sd[j] > 0.0 {
            (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    })
}

/// Determinant via LU. For near-singular correlation matrices this agrees
/// with the product of eigenvalues to rounding.
pub fn determinant(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

/// Column means of a T × N matrix.
pub fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let t = x.nrows() as f64;
    (0..x.ncols()).map(|j| x.column(j).sum() / t).collect()
}

/// Unbiased sample covariance of the columns of `x`.
pub fn sample_covariance_matrix(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows();
    let n = x.ncols();
    let means = column_means(x);
    let centered = DMatrix::from_fn(t, n, |r, c| x[(r, c)] - means[c]);
    let cov = centered.transpose() * &centered / ((t - 1) as f64);
    symmetrize(&cov)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample (n − 1) standard deviation; 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Population (n) standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / xs.len() as f64).sqrt()
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    debug_assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let (vals, vecs) = sorted_eigen(&m);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let back = &vecs * DMatrix::from_diagonal(&DVector::from_vec(vals)) * vecs.transpose();
        assert!((back - m).abs().max() < 1e-12);
    }

    #[test]
    fn clipping_makes_psd() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let fixed = clip_eigenvalues(&m, 1e-10);
        assert!(eigenvalues(&fixed)[0] >= 1e-10 * 0.999);
    }

    #[test]
    fn stats_helpers() {
        assert!((sample_std(&[0.01, 0.03]) - 0.014_142_135_623_730_95).abs() < 1e-15);
        assert!((population_std(&[0.2, 0.4, 0.6]) - 0.16329931618554522).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), None);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
    }
}
