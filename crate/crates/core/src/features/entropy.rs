//! Kozachenko–Leonenko k-nearest-neighbour differential entropy.

use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use ordered::Ord64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::market_data::ReturnPanel;

pub const DEFAULT_K: usize = 3;
const JITTER_SCALE: f64 = 1e-12;
const JITTER_SEED: u64 = 0x6b6e_6e5f_6a69_7474;

mod ordered {
    /// f64 wrapper with a total order, for the neighbour heap.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Ord64(pub f64);
    impl Eq for Ord64 {}
    impl PartialOrd for Ord64 {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Ord64 {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

pub(crate) fn squared_distance(points: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..points.ncols() {
        let d = points[(a, c)] - points[(b, c)];
        s += d * d;
    }
    s
}

/// Squared distance from each point to its k-th nearest neighbour. Candidates
/// are visited in order of the first coordinate and the scan stops once the
/// gap in that coordinate alone exceeds the current k-th best.
pub fn kth_neighbor_sq_distances(points: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let t = points.nrows();
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| points[(a, 0)].total_cmp(&points[(b, 0)]).then(a.cmp(&b)));
    let mut rank = vec![0usize; t];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let mut out = vec![0.0; t];
    for i in 0..t {
        let x0 = points[(i, 0)];
        let mut heap: BinaryHeap<Ord64> = BinaryHeap::with_capacity(k + 1);
        let consider = |j: usize, heap: &mut BinaryHeap<Ord64>| {
            let d = squared_distance(points, i, j);
            if heap.len() < k {
                heap.push(Ord64(d));
            } else if d < heap.peek().expect("non-empty").0 {
                heap.pop();
                heap.push(Ord64(d));
            }
        };
        let (mut lo, mut hi) = (rank[i], rank[i] + 1);
        let (mut lo_done, mut hi_done) = (false, false);
        while !(lo_done && hi_done) {
            if !lo_done {
                if lo == 0 {
                    lo_done = true;
                } else {
                    lo -= 1;
                    let j = order[lo];
                    let gap = x0 - points[(j, 0)];
                    if heap.len() == k && gap * gap > heap.peek().expect("full").0 {
                        lo_done = true;
                    } else {
                        consider(j, &mut heap);
                    }
                }
            }
            if !hi_done {
                if hi >= t {
                    hi_done = true;
                } else {
                    let j = order[hi];
                    hi += 1;
                    let gap = points[(j, 0)] - x0;
                    if heap.len() == k && gap * gap > heap.peek().expect("full").0 {
                        hi_done = true;
                    } else {
                        consider(j, &mut heap);
                    }
                }
            }
        }
        out[i] = heap.peek().expect("k >= 1 neighbours").0;
    }
    out
}

/// Log-volume of the unit ball in `d` dimensions.
pub fn ln_unit_ball_volume(d: usize) -> f64 {
    let d = d as f64;
    0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d + 1.0)
}

/// Kozachenko–Leonenko estimate (nats) treating each row as a point:
/// Ĥ = ψ(T) − ψ(k) + ln V_d + (d/T) Σᵢ ln εᵢ, with εᵢ the distance to the
/// k-th nearest neighbour. Repeated points are separated by seeded noise of
/// order 1e-12 before the search.
pub fn knn_entropy_points(points: &DMatrix<f64>, k: usize) -> Result<f64> {
    let (t, d) = points.shape();
    if k == 0 {
        return Err(Error::InvalidSpec("k must be at least 1".into()));
    }
    if t <= k {
        return Err(Error::InsufficientHistory {
            needed: k + 1,
            available: t,
        });
    }
    let mut pts = points.clone();
    let mut dists = kth_neighbor_sq_distances(&pts, k);
    if has_duplicates(&pts) {
        let scale = JITTER_SCALE * pts.abs().max().max(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
        for v in pts.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += scale * z;
        }
        dists = kth_neighbor_sq_distances(&pts, k);
    }
    let sum_ln: f64 = dists.iter().map(|d2| 0.5 * d2.ln()).sum();
    Ok(digamma(t as f64) - digamma(k as f64) + ln_unit_ball_volume(d) + d as f64 * sum_ln / t as f64)
}

fn has_duplicates(points: &DMatrix<f64>) -> bool {
    let t = points.nrows();
    let mut rows: Vec<usize> = (0..t).collect();
    let key = |i: usize| points.row(i).iter().map(|v| v.to_bits()).collect::<Vec<u64>>();
    rows.sort_by_key(|&i| key(i));
    rows.windows(2).any(|w| key(w[0]) == key(w[1]))
}

/// Entropy of the joint daily return vectors in `window`.
pub fn knn_entropy(window: &ReturnPanel, k: usize) -> Result<f64> {
    knn_entropy_points(window.returns(), k)
}
