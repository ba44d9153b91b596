//! k-means++ seeding followed by Lloyd iterations.

use ndarray::{Array2, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::squared_distance;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub clusters: usize,
    pub max_iters: usize,
    /// Independent seedings; the run with the lowest potential is kept.
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            clusters: 6,
            max_iters: 300,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    /// Sum of squared distances to assigned centers after each assignment step.
    pub potential_trace: Vec<f64>,
}

impl KMeansResult {
    pub fn potential(&self) -> f64 {
        *self.potential_trace.last().expect("at least one assignment")
    }
}

fn row<'a>(points: ArrayView2<'a, f64>, i: usize) -> &'a [f64] {
    points.index_axis_move(Axis(0), i).to_slice().expect("standard layout")
}

fn seed_centers<R: Rng>(points: ArrayView2<f64>, k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(row(points, i), row(points, chosen[0])))
        .collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(dist) => dist.sample(rng),
            // every point coincides with a chosen center
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(row(points, i), row(points, next)));
        }
    }
    chosen
}

/// Nearest center per point (ties to the lower center index) and its
/// squared distance.
fn assign(points: ArrayView2<f64>, centers: &Array2<f64>, exec: Execution) -> Vec<(usize, f64)> {
    exec.map_indices(points.nrows(), |i| {
        let p = row(points, i);
        let mut best = (0, f64::INFINITY);
        for (c, center) in centers.rows().into_iter().enumerate() {
            let d = squared_distance(p, center.as_slice().expect("standard layout"));
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    })
}

/// Clusters the rows of `points` into `k` groups.
pub fn kmeans_pp(points: ArrayView2<f64>, k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    kmeans_pp_with(points, k, seed, max_iters, Execution::default())
}

pub(crate) fn kmeans_pp_with(
    points: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iters: usize,
    exec: Execution,
) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::TooManyClusters { clusters: k, points: n });
    }
    let points = points.as_standard_layout();
    let points = points.view();
    let dims = points.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Array2::zeros((k, dims));
    for (c, &i) in seed_centers(points, k, &mut rng).iter().enumerate() {
        centers.row_mut(c).assign(&points.row(i));
    }

    let mut assignment = assign(points, &centers, exec);
    let mut trace = vec![assignment.iter().map(|a| a.1).sum()];
    for _ in 0..max_iters {
        update_centers(points, &mut centers, &mut assignment);
        let next = assign(points, &centers, exec);
        let changed = next.iter().zip(&assignment).any(|(a, b)| a.0 != b.0);
        assignment = next;
        trace.push(assignment.iter().map(|a| a.1).sum());
        if !changed {
            break;
        }
    }
    Ok(KMeansResult {
        labels: assignment.iter().map(|a| a.0).collect(),
        centers,
        potential_trace: trace,
    })
}

/// Moves every center to the mean of its points. An empty cluster takes
/// over the point farthest from its current center.
fn update_centers(points: ArrayView2<f64>, centers: &mut Array2<f64>, assignment: &mut [(usize, f64)]) {
    let k = centers.nrows();
    loop {
        let mut counts = vec![0usize; k];
        for a in assignment.iter() {
            counts[a.0] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let far = (0..assignment.len())
            .filter(|&i| counts[assignment[i].0] > 1)
            .max_by(|&a, &b| assignment[a].1.total_cmp(&assignment[b].1).then(b.cmp(&a)));
        let Some(far) = far else { break };
        centers.row_mut(empty).assign(&points.row(far));
        assignment[far] = (empty, 0.0);
    }

    let mut sums = Array2::<f64>::zeros(centers.dim());
    let mut counts = vec![0usize; k];
    for (i, a) in assignment.iter().enumerate() {
        sums.row_mut(a.0).zip_mut_with(&points.row(i), |s, &p| *s += p);
        counts[a.0] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let inv = 1.0 / count as f64;
            centers.row_mut(c).assign(&sums.row(c).mapv(|s| s * inv));
        }
    }
}

/// Best of `config.restarts` k-means++ runs by final potential.
pub fn kmeans_best_of(
    points: ArrayView2<f64>,
    config: &KMeansConfig,
    seed: u64,
    exec: Execution,
) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for r in 0..config.restarts.max(1) {
        let run = kmeans_pp_with(
            points,
            config.clusters,
            seed::derive_indexed(seed, "kmeans-restart", r as u64),
            config.max_iters,
            exec,
        )?;
        if best.as_ref().is_none_or(|b| run.potential() < b.potential()) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
