//! Station-to-user transfer: express users in the station-learned temporal
//! signatures and aggregate signatures into station and user functions.

use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FlowMatrix, ODPairIndex};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::factorization::{positive_uniform_row, SemanticGroups};
use crate::linalg::matmul_nt;
use crate::seed;

const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Per-user weights on the latent components (`W''`), or on groups of
/// components after aggregation (`W'''`).
#[derive(Debug, Clone, PartialEq)]
pub struct UserWeights {
    pub values: Array2<f64>,
    pub user_labels: Vec<String>,
    pub component_labels: Vec<String>,
}

impl UserWeights {
    pub fn component_label(k: usize) -> String {
        format!("w{k}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub max_iters: usize,
    /// Stop a user once the relative change of its squared residual drops
    /// below this value.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

struct RowProjection {
    weights: Array1<f64>,
    /// Squared residual before the first update and after every update.
    residuals: Vec<f64>,
}

fn residual_sq(u: ArrayView1<f64>, w: &Array1<f64>, h: ArrayView2<f64>) -> f64 {
    (0..h.ncols())
        .map(|t| {
            let fit: f64 = (0..h.nrows()).map(|k| w[k] * h[[k, t]]).sum();
            (u[t] - fit) * (u[t] - fit)
        })
        .sum()
}

/// `w ← w ∘ numer / max(w·HHᵀ, 1e-12)`.
fn multiplicative_step(w: &mut Array1<f64>, numer: &Array1<f64>, hht: &Array2<f64>) {
    let k = w.len();
    let denom: Array1<f64> = (0..k).map(|j| (0..k).map(|i| w[i] * hht[[i, j]]).sum()).collect();
    for j in 0..k {
        w[j] *= numer[j] / denom[j].max(DENOMINATOR_FLOOR);
    }
}

fn project_row(
    u: ArrayView1<f64>,
    label: &str,
    h: ArrayView2<f64>,
    hht: &Array2<f64>,
    config: &ProjectionConfig,
) -> Option<RowProjection> {
    let k = h.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(config.seed ^ seed::hash_str(label)));
    let mut w = positive_uniform_row(&mut rng, k, u.mean().unwrap_or(0.0));
    // (U Hᵀ) for this row
    let numer: Array1<f64> = (0..k).map(|j| (0..h.ncols()).map(|t| u[t] * h[[j, t]]).sum()).collect();

    let mut residuals = vec![residual_sq(u, &w, h)];
    for _ in 0..config.max_iters {
        let mut next = w.clone();
        multiplicative_step(&mut next, &numer, hht);
        if next.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let prev = *residuals.last().expect("seeded");
        let r = residual_sq(u, &next, h);
        // rounding at a fixed point can nudge the residual up; stop there
        if r > prev {
            break;
        }
        w = next;
        residuals.push(r);
        if prev == 0.0 || ((prev - r) / prev) < config.tolerance {
            break;
        }
    }
    Some(RowProjection { weights: w, residuals })
}

/// Projects every row of `u` onto the fixed signatures `h` with the
/// multiplicative update `w ← w ∘ (U Hᵀ) / (w H Hᵀ)`. `h` is never modified.
pub fn project_users(u: &FlowMatrix, h: ArrayView2<f64>, config: &ProjectionConfig) -> Result<UserWeights> {
    project_users_traced(u, h, config, Execution::default()).map(|(w, _)| w)
}

/// [`project_users`] with an explicit execution mode, also returning the
/// total squared residual `‖U − W''H‖²` after each iteration. Users that
/// converged early contribute their final residual to later entries.
pub fn project_users_traced(
    u: &FlowMatrix,
    h: ArrayView2<f64>,
    config: &ProjectionConfig,
    exec: Execution,
) -> Result<(UserWeights, Vec<f64>)> {
    if u.epochs() != h.ncols() {
        return Err(Error::Shape(format!(
            "U has {} epochs, H has {}",
            u.epochs(),
            h.ncols()
        )));
    }
    if h.iter().chain(u.values.iter()).any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::Config(
            "projection inputs must be finite and non-negative".into(),
        ));
    }
    let hht = matmul_nt(h, h);
    let rows = exec.try_map_indices(u.rows(), |i| {
        project_row(u.values.row(i), &u.row_labels[i], h, &hht, config).ok_or(Error::NonFiniteProjection { row: i })
    })?;

    let k = h.nrows();
    let mut values = Array2::zeros((u.rows(), k));
    let longest = rows.iter().map(|r| r.residuals.len()).max().unwrap_or(1);
    let mut trace = vec![0.0; longest];
    for (i, row) in rows.iter().enumerate() {
        values.row_mut(i).assign(&row.weights);
        let last = *row.residuals.last().expect("seeded");
        for (t, slot) in trace.iter_mut().enumerate() {
            *slot += row.residuals.get(t).copied().unwrap_or(last);
        }
    }
    Ok((
        UserWeights {
            values,
            user_labels: u.row_labels.clone(),
            component_labels: (0..k).map(UserWeights::component_label).collect(),
        },
        trace,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StationScore {
    /// Reconstructed in-flow.
    pub attractivity: f64,
    /// Reconstructed out-flow.
    pub generativity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationFunctionScores {
    pub stations: Vec<String>,
    pub scores: Vec<StationScore>,
    pub components: Vec<usize>,
    pub epochs: Range<usize>,
}

impl StationFunctionScores {
    /// Station indices sorted by descending attractivity (ties by index).
    pub fn rank_by_attractivity(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| {
            self.scores[b]
                .attractivity
                .total_cmp(&self.scores[a].attractivity)
                .then(a.cmp(&b))
        });
        idx
    }

    pub fn rank_by_generativity(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| {
            self.scores[b]
                .generativity
                .total_cmp(&self.scores[a].generativity)
                .then(a.cmp(&b))
        });
        idx
    }
}

/// Rebuilds OD flows from the chosen components only and accumulates them
/// per station over `epochs`: in-flow as attractivity, out-flow as
/// generativity.
pub fn aggregate_station_flows(
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    index: &ODPairIndex,
    stations: &[String],
    components: &[usize],
    epochs: Range<usize>,
) -> Result<StationFunctionScores> {
    if components.is_empty() {
        return Err(Error::Config("component set is empty".into()));
    }
    if let Some(&bad) = components.iter().find(|&&k| k >= h.nrows()) {
        return Err(Error::Config(format!("component {bad} out of range")));
    }
    if epochs.start >= epochs.end || epochs.end > h.ncols() {
        return Err(Error::Config(format!(
            "epoch range {epochs:?} outside [0, {})",
            h.ncols()
        )));
    }
    if w.nrows() != index.total_rows() || stations.len() != index.station_count() {
        return Err(Error::Shape("W, OD index and station registry disagree".into()));
    }

    let mut scores = vec![StationScore::default(); stations.len()];
    for row in 0..w.nrows() {
        let flow: f64 = epochs
            .clone()
            .map(|t| components.iter().map(|&k| w[[row, k]] * h[[k, t]]).sum::<f64>())
            .sum();
        let (o, d) = index.pair(row);
        scores[o].generativity += flow;
        scores[d].attractivity += flow;
    }
    Ok(StationFunctionScores {
        stations: stations.to_vec(),
        scores,
        components: components.to_vec(),
        epochs,
    })
}

/// Sums user weights within each component group; the output has one
/// column per group, labelled like `w0+1`.
pub fn aggregate_user_weights(weights: &UserWeights, grouping: &[Vec<usize>]) -> Result<UserWeights> {
    let k = weights.values.ncols();
    let mut used = vec![false; k];
    for set in grouping {
        if set.is_empty() {
            return Err(Error::Config("empty component group".into()));
        }
        for &j in set {
            if j >= k {
                return Err(Error::Config(format!("component {j} out of range")));
            }
            if std::mem::replace(&mut used[j], true) {
                return Err(Error::Config(format!("component {j} appears in more than one group")));
            }
        }
    }
    let mut values = Array2::zeros((weights.values.nrows(), grouping.len()));
    for (g, set) in grouping.iter().enumerate() {
        for &j in set {
            let col = weights.values.column(j);
            values.column_mut(g).zip_mut_with(&col, |a, &b| *a += b);
        }
    }
    let component_labels = grouping
        .iter()
        .map(|set| format!("w{}", set.iter().map(|j| j.to_string()).collect::<Vec<_>>().join("+")))
        .collect();
    Ok(UserWeights {
        values,
        user_labels: weights.user_labels.clone(),
        component_labels,
    })
}

/// Morning components as one group, each other component on its own, and
/// evening components as one group.
pub fn semantic_grouping(groups: &SemanticGroups) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if !groups.morning.is_empty() {
        out.push(groups.morning.clone());
    }
    out.extend(groups.other.iter().map(|&j| vec![j]));
    if !groups.evening.is_empty() {
        out.push(groups.evening.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RowKind;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn users(values: Array2<f64>) -> FlowMatrix {
        FlowMatrix {
            row_labels: (0..values.nrows()).map(|i| format!("u{i}")).collect(),
            values,
            row_kind: RowKind::User,
        }
    }

    #[test]
    fn identity_basis_recovers_counts() {
        let h = Array2::eye(2);
        let (w, trace) = project_users_traced(
            &users(array![[2.0, 3.0]]),
            h.view(),
            &ProjectionConfig {
                max_iters: 2000,
                tolerance: 0.0,
                seed: 1,
            },
            Execution::Sequential,
        )
        .unwrap();
        assert_relative_eq!(w.values[[0, 0]], 2.0, max_relative = 1e-9);
        assert_relative_eq!(w.values[[0, 1]], 3.0, max_relative = 1e-9);
        assert!(trace.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn single_hand_step() {
        let h = Array2::eye(2);
        let hht = matmul_nt(h.view(), h.view());
        let u = array![4.0, 1.0];
        let mut w = array![1.0, 1.0];
        // U Hᵀ with H = I
        let numer = array![4.0, 1.0];
        multiplicative_step(&mut w, &numer, &hht);
        assert_eq!(w, array![4.0, 1.0]);
        assert_eq!(residual_sq(u.view(), &w, h.view()), 0.0);
    }

    #[test]
    fn zero_row_decays() {
        let mut h = Array2::from_elem((2, 4), 0.5);
        h[[0, 0]] = 1.0;
        let config = ProjectionConfig {
            max_iters: 5,
            tolerance: 0.0,
            seed: 3,
        };
        let (w, trace) =
            project_users_traced(&users(Array2::zeros((1, 4))), h.view(), &config, Execution::Sequential).unwrap();
        assert!(w.values.iter().all(|&x| (0.0..1e-6).contains(&x)));
        assert!(trace.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn h_is_untouched_and_modes_agree() {
        let h = array![[0.8, 0.6, 0.0], [0.0, 0.6, 0.8]];
        let u = users(array![[1.0, 0.0, 2.0], [0.0, 3.0, 1.0], [0.0, 0.0, 0.0]]);
        let copy = h.clone();
        let config = ProjectionConfig::default();
        let a = project_users_traced(&u, h.view(), &config, Execution::Sequential).unwrap();
        let b = project_users_traced(&u, h.view(), &config, Execution::Parallel).unwrap();
        assert_eq!(h, copy);
        assert_eq!(a, b);
    }

    #[test]
    fn projection_depends_on_user_not_position() {
        let h = array![[0.8, 0.6, 0.0], [0.0, 0.6, 0.8]];
        let mut u = users(array![[1.0, 0.0, 2.0], [0.0, 3.0, 1.0]]);
        let a = project_users(&u, h.view(), &ProjectionConfig::default()).unwrap();
        u = u.select_rows(&[1, 0]);
        let b = project_users(&u, h.view(), &ProjectionConfig::default()).unwrap();
        assert_eq!(a.values.row(0), b.values.row(1));
    }

    #[test]
    fn shape_mismatch() {
        let h = Array2::eye(3);
        assert!(project_users(&users(Array2::zeros((1, 2))), h.view(), &ProjectionConfig::default()).is_err());
    }

    #[test]
    fn single_pair_station_scores() {
        let index = ODPairIndex::new(3);
        let stations: Vec<String> = ["A", "B", "C"].map(String::from).to_vec();
        let mut w = Array2::zeros((6, 1));
        w[[index.row_of(0, 1).unwrap(), 0]] = 5.0;
        let h = array![[0.0, 1.0, 0.0]];
        let s = aggregate_station_flows(w.view(), h.view(), &index, &stations, &[0], 0..3).unwrap();
        assert_eq!(s.scores[1].attractivity, 5.0);
        assert_eq!(s.scores[0].generativity, 5.0);
        assert_eq!(s.scores[2], StationScore::default());
        assert_eq!(s.scores[0].attractivity + s.scores[1].generativity, 0.0);
        assert_eq!(s.rank_by_attractivity()[0], 1);
        assert_eq!(s.rank_by_generativity()[0], 0);

        let z = aggregate_station_flows(Array2::zeros((6, 1)).view(), h.view(), &index, &stations, &[0], 0..3).unwrap();
        assert!(z.scores.iter().all(|s| *s == StationScore::default()));
        assert!(aggregate_station_flows(w.view(), h.view(), &index, &stations, &[], 0..3).is_err());
        assert!(aggregate_station_flows(w.view(), h.view(), &index, &stations, &[0], 0..4).is_err());
    }

    #[test]
    fn user_weight_groups() {
        let w = UserWeights {
            values: array![[1.0, 2.0, 0.0, 0.0, 3.0, 4.0]],
            user_labels: vec!["u".into()],
            component_labels: (0..6).map(UserWeights::component_label).collect(),
        };
        let agg = aggregate_user_weights(&w, &[vec![0, 1], vec![4, 5]]).unwrap();
        assert_eq!(agg.values, array![[3.0, 7.0]]);
        assert_eq!(agg.component_labels, ["w0+1", "w4+5"]);

        let id: Vec<Vec<usize>> = (0..6).map(|j| vec![j]).collect();
        assert_eq!(aggregate_user_weights(&w, &id).unwrap().values, w.values);
        assert!(aggregate_user_weights(&w, &[vec![0, 1], vec![1, 2]]).is_err());
        assert!(aggregate_user_weights(&w, &[vec![6]]).is_err());
    }

    #[test]
    fn semantic_grouping_layout() {
        let g = SemanticGroups {
            morning: vec![0, 1],
            other: vec![2, 3],
            evening: vec![4, 5],
        };
        assert_eq!(semantic_grouping(&g), vec![vec![0, 1], vec![2], vec![3], vec![4, 5]]);
    }
}
