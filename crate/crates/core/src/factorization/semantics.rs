use ndarray::{Array2, ArrayView1, ArrayView2};

use super::{EpochSplits, SemanticGroups};

const DEGENERATE_NORM: f64 = 1e-12;

/// Earliest epoch at which a signature attains its maximum.
pub(crate) fn peak_epoch(row: ArrayView1<f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (t, &x) in row.iter().enumerate() {
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((t, x));
        }
    }
    best.map(|(t, _)| t)
}

/// Labels each component morning, evening or other by where its signature
/// peaks. Low-mass components are always `other`.
pub fn classify_components(h: ArrayView2<f64>, splits: &EpochSplits, min_mass_ratio: f64) -> SemanticGroups {
    let masses: Vec<f64> = h.rows().into_iter().map(|r| r.sum()).collect();
    let mean_mass = masses.iter().sum::<f64>() / masses.len().max(1) as f64;
    let mut groups = SemanticGroups::default();
    for (j, row) in h.rows().into_iter().enumerate() {
        let light = masses[j] <= 0.0 || masses[j] < min_mass_ratio * mean_mass;
        match peak_epoch(row) {
            Some(t) if !light && t < splits.morning_end => groups.morning.push(j),
            Some(t) if !light && t >= splits.afternoon_start => groups.evening.push(j),
            _ => groups.other.push(j),
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reordered {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    pub groups: SemanticGroups,
    /// `permutation[new] = old` component index.
    pub permutation: Vec<usize>,
}

/// Permutes components so morning ones come first (by peak epoch), then
/// other components, then evening ones (by peak epoch). Columns of `W` and
/// rows of `H` move together, so `W·H` is unchanged.
pub fn reorder_factors(w: ArrayView2<f64>, h: ArrayView2<f64>, groups: &SemanticGroups) -> Reordered {
    let by_peak = |set: &[usize]| {
        let mut v = set.to_vec();
        v.sort_by_key(|&j| (peak_epoch(h.row(j)), j));
        v
    };
    let mut other = groups.other.clone();
    other.sort_unstable();
    let morning = by_peak(&groups.morning);
    let evening = by_peak(&groups.evening);
    let permutation: Vec<usize> = morning.iter().chain(&other).chain(&evening).copied().collect();
    let (w, h) = permute_components(w, h, &permutation);

    let k = morning.len();
    let kk = evening.len();
    let total = permutation.len();
    Reordered {
        w,
        h,
        groups: SemanticGroups {
            morning: (0..k).collect(),
            other: (k..total - kk).collect(),
            evening: (total - kk..total).collect(),
        },
        permutation,
    }
}

/// Applies `permutation[new] = old` to the columns of `W` and rows of `H`.
pub(crate) fn permute_components(
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    permutation: &[usize],
) -> (Array2<f64>, Array2<f64>) {
    let mut w2 = Array2::zeros(w.dim());
    let mut h2 = Array2::zeros(h.dim());
    for (new, &old) in permutation.iter().enumerate() {
        w2.column_mut(new).assign(&w.column(old));
        h2.row_mut(new).assign(&h.row(old));
    }
    (w2, h2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    /// Components whose signature norm was below 1e-12 and were left as is.
    pub degenerate: Vec<usize>,
}

/// Rescales every signature to unit L2 norm, moving the scale into `W`.
pub fn normalize_factors(w: ArrayView2<f64>, h: ArrayView2<f64>) -> Normalized {
    let mut w = w.to_owned();
    let mut h = h.to_owned();
    let mut degenerate = Vec::new();
    for k in 0..h.nrows() {
        let norm = h.row(k).iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < DEGENERATE_NORM {
            degenerate.push(k);
            continue;
        }
        h.row_mut(k).mapv_inplace(|x| x / norm);
        w.column_mut(k).mapv_inplace(|x| x * norm);
    }
    Normalized { w, h, degenerate }
}

/// `‖H²‖² + ‖H³‖²`: squared signature mass of morning components in the
/// afternoon band plus evening components in the morning band.
pub fn cross_band_mass(h: ArrayView2<f64>, groups: &SemanticGroups, splits: &EpochSplits) -> f64 {
    let epochs = h.ncols();
    let band = |j: usize, r: std::ops::Range<usize>| r.map(|t| h[[j, t]] * h[[j, t]]).sum::<f64>();
    groups
        .morning
        .iter()
        .map(|&j| band(j, splits.afternoon(epochs)))
        .sum::<f64>()
        + groups.evening.iter().map(|&j| band(j, splits.morning())).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matmul;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn peaked(epoch: usize) -> Array2<f64> {
        let mut h = Array2::from_elem((1, 24), 0.1);
        h[[0, epoch]] = 1.0;
        h
    }

    #[test]
    fn classification_bands() {
        let s = EpochSplits::default();
        assert_eq!(classify_components(peaked(7).view(), &s, 0.0).morning, [0]);
        assert_eq!(classify_components(peaked(17).view(), &s, 0.0).evening, [0]);
        assert_eq!(classify_components(peaked(12).view(), &s, 0.0).other, [0]);
        assert_eq!(classify_components(peaked(11).view(), &s, 0.0).other, [0]);
        assert_eq!(classify_components(peaked(14).view(), &s, 0.0).evening, [0]);
    }

    #[test]
    fn ties_go_to_earliest_epoch() {
        let mut h = Array2::zeros((1, 24));
        h[[0, 9]] = 1.0;
        h[[0, 16]] = 1.0;
        let g = classify_components(h.view(), &EpochSplits::default(), 0.0);
        assert_eq!(g.morning, [0]);
    }

    #[test]
    fn light_components_are_other() {
        let mut h = Array2::zeros((3, 24));
        h[[0, 8]] = 10.0;
        h[[1, 17]] = 10.0;
        h[[2, 8]] = 0.01;
        let g = classify_components(h.view(), &EpochSplits::default(), 0.05);
        assert_eq!(g.morning, [0]);
        assert_eq!(g.evening, [1]);
        assert_eq!(g.other, [2]);
    }

    #[test]
    fn reorder_puts_morning_first_and_evening_last() {
        let mut h = Array2::zeros((4, 24));
        h[[0, 18]] = 1.0; // evening
        h[[1, 12]] = 1.0; // other
        h[[2, 9]] = 1.0; // morning, later
        h[[3, 7]] = 1.0; // morning, earlier
        let w = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64);
        let groups = classify_components(h.view(), &EpochSplits::default(), 0.0);
        let r = reorder_factors(w.view(), h.view(), &groups);
        assert_eq!(r.permutation, [3, 2, 1, 0]);
        assert_eq!(r.groups.morning, [0, 1]);
        assert_eq!(r.groups.other, [2]);
        assert_eq!(r.groups.evening, [3]);
        assert_eq!(matmul(w.view(), h.view()), matmul(r.w.view(), r.h.view()));
    }

    #[test]
    fn identity_swap() {
        let w = array![[1.0, 2.0], [3.0, 4.0]];
        let h = array![[5.0, 6.0], [7.0, 8.0]];
        let (w2, h2) = permute_components(w.view(), h.view(), &[0, 1]);
        assert_eq!((w2, h2), (w.clone(), h.clone()));
        let (w3, h3) = permute_components(w.view(), h.view(), &[1, 0]);
        assert_eq!(matmul(w3.view(), h3.view()), array![[19.0, 22.0], [43.0, 50.0]]);
    }

    #[test]
    fn normalize_cases() {
        let w = array![[1.0], [2.0]];
        let h = array![[3.0, 4.0]];
        let n = normalize_factors(w.view(), h.view());
        assert_relative_eq!(n.h, array![[0.6, 0.8]], max_relative = 1e-15);
        assert_eq!(n.w, array![[5.0], [10.0]]);
        assert!(n.degenerate.is_empty());

        let again = normalize_factors(n.w.view(), n.h.view());
        assert_relative_eq!(again.h, n.h, max_relative = 1e-15);
        assert_relative_eq!(again.w, n.w, max_relative = 1e-15);

        let zero_h = array![[0.0, 0.0], [0.6, 0.8]];
        let w2 = array![[1.0, 1.0]];
        let n = normalize_factors(w2.view(), zero_h.view());
        assert_eq!(n.degenerate, [0]);
        assert_eq!(n.h, zero_h);
        assert_eq!(n.w, w2);
    }

    #[test]
    fn cross_band_mass_counts_only_off_band_entries() {
        let mut h = Array2::zeros((3, 24));
        h[[0, 15]] = 2.0; // morning comp in afternoon
        h[[0, 3]] = 5.0;
        h[[1, 2]] = 3.0; // evening comp in morning
        h[[2, 2]] = 7.0; // other comp, ignored
        let g = SemanticGroups {
            morning: vec![0],
            evening: vec![1],
            other: vec![2],
        };
        assert_eq!(cross_band_mass(h.view(), &g, &EpochSplits::default()), 13.0);
    }

    proptest! {
        #[test]
        fn normalization_preserves_product(vals in prop::collection::vec(0.0f64..3.0, 5 * 3 + 3 * 6)) {
            let w = Array2::from_shape_vec((5, 3), vals[..15].to_vec()).unwrap();
            let h = Array2::from_shape_vec((3, 6), vals[15..].to_vec()).unwrap();
            let before = matmul(w.view(), h.view());
            let n = normalize_factors(w.view(), h.view());
            let after = matmul(n.w.view(), n.h.view());
            let scale = crate::linalg::max_abs(before.view()).max(1e-300);
            for (a, b) in before.iter().zip(after.iter()) {
                prop_assert!((a - b).abs() / scale < 1e-9);
            }
            for k in 0..3 {
                if !n.degenerate.contains(&k) {
                    let norm: f64 = n.h.row(k).iter().map(|x| x * x).sum::<f64>().sqrt();
                    prop_assert!((norm - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
