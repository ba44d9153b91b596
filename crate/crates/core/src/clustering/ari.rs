use std::collections::HashMap;

use super::ClusterLabels;
use crate::error::{Error, Result};

fn comb2(n: u64) -> i128 {
    let n = i128::from(n);
    n * (n - 1) / 2
}

/// Adjusted Rand index of two labelings of the same items, from the
/// contingency table. Returns 1.0 when the expected and maximum index
/// coincide (both partitions trivial in the same way, or fewer than two items).
///
/// With `I = Σ C(n_ij, 2)`, `A = Σ C(a_i, 2)`, `B = Σ C(b_j, 2)` and
/// `N = C(n, 2)`, the index `(I − AB/N) / ((A+B)/2 − AB/N)` is evaluated as
/// `2(IN − AB) / ((A+B)N − 2AB)` in integers, so only the final division rounds.
pub fn adjusted_rand_index_raw(x: &[usize], y: &[usize]) -> f64 {
    assert_eq!(x.len(), y.len(), "labelings differ in length");
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *table.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: i128 = table.values().map(|&n| comb2(n)).sum();
    let a: i128 = rows.values().map(|&n| comb2(n)).sum();
    let b: i128 = cols.values().map(|&n| comb2(n)).sum();
    let total = comb2(x.len() as u64);
    let numerator = 2 * (index * total - a * b);
    let denominator = (a + b) * total - 2 * a * b;
    if denominator == 0 {
        return 1.0;
    }
    numerator as f64 / denominator as f64
}

/// [`adjusted_rand_index_raw`] over two [`ClusterLabels`] of the same item set.
pub fn adjusted_rand_index(x: &ClusterLabels, y: &ClusterLabels) -> Result<f64> {
    if x.items == y.items {
        return Ok(adjusted_rand_index_raw(&x.labels, &y.labels));
    }
    if x.len() != y.len() {
        return Err(Error::ItemMismatch(format!("{} vs {} items", x.len(), y.len())));
    }
    let slot: HashMap<&str, usize> = y.items.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let aligned = x
        .items
        .iter()
        .map(|item| {
            slot.get(item.as_str())
                .map(|&i| y.labels[i])
                .ok_or_else(|| Error::ItemMismatch(format!("`{item}` missing from second labeling")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(adjusted_rand_index_raw(&x.labels, &aligned))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(items: &[&str], l: &[usize]) -> ClusterLabels {
        let k = l.iter().max().map_or(1, |m| m + 1);
        ClusterLabels::new(items.iter().map(|s| s.to_string()).collect(), l.to_vec(), k).unwrap()
    }

    #[test]
    fn hand_cases() {
        assert_eq!(adjusted_rand_index_raw(&[0, 0, 1, 1], &[0, 0, 1, 1]), 1.0);
        assert_eq!(adjusted_rand_index_raw(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert_eq!(adjusted_rand_index_raw(&[0, 0, 1, 1], &[0, 1, 0, 1]), -0.5);
        assert_eq!(adjusted_rand_index_raw(&[0, 0, 0], &[0, 0, 0]), 1.0);
        assert_eq!(adjusted_rand_index_raw(&[0], &[3]), 1.0);
    }

    #[test]
    fn aligns_items_by_name() {
        let x = labels(&["a", "b", "c", "d"], &[0, 0, 1, 1]);
        let y = labels(&["d", "c", "b", "a"], &[0, 0, 1, 1]);
        assert_eq!(adjusted_rand_index(&x, &y).unwrap(), 1.0);
        let z = labels(&["a", "b", "c", "e"], &[0, 0, 1, 1]);
        assert!(matches!(adjusted_rand_index(&x, &z), Err(Error::ItemMismatch(_))));
        let short = labels(&["a", "b", "c"], &[0, 0, 1]);
        assert!(adjusted_rand_index(&x, &short).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_relabel_invariant(pairs in prop::collection::vec((0usize..4, 0usize..4), 2..40), shift in 1usize..4) {
            let x: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let a = adjusted_rand_index_raw(&x, &y);
            prop_assert!((a - adjusted_rand_index_raw(&y, &x)).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
            let relabeled: Vec<usize> = x.iter().map(|l| (l + shift) % 4 + 10).collect();
            prop_assert!((a - adjusted_rand_index_raw(&relabeled, &y)).abs() < 1e-12);
            prop_assert_eq!(adjusted_rand_index_raw(&x, &x), 1.0);
        }
    }
}
