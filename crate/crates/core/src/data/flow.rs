use std::collections::HashMap;

use ndarray::Array2;

use super::od::ODPairIndex;
use super::trips::TripDatabase;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    OdPair,
    User,
}

/// Trip counts per row entity and epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    pub values: Array2<f64>,
    pub row_kind: RowKind,
    pub row_labels: Vec<String>,
}

impl FlowMatrix {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn epochs(&self) -> usize {
        self.values.ncols()
    }

    pub fn total(&self) -> f64 {
        self.values.sum()
    }

    /// Sub-matrix over the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FlowMatrix {
        let mut values = Array2::zeros((rows.len(), self.epochs()));
        for (dst, &src) in rows.iter().enumerate() {
            values.row_mut(dst).assign(&self.values.row(src));
        }
        FlowMatrix {
            values,
            row_kind: self.row_kind,
            row_labels: rows.iter().map(|&r| self.row_labels[r].clone()).collect(),
        }
    }
}

/// OD-pair temporal flow matrix `V` in the block layout of `index`.
/// Trips that start and end at the same station are not counted.
pub fn build_od_flow_matrix(db: &TripDatabase, index: &ODPairIndex) -> FlowMatrix {
    assert_eq!(
        index.station_count(),
        db.stations().len(),
        "index built over a different registry"
    );
    let mut values = Array2::zeros((index.total_rows(), db.epoch_count()));
    for r in db.records() {
        if let Some(row) = index.row_of(r.origin, r.destination) {
            values[[row, r.epoch]] += 1.0;
        }
    }
    FlowMatrix {
        values,
        row_kind: RowKind::OdPair,
        row_labels: (0..index.total_rows()).map(|r| index.label(r, db.stations())).collect(),
    }
}

/// User temporal flow matrix `U`; rows follow `users`. Unknown users get a
/// zero row.
pub fn build_user_flow_matrix(db: &TripDatabase, users: &[String]) -> FlowMatrix {
    let slot: HashMap<&str, usize> = users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let mut values = Array2::zeros((users.len(), db.epoch_count()));
    for r in db.records() {
        if let Some(&row) = slot.get(r.user.as_str()) {
            values[[row, r.epoch]] += 1.0;
        }
    }
    FlowMatrix {
        values,
        row_kind: RowKind::User,
        row_labels: users.to_vec(),
    }
}

/// Users whose record count lies in `[min_trips, max_trips]`, first-seen order.
pub fn filter_users_by_trip_count(db: &TripDatabase, min_trips: usize, max_trips: usize) -> Vec<String> {
    assert!(min_trips <= max_trips, "min_trips > max_trips");
    db.trip_counts()
        .into_iter()
        .filter(|&(_, c)| (min_trips..=max_trips).contains(&c))
        .map(|(u, _)| u)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn db(trips: &[(&str, &str, &str, usize)]) -> TripDatabase {
        TripDatabase::from_named(trips.iter().copied(), 24).unwrap()
    }

    #[test]
    fn od_counts() {
        let db = db(&[("c1", "A", "B", 8), ("c2", "A", "B", 8), ("c1", "B", "A", 17)]);
        let idx = ODPairIndex::new(2);
        let v = build_od_flow_matrix(&db, &idx);
        assert_eq!(v.values.dim(), (2, 24));
        assert_eq!(v.values[[0, 8]], 2.0);
        assert_eq!(v.values[[1, 17]], 1.0);
        assert_eq!(v.total(), 3.0);
        assert_eq!(v.row_labels, ["A>B", "B>A"]);
    }

    #[test]
    fn od_empty_and_diagonal() {
        let empty = TripDatabase::new(vec![], vec!["A".into(), "B".into(), "C".into()], 24).unwrap();
        let v = build_od_flow_matrix(&empty, &ODPairIndex::new(3));
        assert_eq!(v.values.dim(), (6, 24));
        assert_eq!(v.total(), 0.0);

        let diag = db(&[("c1", "A", "A", 9)]);
        let v = build_od_flow_matrix(&diag, &ODPairIndex::new(1));
        assert_eq!(v.total(), 0.0);
    }

    #[test]
    fn user_counts() {
        let d = db(&[("c1", "A", "B", 8), ("c1", "B", "A", 17)]);
        let u = build_user_flow_matrix(&d, &["c1".to_string()]);
        assert_eq!(u.values[[0, 8]], 1.0);
        assert_eq!(u.values[[0, 17]], 1.0);
        assert_eq!(u.total(), 2.0);

        let u = build_user_flow_matrix(&d, &["c9".to_string()]);
        assert_eq!(u.total(), 0.0);

        let diag = db(&[("c1", "A", "A", 9)]);
        let u = build_user_flow_matrix(&diag, &["c1".to_string()]);
        assert_eq!(u.values[[0, 9]], 1.0);
    }

    #[test]
    fn trip_count_filter() {
        let mut trips = vec![];
        trips.extend(std::iter::repeat_n(("c1", "A", "B", 1), 5));
        trips.extend(std::iter::repeat_n(("c2", "A", "B", 1), 2));
        trips.extend(std::iter::repeat_n(("c3", "A", "B", 1), 3));
        let d = db(&trips);
        assert_eq!(filter_users_by_trip_count(&d, 1, 3), ["c2", "c3"]);
        assert_eq!(filter_users_by_trip_count(&d, 0, usize::MAX), ["c1", "c2", "c3"]);
        assert!(filter_users_by_trip_count(&d, 6, 10).is_empty());
    }

    fn trip_strategy() -> impl Strategy<Value = Vec<(u8, u8, u8, usize)>> {
        prop::collection::vec((0u8..6, 0u8..4, 0u8..4, 0usize..24), 0..80)
    }

    proptest! {
        #[test]
        fn conservation_and_order_independence(trips in trip_strategy(), rot in 0usize..80) {
            let named: Vec<(String, String, String, usize)> = trips
                .iter()
                .map(|&(u, o, d, t)| (format!("u{u}"), format!("S{o}"), format!("S{d}"), t))
                .collect();
            let build = |rows: &[(String, String, String, usize)]| {
                let db = TripDatabase::from_named(rows.iter().map(|(u, o, d, t)| (u.as_str(), o.as_str(), d.as_str(), *t)), 24).unwrap();
                let idx = ODPairIndex::new(db.stations().len());
                let mut users = db.users();
                users.sort();
                (build_od_flow_matrix(&db, &idx), build_user_flow_matrix(&db, &users), db)
            };
            let (v, u, db) = build(&named);
            let diagonal = db.records().iter().filter(|r| r.origin == r.destination).count();
            prop_assert_eq!(v.total() as usize + diagonal, db.len());
            prop_assert_eq!(u.total() as usize, db.len());

            let mut shuffled = named.clone();
            if !shuffled.is_empty() {
                let k = rot % shuffled.len();
                shuffled.rotate_left(k);
                shuffled.reverse();
            }
            let (v2, u2, _) = build(&shuffled);
            prop_assert_eq!(v, v2);
            prop_assert_eq!(u, u2);
        }
    }
}
