/// Row layout of the origin-destination flow matrix.
///
/// For `n` stations there are `P = n(n-1)/2` unordered pairs. Row `r < P`
/// holds the forward pair `(i, j)` with `i < j` (lexicographic in `i`, then
/// `j`); row `r + P` holds its reverse `(j, i)`. Diagonal pairs have no row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ODPairIndex {
    station_count: usize,
    forward: Vec<(usize, usize)>,
}

impl ODPairIndex {
    pub fn new(station_count: usize) -> Self {
        let mut forward = Vec::with_capacity(station_count * station_count.saturating_sub(1) / 2);
        for i in 0..station_count {
            for j in i + 1..station_count {
                forward.push((i, j));
            }
        }
        Self { station_count, forward }
    }

    pub fn station_count(&self) -> usize {
        self.station_count
    }

    /// Number of forward pairs, `P`.
    pub fn forward_len(&self) -> usize {
        self.forward.len()
    }

    pub fn total_rows(&self) -> usize {
        2 * self.forward.len()
    }

    pub fn forward_pairs(&self) -> &[(usize, usize)] {
        &self.forward
    }

    /// `(origin, destination)` of a row.
    pub fn pair(&self, row: usize) -> (usize, usize) {
        let p = self.forward.len();
        if row < p {
            self.forward[row]
        } else {
            let (i, j) = self.forward[row - p];
            (j, i)
        }
    }

    pub fn reverse_of(&self, row: usize) -> usize {
        let p = self.forward.len();
        assert!(row < 2 * p, "row {row} out of range");
        if row < p {
            row + p
        } else {
            row - p
        }
    }

    /// Row of `(origin, destination)`, or `None` for diagonal or unknown pairs.
    pub fn row_of(&self, origin: usize, destination: usize) -> Option<usize> {
        let n = self.station_count;
        if origin == destination || origin >= n || destination >= n {
            return None;
        }
        let (i, j, offset) = if origin < destination {
            (origin, destination, 0)
        } else {
            (destination, origin, self.forward.len())
        };
        Some(i * n - i * (i + 1) / 2 + (j - i - 1) + offset)
    }

    /// `origin>destination` label for a row.
    pub fn label(&self, row: usize, stations: &[String]) -> String {
        let (o, d) = self.pair(row);
        format!("{}>{}", stations[o], stations[d])
    }
}
