//! Boolean sparse matrices in CSR layout.
//!
//! These back the per-relation adjacency matrices of a [`TripleStore`](crate::graph::TripleStore)
//! and the rule applier's composition `M_a · M_b` over the boolean semiring.

/// A square-or-rectangular boolean matrix stored as compressed sparse rows.
///
/// Column indices within a row are strictly increasing, so a stored entry is
/// never duplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBoolMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
}

impl SparseBoolMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseBoolMatrix {
            n_rows,
            n_cols,
            indptr: vec![0; n_rows + 1],
            indices: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col)` pairs; duplicates collapse to one entry.
    ///
    /// Panics if a pair lies outside the matrix shape.
    pub fn from_pairs<I>(n_rows: usize, n_cols: usize, pairs: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut pairs: Vec<(u32, u32)> = pairs.into_iter().collect();
        pairs.sort_unstable();
        pairs.dedup();

        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(pairs.len());
        for &(r, c) in &pairs {
            assert!(
                (r as usize) < n_rows && (c as usize) < n_cols,
                "entry ({r}, {c}) outside {n_rows}x{n_cols}"
            );
            indptr[r as usize + 1] += 1;
            indices.push(c);
        }
        for i in 0..n_rows {
            indptr[i + 1] += indptr[i];
        }
        SparseBoolMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of stored (true) entries.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Sorted column indices of the true entries in `row`.
    pub fn row(&self, row: usize) -> &[u32] {
        &self.indices[self.indptr[row]..self.indptr[row + 1]]
    }

    pub fn contains(&self, row: usize, col: u32) -> bool {
        row < self.n_rows && self.row(row).binary_search(&col).is_ok()
    }

    /// Iterates over all true entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).iter().map(move |&c| (r as u32, c)))
    }

    /// Boolean product: entry `(i, j)` is true iff some `k` has `self[i,k]` and `rhs[k,j]`.
    ///
    /// Row-by-row Gustavson expansion with a dense marker over the output columns.
    pub fn bool_matmul(&self, rhs: &SparseBoolMatrix) -> SparseBoolMatrix {
        assert_eq!(
            self.n_cols, rhs.n_rows,
            "inner dimensions differ: {}x{} * {}x{}",
            self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
        );
        let mut marker = vec![usize::MAX; rhs.n_cols];
        let mut indptr = Vec::with_capacity(self.n_rows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for i in 0..self.n_rows {
            let start = indices.len();
            for &k in self.row(i) {
                for &j in rhs.row(k as usize) {
                    if marker[j as usize] != i {
                        marker[j as usize] = i;
                        indices.push(j);
                    }
                }
            }
            indices[start..].sort_unstable();
            indptr.push(indices.len());
        }
        SparseBoolMatrix {
            n_rows: self.n_rows,
            n_cols: rhs.n_cols,
            indptr,
            indices,
        }
    }

    /// Entries true in `self` and false in `other` (set difference).
    pub fn difference(&self, other: &SparseBoolMatrix) -> SparseBoolMatrix {
        self.merge_rows(other, false)
    }

    /// Entries true in both matrices.
    pub fn intersection(&self, other: &SparseBoolMatrix) -> SparseBoolMatrix {
        self.merge_rows(other, true)
    }

    /// Counts entries true in both matrices without materializing them.
    pub fn intersection_count(&self, other: &SparseBoolMatrix) -> usize {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        (0..self.n_rows)
            .map(|r| sorted_intersection_len(self.row(r), other.row(r)))
            .sum()
    }

    fn merge_rows(&self, other: &SparseBoolMatrix, keep_shared: bool) -> SparseBoolMatrix {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut indptr = Vec::with_capacity(self.n_rows + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for r in 0..self.n_rows {
            let b = other.row(r);
            let mut cursor = 0;
            for &c in self.row(r) {
                while cursor < b.len() && b[cursor] < c {
                    cursor += 1;
                }
                let shared = cursor < b.len() && b[cursor] == c;
                if shared == keep_shared {
                    indices.push(c);
                }
            }
            indptr.push(indices.len());
        }
        SparseBoolMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            indptr,
            indices,
        }
    }
}

fn sorted_intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn from_pairs_dedups_and_sorts() {
        let m = SparseBoolMatrix::from_pairs(3, 3, [(2, 1), (0, 2), (0, 0), (0, 2)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.row(0), &[0, 2]);
        assert_eq!(m.row(1), &[] as &[u32]);
        assert!(m.contains(2, 1));
        assert!(!m.contains(1, 1));
    }

    #[test]
    fn boolean_product_saturates() {
        // 0 -> {1, 2} -> 3 : two middle paths, one output entry
        let a = SparseBoolMatrix::from_pairs(4, 4, [(0, 1), (0, 2)]);
        let b = SparseBoolMatrix::from_pairs(4, 4, [(1, 3), (2, 3)]);
        let p = a.bool_matmul(&b);
        assert_eq!(p.iter().collect::<Vec<_>>(), vec![(0, 3)]);
    }

    #[test]
    fn product_matches_dense_reference() {
        let a_pairs = [(0, 1), (1, 2), (2, 0), (2, 2), (3, 3)];
        let b_pairs = [(0, 3), (1, 1), (2, 0), (2, 3), (3, 2)];
        let a = SparseBoolMatrix::from_pairs(4, 4, a_pairs);
        let b = SparseBoolMatrix::from_pairs(4, 4, b_pairs);
        let mut expected = BTreeSet::new();
        for &(i, k) in &a_pairs {
            for &(k2, j) in &b_pairs {
                if k == k2 {
                    expected.insert((i, j));
                }
            }
        }
        let got: BTreeSet<_> = a.bool_matmul(&b).iter().collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn difference_and_intersection_partition() {
        let a = SparseBoolMatrix::from_pairs(2, 3, [(0, 0), (0, 2), (1, 1)]);
        let b = SparseBoolMatrix::from_pairs(2, 3, [(0, 2), (1, 0)]);
        assert_eq!(a.difference(&b).iter().collect::<Vec<_>>(), vec![(0, 0), (1, 1)]);
        assert_eq!(a.intersection(&b).iter().collect::<Vec<_>>(), vec![(0, 2)]);
        assert_eq!(a.intersection_count(&b), 1);
    }

    #[test]
    fn rectangular_product_shape() {
        let a = SparseBoolMatrix::from_pairs(2, 3, [(1, 2)]);
        let b = SparseBoolMatrix::from_pairs(3, 5, [(2, 4)]);
        let p = a.bool_matmul(&b);
        assert_eq!((p.n_rows(), p.n_cols()), (2, 5));
        assert!(p.contains(1, 4));
    }
}
