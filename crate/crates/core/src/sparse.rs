//! Compressed sparse row matrices.
//!
//! Relation incidences, meta-path commuting matrices and normalized
//! propagation operators are all stored here. Column indices within a row are
//! kept sorted, so two matrices built from the same entries compare equal.

use std::ops::{AddAssign, Mul};

use ndarray::{Array2, ArrayView2};
use num_traits::Zero;

#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T> Csr<T>
where
    T: Copy + Zero + AddAssign + Mul<Output = T> + PartialEq,
{
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Csr { rows, cols, indptr: vec![0; rows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize, one: T) -> Self {
        Csr { rows: n, cols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: vec![one; n] }
    }

    /// Builds from coordinate triplets; duplicate coordinates are summed and
    /// explicit zeros dropped.
    ///
    /// Panics if a coordinate is out of bounds.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));

        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indptr[r + 1] += 1;
                indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Csr { rows, cols, indptr, indices, values }.pruned()
    }

    fn pruned(self) -> Self {
        if self.values.iter().all(|v| *v != T::zero()) {
            return self;
        }
        let mut out = Csr::zeros(self.rows, self.cols);
        out.indices.reserve(self.indices.len());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                if v != T::zero() {
                    out.indices.push(c);
                    out.values.push(v);
                }
            }
            out.indptr[r + 1] = out.indices.len();
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => T::zero(),
        }
    }

    /// All stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.rows).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        Csr { rows: self.cols, cols: self.rows, indptr, indices, values }
    }

    /// Sparse product `self · rhs` (Gustavson row accumulation).
    pub fn matmul(&self, rhs: &Csr<T>) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch: {:?} x {:?}", self.shape(), rhs.shape());
        let mut acc = vec![T::zero(); rhs.cols];
        let mut seen = vec![false; rhs.cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut out = Csr::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c] != T::zero() {
                    out.indices.push(c);
                    out.values.push(acc[c]);
                }
                acc[c] = T::zero();
                seen[c] = false;
            }
            touched.clear();
            out.indptr[r + 1] = out.indices.len();
        }
        out
    }

    /// Replaces every stored value with `one`.
    pub fn binarized(&self, one: T) -> Self {
        Csr { values: vec![one; self.values.len()], ..self.clone() }
    }

    pub fn without_diagonal(&self) -> Self {
        let mut out = Csr::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                if c != r {
                    out.indices.push(c);
                    out.values.push(v);
                }
            }
            out.indptr[r + 1] = out.indices.len();
        }
        out
    }

    pub fn map<U, F>(&self, f: F) -> Csr<U>
    where
        F: Fn(usize, usize, T) -> U,
    {
        let mut values = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                values.push(f(r, c, v));
            }
        }
        Csr { rows: self.rows, cols: self.cols, indptr: self.indptr.clone(), indices: self.indices.clone(), values }
    }

    /// Entrywise union of two same-shaped matrices, combining shared entries with `+`.
    pub fn union(&self, other: &Csr<T>) -> Self {
        assert_eq!(self.shape(), other.shape());
        let mut triplets = self.triplets();
        triplets.extend(other.triplets());
        Csr::from_triplets(self.rows, self.cols, &triplets)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }
}

impl Csr<f64> {
    /// Sparse-dense product `self · rhs`.
    pub fn dot_dense(&self, rhs: &ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(self.cols, rhs.nrows(), "sparse-dense shape mismatch");
        let width = rhs.ncols();
        let mut out = Array2::<f64>::zeros((self.rows, width));
        for r in 0..self.rows {
            let mut out_row = out.row_mut(r);
            for (k, a) in self.row(r) {
                out_row.scaled_add(a, &rhs.row(k));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[[r, c]] = v;
            }
        }
        out
    }
}

impl Csr<u64> {
    pub fn to_f64(&self) -> Csr<f64> {
        self.map(|_, _, v| v as f64)
    }

    pub fn to_dense_counts(&self) -> Vec<Vec<u64>> {
        let mut out = vec![vec![0u64; self.cols]; self.rows];
        for (r, dense) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                dense[c] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_accumulate_and_sort() {
        let m = Csr::from_triplets(2, 3, &[(1, 2, 1u64), (0, 1, 2), (1, 0, 3), (1, 2, 4)]);
        assert_eq!(m.triplets(), vec![(0, 1, 2), (1, 0, 3), (1, 2, 5)]);
        assert_eq!(m.get(1, 2), 5);
        assert_eq!(m.get(0, 0), 0);
    }

    #[test]
    fn transpose_of_rectangular() {
        let m = Csr::from_triplets(2, 3, &[(0, 2, 1u64), (1, 0, 7)]);
        let t = m.transpose();
        assert_eq!(t.shape(), (3, 2));
        assert_eq!(t.triplets(), vec![(0, 1, 7), (2, 0, 1)]);
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn matmul_matches_hand_product() {
        // [[1,2],[0,3]] * [[4,0],[5,6]] = [[14,12],[15,18]]
        let a = Csr::from_triplets(2, 2, &[(0, 0, 1u64), (0, 1, 2), (1, 1, 3)]);
        let b = Csr::from_triplets(2, 2, &[(0, 0, 4u64), (1, 0, 5), (1, 1, 6)]);
        let c = a.matmul(&b);
        assert_eq!(c.to_dense_counts(), vec![vec![14, 12], vec![15, 18]]);
    }

    #[test]
    fn zero_product_is_empty() {
        let a: Csr<u64> = Csr::zeros(3, 4);
        let b: Csr<u64> = Csr::zeros(4, 2);
        let c = a.matmul(&b);
        assert_eq!(c.shape(), (3, 2));
        assert_eq!(c.nnz(), 0);
    }

    #[test]
    fn dense_product_agrees_with_to_dense() {
        let a = Csr::from_triplets(2, 3, &[(0, 0, 0.5), (0, 2, -1.0), (1, 1, 2.0)]);
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        assert_eq!(a.dot_dense(&x.view()), a.to_dense().dot(&x));
    }

    #[test]
    fn diagonal_removal_and_union() {
        let a = Csr::from_triplets(2, 2, &[(0, 0, 1u64), (0, 1, 1)]);
        assert_eq!(a.without_diagonal().triplets(), vec![(0, 1, 1)]);
        let b = Csr::from_triplets(2, 2, &[(1, 0, 1u64), (0, 1, 1)]);
        assert_eq!(a.union(&b).triplets(), vec![(0, 0, 1), (0, 1, 2), (1, 0, 1)]);
    }
}
