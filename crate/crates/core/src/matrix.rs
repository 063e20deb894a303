//! Compressed sparse row storage for design matrices.
//!
//! TF-IDF blocks are tens of thousands of columns wide but only a few hundred
//! entries per row are nonzero, so every modality shares this representation.
//! Dense modalities simply store all of their nonzero entries.

/// A sparse vector as `(column, value)` pairs with strictly increasing columns.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(n_cols: usize) -> Self {
        SparseMatrix {
            n_cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(n_cols: usize, rows: &[Vec<f64>]) -> Self {
        let mut m = SparseMatrix::new(n_cols);
        for row in rows {
            m.push_dense_row(row);
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Append a row given as sorted `(column, value)` pairs.
    ///
    /// Panics if a column index is out of range or not increasing.
    pub fn push_sparse_row(&mut self, entries: &[(usize, f64)]) {
        let mut prev = None;
        for &(j, v) in entries {
            assert!(j < self.n_cols, "column {j} out of range {}", self.n_cols);
            assert!(prev.is_none_or(|p| j > p), "columns must increase");
            prev = Some(j);
            self.indices.push(j);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
    }

    /// Append a dense row; exact zeros are not stored.
    pub fn push_dense_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_cols, "dense row width");
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                self.indices.push(j);
                self.values.push(v);
            }
        }
        self.indptr.push(self.indices.len());
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_dense(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        let (idx, val) = self.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            out[j] = v;
        }
        out
    }

    pub fn row_sparse(&self, i: usize) -> SparseVec {
        let (idx, val) = self.row(i);
        idx.iter().copied().zip(val.iter().copied()).collect()
    }

    pub fn row_dot(&self, i: usize, w: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, &v)| v * w[j]).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// A new matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        let mut out = SparseMatrix::new(self.n_cols);
        for &i in rows {
            let (idx, val) = self.row(i);
            out.indices.extend_from_slice(idx);
            out.values.extend_from_slice(val);
            out.indptr.push(out.indices.len());
        }
        out
    }

    /// Column-wise concatenation. All blocks must have the same row count.
    pub fn hstack(blocks: &[&SparseMatrix]) -> SparseMatrix {
        let n_rows = blocks.first().map_or(0, |b| b.n_rows());
        assert!(
            blocks.iter().all(|b| b.n_rows() == n_rows),
            "row counts differ"
        );
        let n_cols = blocks.iter().map(|b| b.n_cols).sum();
        let mut out = SparseMatrix::new(n_cols);
        for i in 0..n_rows {
            let mut offset = 0;
            for b in blocks {
                let (idx, val) = b.row(i);
                out.indices.extend(idx.iter().map(|&j| j + offset));
                out.values.extend_from_slice(val);
                offset += b.n_cols;
            }
            out.indptr.push(out.indices.len());
        }
        out
    }
}
