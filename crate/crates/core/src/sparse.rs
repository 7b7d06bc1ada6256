//! Compressed sparse row matrices.
//!
//! The evaluation stage multiplies normalized adjacencies and sparse feature
//! matrices against dense weight blocks; both are far too sparse for dense
//! products at dataset scale.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

/// CSR matrix over f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl Csr {
    /// Build from (row, col, value) triplets. Duplicate coordinates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(u32, u32, f64)>) -> Csr {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices: Vec<u32> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in triplets {
            debug_assert!((r as usize) < rows && (c as usize) < cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Csr {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    /// Build from a dense matrix, keeping entries with |x| > 0.
    pub fn from_dense(a: ArrayView2<'_, f64>) -> Csr {
        let (rows, cols) = a.dim();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..rows {
            for j in 0..cols {
                let v = a[[i, j]];
                if v != 0.0 {
                    indices.push(j as u32);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    /// Build from a dense f32 matrix (feature matrices are stored in f32).
    pub fn from_dense_f32(a: ndarray::ArrayView2<'_, f32>) -> Csr {
        let (rows, cols) = a.dim();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..rows {
            for j in 0..cols {
                let v = a[[i, j]];
                if v != 0.0 {
                    indices.push(j as u32);
                    values.push(v as f64);
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let a = self.indptr[i];
        let b = self.indptr[i + 1];
        (&self.indices[a..b], &self.values[a..b])
    }

    /// Sparse-dense product: self (r×c) * b (c×k) -> dense (r×k).
    ///
    /// Rows are independent, so the parallel path is deterministic.
    pub fn matmul_dense(&self, b: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(self.cols, b.nrows(), "dimension mismatch in csr matmul");
        let k = b.ncols();
        let mut out = Array2::<f64>::zeros((self.rows, k));
        if k == 0 || self.rows == 0 {
            return out;
        }
        let work = self.nnz().saturating_mul(k);
        // a contiguous b enables tight slice loops in the hot path
        let b_owned;
        let b_cont = match b.as_slice() {
            Some(s) => s,
            None => {
                b_owned = b.to_owned();
                b_owned.as_slice().expect("owned array is contiguous")
            }
        };
        {
            let out_slice = out.as_slice_mut().expect("freshly allocated array is contiguous");
            let body = |(i, out_row): (usize, &mut [f64])| {
                let (cols, vals) = self.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    let b_row = &b_cont[c as usize * k..c as usize * k + k];
                    for (o, &bv) in out_row.iter_mut().zip(b_row) {
                        *o += v * bv;
                    }
                }
            };
            if work > 1_000_000 {
                out_slice.par_chunks_mut(k).enumerate().for_each(body);
            } else {
                out_slice.chunks_mut(k).enumerate().for_each(body);
            }
        }
        out
    }

    /// Sparse-sparse product with a dense result: self (r×c) * other (c×k).
    pub fn matmul_csr_dense(&self, other: &Csr) -> Array2<f64> {
        assert_eq!(self.cols, other.rows(), "dimension mismatch in csr-csr matmul");
        let k = other.cols();
        let mut out = Array2::<f64>::zeros((self.rows, k));
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let mut out_row = out.row_mut(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(c as usize);
                for (&oc, &ov) in ocols.iter().zip(ovals) {
                    out_row[oc as usize] += v * ov;
                }
            }
        }
        out
    }

    /// Transposed sparse-dense product: selfᵀ (c×r) * d (r×k) -> dense (c×k).
    pub fn transpose_matmul_dense(&self, d: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(self.rows, d.nrows(), "dimension mismatch in csrᵀ matmul");
        let k = d.ncols();
        let mut out = Array2::<f64>::zeros((self.cols, k));
        if k == 0 || self.rows == 0 {
            return out;
        }
        let d_owned;
        let d_cont = match d.as_slice() {
            Some(s) => s,
            None => {
                d_owned = d.to_owned();
                d_owned.as_slice().expect("owned array is contiguous")
            }
        };
        let out_slice = out.as_slice_mut().expect("freshly allocated array is contiguous");
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let d_row = &d_cont[i * k..i * k + k];
            for (&c, &v) in cols.iter().zip(vals) {
                let out_row = &mut out_slice[c as usize * k..c as usize * k + k];
                for (o, &dv) in out_row.iter_mut().zip(d_row) {
                    *o += v * dv;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::<f64>::zeros((self.rows, self.cols));
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                a[[i, c as usize]] += v;
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_roundtrip() {
        let t = vec![(0u32, 1u32, 2.0), (2, 0, -1.0), (0, 1, 3.0), (1, 2, 4.0)];
        let m = Csr::from_triplets(3, 3, t);
        assert_eq!(m.nnz(), 3); // duplicate (0,1) merged
        let d = m.to_dense();
        assert_eq!(d, array![[0.0, 5.0, 0.0], [0.0, 0.0, 4.0], [-1.0, 0.0, 0.0]]);
    }

    #[test]
    fn matmul_matches_dense() {
        let m = Csr::from_dense(array![[1.0, 0.0, 2.0], [0.0, 3.0, 0.0]].view());
        let b = array![[1.0, 1.0], [2.0, 0.0], [0.0, 5.0]];
        let got = m.matmul_dense(b.view());
        assert_eq!(got, array![[1.0, 11.0], [6.0, 0.0]]);
        let gt = m.transpose_matmul_dense(array![[1.0], [1.0]].view());
        assert_eq!(gt, array![[1.0], [3.0], [2.0]]);
    }

    #[test]
    fn empty_rows_are_preserved() {
        let m = Csr::from_triplets(4, 2, vec![(3, 1, 7.0)]);
        assert_eq!(m.row(0), (&[][..], &[][..]));
        assert_eq!(m.row(3), (&[1u32][..], &[7.0][..]));
    }
}
