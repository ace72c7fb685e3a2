//! Block tridiagonal chains with variable block sizes, stored flat.
//!
//! Every partitioned matrix is handled in this view: the rows are grouped
//! into consecutive "superblocks" wide enough that only neighbouring
//! superblocks couple.

use std::ops::Range;

use crate::dense::DenseMatrix;
use crate::structmat::StructuredMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiag {
    sizes: Vec<usize>,
    starts: Vec<usize>,
    diag: Vec<f64>,
    diag_off: Vec<usize>,
    // lower[k] = A(k, k-1); empty for k = 0
    lower: Vec<f64>,
    lower_off: Vec<usize>,
    // upper[k] = A(k, k+1); empty for the last block
    upper: Vec<f64>,
    upper_off: Vec<usize>,
}

impl BlockTridiag {
    /// Zero chain with the given block sizes.
    pub fn zeros(sizes: Vec<usize>) -> Self {
        let k = sizes.len();
        let mut starts = Vec::with_capacity(k + 1);
        let mut diag_off = Vec::with_capacity(k + 1);
        let mut lower_off = Vec::with_capacity(k + 1);
        let mut upper_off = Vec::with_capacity(k + 1);
        let (mut s, mut d, mut l, mut u) = (0, 0, 0, 0);
        for i in 0..k {
            starts.push(s);
            diag_off.push(d);
            lower_off.push(l);
            upper_off.push(u);
            s += sizes[i];
            d += sizes[i] * sizes[i];
            if i > 0 {
                l += sizes[i] * sizes[i - 1];
            }
            if i + 1 < k {
                u += sizes[i] * sizes[i + 1];
            }
        }
        starts.push(s);
        diag_off.push(d);
        lower_off.push(l);
        upper_off.push(u);
        BlockTridiag {
            sizes,
            starts,
            diag: vec![0.0; d],
            diag_off,
            lower: vec![0.0; l],
            lower_off,
            upper: vec![0.0; u],
            upper_off,
        }
    }

    /// Copies the rows/columns `offset..offset + Σ sizes` of `a` into chain form.
    /// Entries of `a` outside the three block diagonals are ignored.
    pub fn from_matrix(a: &StructuredMatrix, offset: usize, sizes: Vec<usize>) -> Self {
        let mut t = Self::zeros(sizes);
        for k in 0..t.len() {
            let r0 = offset + t.starts[k];
            let nk = t.sizes[k];
            fill(&mut t.diag[t.diag_off[k]..t.diag_off[k + 1]], a, r0, r0, nk, nk);
            if k > 0 {
                let c0 = offset + t.starts[k - 1];
                let nc = t.sizes[k - 1];
                fill(&mut t.lower[t.lower_off[k]..t.lower_off[k + 1]], a, r0, c0, nk, nc);
            }
            if k + 1 < t.len() {
                let c0 = offset + t.starts[k + 1];
                let nc = t.sizes[k + 1];
                fill(&mut t.upper[t.upper_off[k]..t.upper_off[k + 1]], a, r0, c0, nk, nc);
            }
        }
        t
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Scalar order.
    pub fn order(&self) -> usize {
        *self.starts.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    /// Scalar offset of block `k`.
    pub fn start(&self, k: usize) -> usize {
        self.starts[k]
    }

    pub fn rows_of(&self, k: usize) -> Range<usize> {
        self.starts[k]..self.starts[k + 1]
    }

    pub fn diag(&self, k: usize) -> &[f64] {
        &self.diag[self.diag_off[k]..self.diag_off[k + 1]]
    }

    pub fn diag_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.diag[self.diag_off[k]..self.diag_off[k + 1]]
    }

    /// `A(k, k-1)`, `size(k) × size(k-1)`.
    pub fn lower(&self, k: usize) -> &[f64] {
        &self.lower[self.lower_off[k]..self.lower_off[k + 1]]
    }

    pub fn lower_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.lower[self.lower_off[k]..self.lower_off[k + 1]]
    }

    /// `A(k, k+1)`, `size(k) × size(k+1)`.
    pub fn upper(&self, k: usize) -> &[f64] {
        &self.upper[self.upper_off[k]..self.upper_off[k + 1]]
    }

    pub fn upper_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.upper[self.upper_off[k]..self.upper_off[k + 1]]
    }

    pub fn diag_block(&self, k: usize) -> DenseMatrix {
        DenseMatrix::from_vec(self.sizes[k], self.sizes[k], self.diag(k).to_vec()).unwrap()
    }

    pub fn lower_block(&self, k: usize) -> DenseMatrix {
        DenseMatrix::from_vec(self.sizes[k], self.sizes[k - 1], self.lower(k).to_vec()).unwrap()
    }

    pub fn upper_block(&self, k: usize) -> DenseMatrix {
        DenseMatrix::from_vec(self.sizes[k], self.sizes[k + 1], self.upper(k).to_vec()).unwrap()
    }

    /// The sub-chain of blocks `lo..hi`.
    pub fn slice(&self, lo: usize, hi: usize) -> BlockTridiag {
        let mut t = Self::zeros(self.sizes[lo..hi].to_vec());
        for k in lo..hi {
            t.diag_mut(k - lo).copy_from_slice(self.diag(k));
            if k > lo {
                t.lower_mut(k - lo).copy_from_slice(self.lower(k));
            }
            if k + 1 < hi {
                t.upper_mut(k - lo).copy_from_slice(self.upper(k));
            }
        }
        t
    }

    /// ∞-norm of block row `k` (`[lower diag upper]`).
    pub fn row_norm(&self, k: usize) -> f64 {
        let nk = self.sizes[k];
        let mut best: f64 = 0.0;
        for i in 0..nk {
            let mut s = 0.0;
            let row = |data: &[f64], cols: usize| -> f64 { data[i * cols..(i + 1) * cols].iter().map(|v| v.abs()).sum() };
            s += row(self.diag(k), nk);
            if k > 0 {
                s += row(self.lower(k), self.sizes[k - 1]);
            }
            if k + 1 < self.len() {
                s += row(self.upper(k), self.sizes[k + 1]);
            }
            best = best.max(s);
        }
        best
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.order()];
        for k in 0..self.len() {
            let nk = self.sizes[k];
            let yk = &mut y[self.starts[k]..self.starts[k + 1]];
            if k > 0 {
                let xs = &x[self.starts[k - 1]..self.starts[k]];
                crate::dense::gemv_acc(yk, self.lower(k), xs, nk, self.sizes[k - 1], 1.0);
            }
            crate::dense::gemv_acc(yk, self.diag(k), &x[self.starts[k]..self.starts[k + 1]], nk, nk, 1.0);
            if k + 1 < self.len() {
                let xs = &x[self.starts[k + 1]..self.starts[k + 2]];
                crate::dense::gemv_acc(yk, self.upper(k), xs, nk, self.sizes[k + 1], 1.0);
            }
        }
        y
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.order();
        let mut d = DenseMatrix::zeros(n, n);
        for k in 0..self.len() {
            let r0 = self.starts[k];
            d.set_block(r0, r0, &self.diag_block(k));
            if k > 0 {
                d.set_block(r0, self.starts[k - 1], &self.lower_block(k));
            }
            if k + 1 < self.len() {
                d.set_block(r0, self.starts[k + 1], &self.upper_block(k));
            }
        }
        d
    }
}

fn fill(dst: &mut [f64], a: &StructuredMatrix, r0: usize, c0: usize, rows: usize, cols: usize) {
    for i in 0..rows {
        let band = a.band_cols(r0 + i);
        let lo = band.start.max(c0);
        let hi = band.end.min(c0 + cols);
        for j in lo..hi {
            dst[i * cols + (j - c0)] = a.entry(r0 + i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structmat::MatrixKind;

    #[test]
    fn chain_reproduces_banded_matrix() {
        let a = StructuredMatrix::generate_random(MatrixKind::Banded, 11, 1, 2, 1, 3, 0.0).unwrap();
        let t = BlockTridiag::from_matrix(&a, 0, vec![2, 2, 3, 2, 2]);
        assert_eq!(t.to_dense(), a.to_dense().unwrap());
        let x: Vec<f64> = (0..11).map(|i| i as f64 - 4.0).collect();
        let y = t.matvec(&x);
        let y0 = a.matvec(&x).unwrap();
        for (p, q) in y.iter().zip(&y0) {
            assert!((p - q).abs() < 1e-13);
        }
        let s = t.slice(1, 4);
        assert_eq!(s.to_dense(), a.to_dense().unwrap().block(2, 2, 7, 7));
    }
}
