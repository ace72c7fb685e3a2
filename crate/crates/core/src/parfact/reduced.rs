//! The reduced separator system `T_p`.
//!
//! `T_p` is block tridiagonal over the separators in global order, plus an
//! upper-right corner block when the matrix has one. It is solved as a scalar
//! banded matrix with partial pivoting; the last separator's columns are kept
//! as a dense border so the corner does not widen the band.

use std::ops::Range;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// Global scalar rows of each separator, in order.
    pub positions: Vec<Range<usize>>,
    pub diag: Vec<DenseMatrix>,
    /// `sub[k]` couples separator `k+1` to `k`.
    pub sub: Vec<DenseMatrix>,
    /// `sup[k]` couples separator `k` to `k+1`.
    pub sup: Vec<DenseMatrix>,
    /// First separator × last separator.
    pub corner: Option<DenseMatrix>,
    lu: BandLu,
}

impl ReducedSystem {
    /// Builds and factors the system. `sub`/`sup` have `q−1` entries.
    pub fn new(
        positions: Vec<Range<usize>>,
        diag: Vec<DenseMatrix>,
        sub: Vec<DenseMatrix>,
        sup: Vec<DenseMatrix>,
        corner: Option<DenseMatrix>,
    ) -> Result<Self> {
        let q = diag.len();
        if positions.len() != q || sub.len() + 1 != q.max(1) || sup.len() != sub.len() {
            return Err(Error::DimensionMismatch(format!(
                "reduced system with {q} diagonal blocks, {} sub and {} super blocks",
                sub.len(),
                sup.len()
            )));
        }
        let sizes: Vec<usize> = diag.iter().map(|d| d.rows()).collect();
        for (k, d) in diag.iter().enumerate() {
            if d.cols() != d.rows() || positions[k].len() != d.rows() {
                return Err(Error::DimensionMismatch(format!("diagonal block {k} is {}x{}", d.rows(), d.cols())));
            }
        }
        for k in 0..sub.len() {
            if sub[k].rows() != sizes[k + 1] || sub[k].cols() != sizes[k] || sup[k].rows() != sizes[k] || sup[k].cols() != sizes[k + 1] {
                return Err(Error::DimensionMismatch(format!("coupling blocks {k}")));
            }
        }
        if let Some(c) = &corner {
            if q == 0 || c.rows() != sizes[0] || c.cols() != sizes[q - 1] {
                return Err(Error::DimensionMismatch("corner block".into()));
            }
        }
        let lu = BandLu::factor(&sizes, &diag, &sub, &sup, corner.as_ref())?;
        Ok(ReducedSystem {
            positions,
            diag,
            sub,
            sup,
            corner,
            lu,
        })
    }

    /// Block order `q`.
    pub fn q(&self) -> usize {
        self.diag.len()
    }

    /// Scalar order.
    pub fn order(&self) -> usize {
        self.lu.n
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.diag.iter().map(|d| d.rows()).collect()
    }

    /// Operation count (multiply-adds and divisions) of the factorization.
    pub fn factor_ops(&self) -> u64 {
        self.lu.ops
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let starts = starts(&self.sizes());
        let n = self.order();
        let mut d = DenseMatrix::zeros(n, n);
        for (k, b) in self.diag.iter().enumerate() {
            d.set_block(starts[k], starts[k], b);
        }
        for k in 0..self.sub.len() {
            d.set_block(starts[k + 1], starts[k], &self.sub[k]);
            d.set_block(starts[k], starts[k + 1], &self.sup[k]);
        }
        if let Some(c) = &self.corner {
            let c0 = starts[self.q() - 1];
            for i in 0..c.rows() {
                for j in 0..c.cols() {
                    d[(i, c0 + j)] += c[(i, j)];
                }
            }
        }
        d
    }

    /// Solves `T_p x = rhs`; also returns the operation count of the solve.
    pub fn solve_counted(&self, rhs: &[f64]) -> Result<(Vec<f64>, u64)> {
        if rhs.len() != self.order() {
            return Err(Error::DimensionMismatch(format!(
                "reduced rhs of length {} for order {}",
                rhs.len(),
                self.order()
            )));
        }
        Ok(self.lu.solve(rhs))
    }
}

/// Solves the reduced system with its stored factors.
pub fn solve_reduced(r: &ReducedSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    r.solve_counted(rhs).map(|(x, _)| x)
}

fn starts(sizes: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    for &z in sizes {
        s.push(acc);
        acc += z;
    }
    s.push(acc);
    s
}

/// Scalar banded LU with partial pivoting and a dense right border.
#[derive(Debug, Clone)]
struct BandLu {
    n: usize,
    // columns < nm live in the band, the rest in the border
    nm: usize,
    kl: usize,
    ku2: usize,
    width: usize,
    band: Vec<f64>,
    border: Vec<f64>,
    bw: usize,
    piv: Vec<usize>,
    mult: Vec<Vec<f64>>,
    ops: u64,
}

impl BandLu {
    fn factor(
        sizes: &[usize],
        diag: &[DenseMatrix],
        sub: &[DenseMatrix],
        sup: &[DenseMatrix],
        corner: Option<&DenseMatrix>,
    ) -> Result<Self> {
        let q = sizes.len();
        let st = starts(sizes);
        let n = st[q];
        let bw = if corner.is_some() && q > 0 { sizes[q - 1] } else { 0 };
        let nm = n - bw;
        let mut kl = sizes.first().map_or(0, |s| s.saturating_sub(1));
        for w in sizes.windows(2) {
            kl = kl.max(w[0] + w[1] - 1);
        }
        let ku2 = 2 * kl;
        let width = kl + ku2 + 1;
        let mut lu = BandLu {
            n,
            nm,
            kl,
            ku2,
            width,
            band: vec![0.0; n * width],
            border: vec![0.0; n * bw],
            bw,
            piv: vec![0; n],
            mult: Vec::with_capacity(n),
            ops: 0,
        };
        let put = |lu: &mut BandLu, r0: usize, c0: usize, b: &DenseMatrix| {
            for i in 0..b.rows() {
                for j in 0..b.cols() {
                    *lu.at(r0 + i, c0 + j) += b[(i, j)];
                }
            }
        };
        for k in 0..q {
            put(&mut lu, st[k], st[k], &diag[k]);
        }
        for k in 0..q.saturating_sub(1) {
            put(&mut lu, st[k + 1], st[k], &sub[k]);
            put(&mut lu, st[k], st[k + 1], &sup[k]);
        }
        if let Some(c) = corner {
            put(&mut lu, 0, st[q - 1], c);
        }
        lu.eliminate()?;
        Ok(lu)
    }

    fn at(&mut self, i: usize, c: usize) -> &mut f64 {
        if c >= self.nm {
            &mut self.border[i * self.bw + c - self.nm]
        } else {
            debug_assert!(c + self.kl >= i && c <= i + self.ku2);
            &mut self.band[i * self.width + c + self.kl - i]
        }
    }

    fn get(&self, i: usize, c: usize) -> f64 {
        if c >= self.nm {
            self.border[i * self.bw + c - self.nm]
        } else {
            self.band[i * self.width + c + self.kl - i]
        }
    }

    /// Columns right of `j` that row `j` may hold after pivoting.
    fn row_cols(&self, j: usize) -> impl Iterator<Item = usize> {
        let band_end = (j + self.ku2 + 1).min(self.nm);
        (j + 1..band_end).chain(self.nm.max(j + 1)..self.n)
    }

    fn last_row(&self, j: usize) -> usize {
        if j >= self.nm {
            self.n
        } else {
            (j + self.kl + 1).min(self.n)
        }
    }

    fn eliminate(&mut self) -> Result<()> {
        let n = self.n;
        for j in 0..n {
            let end = self.last_row(j);
            let mut p = j;
            for i in j + 1..end {
                if self.get(i, j).abs() > self.get(p, j).abs() {
                    p = i;
                }
            }
            let d = self.get(p, j);
            if d == 0.0 || !d.is_finite() {
                return Err(Error::SingularReducedSystem(j));
            }
            self.piv[j] = p;
            if p != j {
                let cols: Vec<usize> = std::iter::once(j).chain(self.row_cols(j)).collect();
                for c in cols {
                    let t = self.get(j, c);
                    *self.at(j, c) = self.get(p, c);
                    *self.at(p, c) = t;
                }
            }
            let cols: Vec<usize> = self.row_cols(j).collect();
            let mut ls = Vec::with_capacity(end - j - 1);
            for i in j + 1..end {
                let l = self.get(i, j) / d;
                self.ops += 1;
                *self.at(i, j) = 0.0;
                for &c in &cols {
                    let v = self.get(j, c);
                    *self.at(i, c) -= l * v;
                }
                self.ops += cols.len() as u64;
                ls.push(l);
            }
            self.mult.push(ls);
        }
        Ok(())
    }

    fn solve(&self, rhs: &[f64]) -> (Vec<f64>, u64) {
        let mut b = rhs.to_vec();
        let mut ops = 0u64;
        for j in 0..self.n {
            b.swap(j, self.piv[j]);
            let bj = b[j];
            for (t, l) in self.mult[j].iter().enumerate() {
                b[j + 1 + t] -= l * bj;
            }
            ops += self.mult[j].len() as u64;
        }
        for j in (0..self.n).rev() {
            let mut s = b[j];
            for c in self.row_cols(j) {
                s -= self.get(j, c) * b[c];
                ops += 1;
            }
            b[j] = s / self.get(j, j);
            ops += 1;
        }
        (b, ops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![v]])
    }

    #[test]
    fn two_by_two_hand_case() {
        let r = ReducedSystem::new(
            vec![0..1, 1..2],
            vec![scalar(2.0), scalar(2.0)],
            vec![scalar(1.0)],
            vec![scalar(1.0)],
            None,
        )
        .unwrap();
        let x = solve_reduced(&r, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_passes_rhs_through() {
        let q = 4;
        let r = ReducedSystem::new(
            (0..q).map(|k| 2 * k..2 * k + 2).collect(),
            vec![DenseMatrix::identity(2); q],
            vec![DenseMatrix::zeros(2, 2); q - 1],
            vec![DenseMatrix::zeros(2, 2); q - 1],
            None,
        )
        .unwrap();
        let rhs: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(solve_reduced(&r, &rhs).unwrap(), rhs);
    }

    #[test]
    fn pivoting_and_corner() {
        // zero diagonal forces row exchanges; corner couples first and last
        let z = DenseMatrix::zeros(1, 1);
        let r = ReducedSystem::new(
            vec![0..1, 1..2, 2..3, 3..4],
            vec![z.clone(), z.clone(), z.clone(), z.clone()],
            vec![scalar(1.0), scalar(1.0), scalar(1.0)],
            vec![z.clone(), z.clone(), z],
            Some(scalar(1.0)),
        )
        .unwrap();
        // cyclic shift: x_{k−1} = rhs_k, x_3 = rhs_0
        let x = solve_reduced(&r, &[4.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(r.factor_ops() > 0);
    }

    #[test]
    fn singular_is_reported() {
        let r = ReducedSystem::new(vec![0..1, 1..2], vec![scalar(1.0), scalar(1.0)], vec![scalar(1.0)], vec![scalar(1.0)], None);
        assert!(matches!(r, Err(Error::SingularReducedSystem(1))));
    }
}
