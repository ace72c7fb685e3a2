//! Alternate row and column elimination on block lower bidiagonal bodies.
//!
//! Each diagonal block is factored as `P_k D_k Q_k = L_k U_k`, alternating a
//! column pivot (largest entry of the pivot row) with a row pivot (largest
//! entry of the pivot column). Then `N = blockdiag(P_kᵀ L_k)` and `S` is block
//! lower bidiagonal with `S_kk = U_k Q_kᵀ`, `S_{k,k−1} = L_k⁻¹ P_k E_k`, so no
//! fill-in crosses block rows.

use super::BodySolve;
use crate::blocktri::BlockTridiag;
use crate::dense::{gemv_acc, gemv_t_acc, lu_apply_pl_inv, lu_apply_u_inv, lu_apply_u_inv_t, map_columns};

#[derive(Debug, Clone)]
pub(crate) struct ArceFactor {
    // diag: LU; lower: L_k⁻¹ P_k E_k
    f: BlockTridiag,
    rowp: Vec<usize>,
    colp: Vec<usize>,
    pub(crate) growth: f64,
}

pub(crate) enum ArceError {
    Upper,
    Singular(usize),
}

/// In-place `P A Q = L U` with alternating pivot choice. `rowp`/`colp`
/// record the exchange made at each step (identity when unused).
pub(crate) fn alternating_lu(a: &mut [f64], n: usize, rowp: &mut [usize], colp: &mut [usize]) -> Result<(), usize> {
    for j in 0..n {
        rowp[j] = j;
        colp[j] = j;
        if j % 2 == 0 {
            let mut best = j;
            for c in j + 1..n {
                if a[j * n + c].abs() > a[j * n + best].abs() {
                    best = c;
                }
            }
            if best != j {
                for i in 0..n {
                    a.swap(i * n + j, i * n + best);
                }
            }
            colp[j] = best;
        } else {
            let mut best = j;
            for r in j + 1..n {
                if a[r * n + j].abs() > a[best * n + j].abs() {
                    best = r;
                }
            }
            if best != j {
                for c in 0..n {
                    a.swap(j * n + c, best * n + c);
                }
            }
            rowp[j] = best;
        }
        let d = a[j * n + j];
        if d == 0.0 || !d.is_finite() {
            return Err(j);
        }
        for i in j + 1..n {
            let l = a[i * n + j] / d;
            a[i * n + j] = l;
            if l != 0.0 {
                for c in j + 1..n {
                    a[i * n + c] -= l * a[j * n + c];
                }
            }
        }
    }
    Ok(())
}

/// `x <- Q x` for the recorded column exchanges.
fn apply_q(colp: &[usize], x: &mut [f64]) {
    for j in (0..colp.len()).rev() {
        x.swap(j, colp[j]);
    }
}

/// `x <- Qᵀ x`.
fn apply_qt(colp: &[usize], x: &mut [f64]) {
    for j in 0..colp.len() {
        x.swap(j, colp[j]);
    }
}

impl ArceFactor {
    pub(crate) fn factor(body: &BlockTridiag) -> Result<Self, ArceError> {
        let kk = body.len();
        for k in 0..kk.saturating_sub(1) {
            if body.upper(k).iter().any(|v| *v != 0.0) {
                return Err(ArceError::Upper);
            }
        }
        let mut f = body.clone();
        let n = body.order();
        let mut rowp = vec![0; n];
        let mut colp = vec![0; n];
        let mut amax: f64 = 0.0;
        let mut umax: f64 = 0.0;
        for k in 0..kk {
            let nk = f.size(k);
            let r = f.rows_of(k);
            amax = amax.max(f.diag(k).iter().fold(0.0, |m, v| m.max(v.abs())));
            alternating_lu(f.diag_mut(k), nk, &mut rowp[r.clone()], &mut colp[r.clone()])
                .map_err(|c| ArceError::Singular(r.start + c))?;
            for i in 0..nk {
                for j in i..nk {
                    umax = umax.max(f.diag(k)[i * nk + j].abs());
                }
            }
            if k > 0 {
                let np = f.size(k - 1);
                let d = f.diag(k).to_vec();
                let p = rowp[r].to_vec();
                map_columns(f.lower_mut(k), nk, np, |c| lu_apply_pl_inv(&d, nk, &p, c));
            }
        }
        let growth = if amax > 0.0 { umax / amax } else { 1.0 };
        Ok(ArceFactor { f, rowp, colp, growth })
    }
}

impl BodySolve for ArceFactor {
    fn n_inv(&self, x: &mut [f64]) {
        for k in 0..self.f.len() {
            let r = self.f.rows_of(k);
            lu_apply_pl_inv(self.f.diag(k), r.len(), &self.rowp[r.clone()], &mut x[r]);
        }
    }

    fn s_inv(&self, x: &mut [f64]) {
        let f = &self.f;
        for k in 0..f.len() {
            let nk = f.size(k);
            if k > 0 {
                let (a, b) = x.split_at_mut(f.start(k));
                let np = f.size(k - 1);
                gemv_acc(&mut b[..nk], f.lower(k), &a[f.rows_of(k - 1)], nk, np, -1.0);
            }
            let r = f.rows_of(k);
            lu_apply_u_inv(f.diag(k), nk, &mut x[r.clone()]);
            apply_q(&self.colp[r.clone()], &mut x[r]);
        }
    }

    fn s_inv_t(&self, x: &mut [f64]) {
        let f = &self.f;
        for k in (0..f.len()).rev() {
            let nk = f.size(k);
            if k + 1 < f.len() {
                let (a, b) = x.split_at_mut(f.start(k + 1));
                let nn = f.size(k + 1);
                gemv_t_acc(&mut a[f.rows_of(k)], f.lower(k + 1), &b[..nn], nn, nk, -1.0);
            }
            let r = f.rows_of(k);
            apply_qt(&self.colp[r.clone()], &mut x[r.clone()]);
            lu_apply_u_inv_t(f.diag(k), nk, &mut x[r]);
        }
    }
}
