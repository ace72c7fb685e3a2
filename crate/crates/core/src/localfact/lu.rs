//! Block LU on a superblock chain.
//!
//! With `Ŝ_0 = D_0`, `Ŝ_k = D_k − E_k Ŝ_{k−1}⁻¹ F_{k−1}` and `P_k Ŝ_k = L_k U_k`:
//! `N` is block lower bidiagonal (`P_kᵀL_k`, `E_k U_{k−1}⁻¹`) and `S` block
//! upper bidiagonal (`U_k`, `G_k = L_k⁻¹ P_k F_k`).

use super::BodySolve;
use crate::blocktri::BlockTridiag;
use crate::dense::{gemm_acc, gemv_acc, gemv_t_acc, lu_apply_pl_inv, lu_apply_u_inv, lu_apply_u_inv_t, lu_factor, map_columns, singular_values};

#[derive(Debug, Clone)]
pub(crate) struct BlockLu {
    // diag: LU of Ŝ_k; lower: E_k; upper: G_k
    f: BlockTridiag,
    piv: Vec<usize>,
}

pub(crate) enum LuOutcome {
    Done(BlockLu),
    Trigger(usize),
}

impl BlockLu {
    /// Factors `body`. With `trigger = Some(tol)` a pivot block whose
    /// smallest singular value is below `tol · ‖block row‖∞` stops the
    /// factorization. `Err(row)` reports an exactly zero pivot.
    pub(crate) fn factor(body: &BlockTridiag, pivot: bool, trigger: Option<f64>) -> Result<LuOutcome, usize> {
        let mut f = body.clone();
        let mut piv = vec![0; body.order()];
        let kk = body.len();
        for k in 0..kk {
            let nk = f.size(k);
            if k > 0 {
                // Ŝ_k = D_k − E_k U_{k−1}⁻¹ G_{k−1}
                let np = f.size(k - 1);
                let mut x = f.upper(k - 1).to_vec();
                let up = f.diag(k - 1).to_vec();
                map_columns(&mut x, np, nk, |c| lu_apply_u_inv(&up, np, c));
                let e = f.lower(k).to_vec();
                gemm_acc(f.diag_mut(k), &e, &x, nk, np, nk, -1.0);
            }
            if let Some(tol) = trigger {
                let smin = singular_values(f.diag(k), nk, nk).last().copied().unwrap_or(0.0);
                if !(smin >= tol * body.row_norm(k)) || smin == 0.0 {
                    return Ok(LuOutcome::Trigger(k));
                }
            }
            let r = f.rows_of(k);
            lu_factor(f.diag_mut(k), nk, &mut piv[r.clone()], pivot).map_err(|c| r.start + c)?;
            if k + 1 < kk {
                let nn = f.size(k + 1);
                let d = f.diag(k).to_vec();
                let p = piv[r].to_vec();
                map_columns(f.upper_mut(k), nk, nn, |c| lu_apply_pl_inv(&d, nk, &p, c));
            }
        }
        Ok(LuOutcome::Done(BlockLu { f, piv }))
    }

    fn lu(&self, k: usize) -> (&[f64], &[usize]) {
        (self.f.diag(k), &self.piv[self.f.rows_of(k)])
    }

    /// `x <- Ud x` with `Ud = blockdiag(U_k)`.
    fn apply_ud(&self, x: &mut [f64]) {
        for k in 0..self.f.len() {
            let nk = self.f.size(k);
            crate::dense::lu_apply_u(self.f.diag(k), nk, &mut x[self.f.rows_of(k)]);
        }
    }

    fn apply_ud_inv(&self, x: &mut [f64]) {
        for k in 0..self.f.len() {
            lu_apply_u_inv(self.f.diag(k), self.f.size(k), &mut x[self.f.rows_of(k)]);
        }
    }

    fn apply_ud_inv_t(&self, x: &mut [f64]) {
        for k in 0..self.f.len() {
            lu_apply_u_inv_t(self.f.diag(k), self.f.size(k), &mut x[self.f.rows_of(k)]);
        }
    }
}

impl BodySolve for BlockLu {
    fn n_inv(&self, x: &mut [f64]) {
        let f = &self.f;
        for k in 0..f.len() {
            let nk = f.size(k);
            if k > 0 {
                let np = f.size(k - 1);
                let mut t = x[f.rows_of(k - 1)].to_vec();
                lu_apply_u_inv(f.diag(k - 1), np, &mut t);
                gemv_acc(&mut x[f.rows_of(k)], f.lower(k), &t, nk, np, -1.0);
            }
            let (lu, p) = self.lu(k);
            lu_apply_pl_inv(lu, nk, p, &mut x[f.rows_of(k)]);
        }
    }

    fn s_inv(&self, x: &mut [f64]) {
        let f = &self.f;
        for k in (0..f.len()).rev() {
            let nk = f.size(k);
            if k + 1 < f.len() {
                let (a, b) = x.split_at_mut(f.start(k + 1));
                let nn = f.size(k + 1);
                gemv_acc(&mut a[f.rows_of(k)], f.upper(k), &b[..nn], nk, nn, -1.0);
            }
            lu_apply_u_inv(f.diag(k), nk, &mut x[f.rows_of(k)]);
        }
    }

    fn s_inv_t(&self, x: &mut [f64]) {
        let f = &self.f;
        for k in 0..f.len() {
            let nk = f.size(k);
            if k > 0 {
                let (a, b) = x.split_at_mut(f.start(k));
                let np = f.size(k - 1);
                gemv_t_acc(&mut b[..nk], f.upper(k - 1), &a[f.rows_of(k - 1)], np, nk, -1.0);
            }
            lu_apply_u_inv_t(f.diag(k), nk, &mut x[f.rows_of(k)]);
        }
    }
}

/// The same factors regrouped with a block-diagonal right factor:
/// `S = Ud`, `N⁻¹ = Ud A⁻¹`.
#[derive(Debug, Clone)]
pub(crate) struct Lud(pub(crate) BlockLu);

impl BodySolve for Lud {
    fn n_inv(&self, x: &mut [f64]) {
        // forward sweep, then backward sweep, then back to the U scaling
        self.0.n_inv(x);
        self.0.s_inv(x);
        self.0.apply_ud(x);
    }

    fn s_inv(&self, x: &mut [f64]) {
        self.0.apply_ud_inv(x);
    }

    fn s_inv_t(&self, x: &mut [f64]) {
        self.0.apply_ud_inv_t(x);
    }
}
