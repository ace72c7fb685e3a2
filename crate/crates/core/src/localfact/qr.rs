//! Block Householder QR on a superblock chain.
//!
//! Step `k` reduces the stacked panel `[Ŝ_k; E_{k+1}]` (rows of superblocks
//! `k` and `k+1`) to `[R_kk; 0]`, so `N = Q` is a product of panel
//! reflectors and `S = R` is block upper triangular with three block
//! diagonals.

use super::{Attempt, BodyFactor, BodySolve};
use crate::blocktri::BlockTridiag;
use crate::dense::{gemv_acc, gemv_t_acc, householder_qr, lu_apply_u_inv, lu_apply_u_inv_t, map_columns, qr_apply_qt, singular_values};

#[derive(Debug, Clone)]
pub(crate) struct BlockQr {
    sizes: Vec<usize>,
    starts: Vec<usize>,
    // per step: reflectors (panel rows × n_k, R_kk in the top square), tau
    panels: Vec<Vec<f64>>,
    taus: Vec<Vec<f64>>,
    // R_{k,k+1} and R_{k,k+2}
    r1: Vec<Vec<f64>>,
    r2: Vec<Vec<f64>>,
}

impl BlockQr {
    pub(crate) fn factor(body: &BlockTridiag, tol: f64) -> Attempt {
        let kk = body.len();
        let sizes = body.sizes().to_vec();
        let starts: Vec<usize> = (0..=kk).map(|k| if k < kk { body.start(k) } else { body.order() }).collect();
        let mut panels = Vec::with_capacity(kk);
        let mut taus = Vec::with_capacity(kk);
        let mut r1 = Vec::with_capacity(kk);
        let mut r2 = Vec::with_capacity(kk);
        // running Ŝ_k and the modified upper block F'_k
        let mut s_hat = body.diag(0).to_vec();
        let mut f_cur = if kk > 1 { body.upper(0).to_vec() } else { Vec::new() };
        for k in 0..kk {
            let nk = sizes[k];
            let below = if k + 1 < kk { sizes[k + 1] } else { 0 };
            let rows = nk + below;
            let mut panel = vec![0.0; rows * nk];
            panel[..nk * nk].copy_from_slice(&s_hat);
            if below > 0 {
                panel[nk * nk..].copy_from_slice(body.lower(k + 1));
            }
            let mut tau = vec![0.0; nk];
            householder_qr(&mut panel, rows, nk, &mut tau);
            let mut rkk = vec![0.0; nk * nk];
            for i in 0..nk {
                for j in i..nk {
                    rkk[i * nk + j] = panel[i * nk + j];
                }
            }
            let smin = singular_values(&rkk, nk, nk).last().copied().unwrap_or(0.0);
            if !(smin >= tol * body.row_norm(k)) || smin == 0.0 {
                return Attempt::Trigger(k);
            }
            if below > 0 {
                let nn = below;
                // Qᵀ [F'_k; D_{k+1}] -> [R_{k,k+1}; Ŝ_{k+1}]
                let mut cols = vec![0.0; rows * nn];
                cols[..nk * nn].copy_from_slice(&f_cur);
                cols[nk * nn..].copy_from_slice(body.diag(k + 1));
                map_columns(&mut cols, rows, nn, |c| qr_apply_qt(&panel, rows, nk, &tau, c));
                r1.push(cols[..nk * nn].to_vec());
                s_hat = cols[nk * nn..].to_vec();
                // Qᵀ [0; F_{k+1}] -> [R_{k,k+2}; F'_{k+1}]
                if k + 2 < kk {
                    let nf = sizes[k + 2];
                    let mut cols = vec![0.0; rows * nf];
                    cols[nk * nf..].copy_from_slice(body.upper(k + 1));
                    map_columns(&mut cols, rows, nf, |c| qr_apply_qt(&panel, rows, nk, &tau, c));
                    r2.push(cols[..nk * nf].to_vec());
                    f_cur = cols[nk * nf..].to_vec();
                } else {
                    r2.push(Vec::new());
                }
            } else {
                r1.push(Vec::new());
                r2.push(Vec::new());
            }
            panels.push(panel);
            taus.push(tau);
        }
        Attempt::Done(BodyFactor::Qr(BlockQr {
            sizes,
            starts,
            panels,
            taus,
            r1,
            r2,
        }))
    }

    fn rows(&self, k: usize) -> std::ops::Range<usize> {
        self.starts[k]..self.starts[k + 1]
    }
}

impl BodySolve for BlockQr {
    fn n_inv(&self, x: &mut [f64]) {
        let kk = self.sizes.len();
        for k in 0..kk {
            let nk = self.sizes[k];
            let end = self.starts[(k + 2).min(kk)];
            let seg = &mut x[self.starts[k]..end];
            qr_apply_qt(&self.panels[k], seg.len(), nk, &self.taus[k], seg);
        }
    }

    fn s_inv(&self, x: &mut [f64]) {
        let kk = self.sizes.len();
        for k in (0..kk).rev() {
            let nk = self.sizes[k];
            let (head, tail) = x.split_at_mut(self.starts[k + 1]);
            let xk = &mut head[self.starts[k]..];
            if k + 1 < kk {
                let nn = self.sizes[k + 1];
                gemv_acc(xk, &self.r1[k], &tail[..nn], nk, nn, -1.0);
            }
            if k + 2 < kk {
                let nn = self.sizes[k + 1];
                let nf = self.sizes[k + 2];
                gemv_acc(xk, &self.r2[k], &tail[nn..nn + nf], nk, nf, -1.0);
            }
            lu_apply_u_inv(&self.panels[k][..nk * nk], nk, xk);
        }
    }

    fn s_inv_t(&self, x: &mut [f64]) {
        let kk = self.sizes.len();
        for k in 0..kk {
            let nk = self.sizes[k];
            let (head, tail) = x.split_at_mut(self.starts[k]);
            let xk = &mut tail[..nk];
            if k >= 1 {
                let np = self.sizes[k - 1];
                gemv_t_acc(xk, &self.r1[k - 1], &head[self.rows(k - 1)], np, nk, -1.0);
            }
            if k >= 2 {
                let np = self.sizes[k - 2];
                gemv_t_acc(xk, &self.r2[k - 2], &head[self.rows(k - 2)], np, nk, -1.0);
            }
            lu_apply_u_inv_t(&self.panels[k][..nk * nk], nk, xk);
        }
    }
}
