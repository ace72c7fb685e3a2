//! Local cyclic reduction on the chain `[left separator] b_0 … b_{K−1} [right separator]`.
//!
//! Each level eliminates the body nodes at odd positions of the surviving
//! body list (the first survivor always stays), halving the body; the single
//! survivor is eliminated last. Separators are never eliminated, so what is
//! left are exactly their Schur-complement blocks. Only elimination records
//! are kept, no fill-in vectors.

use crate::dense::{gemm_acc, gemv_acc, lu_factor, lu_solve, map_columns, DenseMatrix};
use crate::partition::PartitionBlock;

#[derive(Debug, Clone)]
struct Elim {
    node: usize,
    l: Option<usize>,
    r: Option<usize>,
    lu: Vec<f64>,
    piv: Vec<usize>,
    c_jl: DenseMatrix,
    c_jr: DenseMatrix,
    c_lj: DenseMatrix,
    c_rj: DenseMatrix,
}

#[derive(Debug, Clone)]
pub(crate) struct CrFactor {
    k: usize,
    starts: Vec<usize>,
    records: Vec<Elim>,
    alpha1: DenseMatrix,
    alpha2: DenseMatrix,
    beta: DenseMatrix,
    gamma: DenseMatrix,
    pub(crate) levels: usize,
}

impl CrFactor {
    /// `Err(row)` on an exactly singular pivot block (row local to the body).
    pub(crate) fn factor(block: &PartitionBlock, sl: usize, a_right: Option<DenseMatrix>) -> Result<Self, usize> {
        let body = &block.body;
        let k = body.len();
        let sr = a_right.as_ref().map_or(0, |a| a.rows());
        let (lid, rid) = (k, k + 1);
        let mut size: Vec<usize> = body.sizes().to_vec();
        size.push(sl);
        size.push(sr);
        let mut diag: Vec<DenseMatrix> = (0..k).map(|j| body.diag_block(j)).collect();
        diag.push(DenseMatrix::zeros(sl, sl));
        diag.push(a_right.unwrap_or_else(|| DenseMatrix::zeros(0, 0)));

        let mut chain = Vec::with_capacity(k + 2);
        let mut up = Vec::with_capacity(k + 1);
        let mut lo = Vec::with_capacity(k + 1);
        if let Some(l) = &block.left {
            chain.push(lid);
            up.push(l.from_body.clone());
            lo.push(l.to_body.clone());
        }
        for j in 0..k {
            chain.push(j);
            if j + 1 < k {
                up.push(body.upper_block(j));
                lo.push(body.lower_block(j + 1));
            }
        }
        if let Some(r) = &block.right {
            up.push(r.to_body.clone());
            lo.push(r.from_body.clone());
            chain.push(rid);
        }

        let mut records = Vec::with_capacity(k);
        let mut levels = 0;
        loop {
            let body_pos: Vec<usize> = (0..chain.len()).filter(|&q| chain[q] < k).collect();
            let targets: Vec<usize> = if body_pos.len() == 1 {
                body_pos.clone()
            } else {
                body_pos.iter().skip(1).step_by(2).copied().collect()
            };
            let last_round = body_pos.len() == 1;
            let mut is_target = vec![false; chain.len()];
            let mut merged: Vec<Option<(DenseMatrix, DenseMatrix)>> = vec![None; chain.len()];
            for &q in &targets {
                is_target[q] = true;
                let j = chain[q];
                let nj = size[j];
                let mut lu = diag[j].as_slice().to_vec();
                let mut piv = vec![0; nj];
                lu_factor(&mut lu, nj, &mut piv, true).map_err(|c| body.start(j) + c)?;
                let l = (q > 0).then(|| chain[q - 1]);
                let r = (q + 1 < chain.len()).then(|| chain[q + 1]);
                let c_jl = l.map_or_else(|| DenseMatrix::zeros(nj, 0), |_| lo[q - 1].clone());
                let c_lj = l.map_or_else(|| DenseMatrix::zeros(0, nj), |_| up[q - 1].clone());
                let c_jr = r.map_or_else(|| DenseMatrix::zeros(nj, 0), |_| up[q].clone());
                let c_rj = r.map_or_else(|| DenseMatrix::zeros(0, nj), |_| lo[q].clone());
                let solve_cols = |m: &DenseMatrix| {
                    let mut x = m.as_slice().to_vec();
                    map_columns(&mut x, nj, m.cols(), |c| lu_solve(&lu, nj, &piv, c));
                    x
                };
                let xl = solve_cols(&c_jl);
                let xr = solve_cols(&c_jr);
                if let Some(l) = l {
                    let nl = size[l];
                    gemm_acc(diag[l].as_mut_slice(), c_lj.as_slice(), &xl, nl, nj, nl, -1.0);
                }
                if let Some(r) = r {
                    let nr = size[r];
                    gemm_acc(diag[r].as_mut_slice(), c_rj.as_slice(), &xr, nr, nj, nr, -1.0);
                }
                if let (Some(l), Some(r)) = (l, r) {
                    let (nl, nr) = (size[l], size[r]);
                    let mut clr = DenseMatrix::zeros(nl, nr);
                    gemm_acc(clr.as_mut_slice(), c_lj.as_slice(), &xr, nl, nj, nr, -1.0);
                    let mut crl = DenseMatrix::zeros(nr, nl);
                    gemm_acc(crl.as_mut_slice(), c_rj.as_slice(), &xl, nr, nj, nl, -1.0);
                    merged[q] = Some((clr, crl));
                }
                records.push(Elim {
                    node: j,
                    l,
                    r,
                    lu,
                    piv,
                    c_jl,
                    c_jr,
                    c_lj,
                    c_rj,
                });
            }
            // survivors are never adjacent to two eliminated nodes in a row
            let survivors: Vec<usize> = (0..chain.len()).filter(|&q| !is_target[q]).collect();
            let mut new_up = Vec::with_capacity(survivors.len());
            let mut new_lo = Vec::with_capacity(survivors.len());
            for w in survivors.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b == a + 1 {
                    new_up.push(std::mem::replace(&mut up[a], DenseMatrix::zeros(0, 0)));
                    new_lo.push(std::mem::replace(&mut lo[a], DenseMatrix::zeros(0, 0)));
                } else {
                    let (clr, crl) = merged[a + 1].take().expect("eliminated node between survivors");
                    new_up.push(clr);
                    new_lo.push(crl);
                }
            }
            let new_chain: Vec<usize> = survivors.iter().map(|&q| chain[q]).collect();
            chain = new_chain;
            up = new_up;
            lo = new_lo;
            if last_round {
                break;
            }
            levels += 1;
        }

        let has_l = block.left.is_some();
        let has_r = block.right.is_some();
        let (beta, gamma) = if has_l && has_r {
            (lo[0].clone(), up[0].clone())
        } else {
            (DenseMatrix::zeros(sr, sl), DenseMatrix::zeros(sl, sr))
        };
        let mut starts: Vec<usize> = (0..k).map(|j| body.start(j)).collect();
        starts.push(body.order());
        Ok(CrFactor {
            k,
            starts,
            records,
            alpha1: diag[lid].clone(),
            alpha2: diag[rid].clone(),
            beta,
            gamma,
            levels,
        })
    }

    pub(crate) fn separator_blocks(&self) -> (DenseMatrix, DenseMatrix, DenseMatrix, DenseMatrix) {
        (self.alpha1.clone(), self.alpha2.clone(), self.beta.clone(), self.gamma.clone())
    }

    fn seg(&self, node: usize) -> std::ops::Range<usize> {
        self.starts[node]..self.starts[node + 1]
    }

    pub(crate) fn forward(&self, f: &[f64], sl: usize, sr: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut u = f.to_vec();
        let mut dl = vec![0.0; sl];
        let mut dr = vec![0.0; sr];
        for e in &self.records {
            let nj = e.c_jl.rows();
            let mut t = u[self.seg(e.node)].to_vec();
            lu_solve(&e.lu, nj, &e.piv, &mut t);
            for (nb, c) in [(e.l, &e.c_lj), (e.r, &e.c_rj)] {
                if let Some(nb) = nb {
                    let target: &mut [f64] = if nb == self.k {
                        &mut dl
                    } else if nb == self.k + 1 {
                        &mut dr
                    } else {
                        &mut u[self.starts[nb]..self.starts[nb + 1]]
                    };
                    gemv_acc(target, c.as_slice(), &t, c.rows(), nj, -1.0);
                }
            }
        }
        (u, dl, dr)
    }

    pub(crate) fn backward(&self, u: &[f64], xl: &[f64], xr: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; u.len()];
        for e in self.records.iter().rev() {
            let nj = e.c_jl.rows();
            let mut t = u[self.seg(e.node)].to_vec();
            for (nb, c) in [(e.l, &e.c_jl), (e.r, &e.c_jr)] {
                if let Some(nb) = nb {
                    let xs: &[f64] = if nb == self.k {
                        xl
                    } else if nb == self.k + 1 {
                        xr
                    } else {
                        &x[self.starts[nb]..self.starts[nb + 1]]
                    };
                    gemv_acc(&mut t, c.as_slice(), xs, nj, c.cols(), -1.0);
                }
            }
            lu_solve(&e.lu, nj, &e.piv, &mut t);
            x[self.seg(e.node)].copy_from_slice(&t);
        }
        x
    }
}
