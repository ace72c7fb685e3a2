//! Per-partition factorizations.
//!
//! Each partition block is factored as `A_i = N S` and, around it,
//!
//! ```text
//! z = N⁻¹ b0    y = N⁻¹ c1    wᵀ = c0ᵀ S⁻¹    vᵀ = b1ᵀ S⁻¹
//! α1 = −wᵀz     α2 = a_right − vᵀy    β = −vᵀz    γ = −wᵀy
//! ```
//!
//! The adaptive strategies may stop on an ill-conditioned superblock, turn
//! it into an extra separator and carry on with the rest of the body, so a
//! [`LocalFactorization`] is a list of [`UnitFactor`]s with the extra
//! separators in between.

mod arce;
mod cr;
mod lu;
mod qr;

use std::fmt;
use std::ops::Range;

use crate::dense::{map_columns, DenseLu, DenseMatrix};
use crate::error::{Error, Result};
use crate::partition::PartitionBlock;

/// Default ill-conditioning threshold of the adaptive strategies.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Lu,
    Lud,
    CyclicReduction,
    Arce,
    LuPivot,
    Qr,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Lu,
        Strategy::Lud,
        Strategy::CyclicReduction,
        Strategy::Arce,
        Strategy::LuPivot,
        Strategy::Qr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Lu => "lu",
            Strategy::Lud => "lud",
            Strategy::CyclicReduction => "cr",
            Strategy::Arce => "arce",
            Strategy::LuPivot => "lupivot",
            Strategy::Qr => "qr",
        }
    }

    pub fn from_name(s: &str) -> Option<Strategy> {
        match s.to_ascii_lowercase().as_str() {
            "lu" => Some(Strategy::Lu),
            "lud" => Some(Strategy::Lud),
            "cr" | "cyclic" | "cyclicreduction" => Some(Strategy::CyclicReduction),
            "arce" => Some(Strategy::Arce),
            "lupivot" | "lu-pivot" | "lup" => Some(Strategy::LuPivot),
            "qr" => Some(Strategy::Qr),
            _ => None,
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Strategy::LuPivot | Strategy::Qr)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which fill-in vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillVector {
    V,
    W,
    Y,
    Z,
}

/// Body solver contract: `N⁻¹`, `S⁻¹` and `S⁻ᵀ` on body-length vectors.
pub(crate) trait BodySolve {
    fn n_inv(&self, x: &mut [f64]);
    fn s_inv(&self, x: &mut [f64]);
    fn s_inv_t(&self, x: &mut [f64]);
}

#[derive(Debug, Clone)]
pub(crate) enum BodyFactor {
    Empty,
    Lu(lu::BlockLu),
    Lud(lu::Lud),
    Arce(arce::ArceFactor),
    Qr(qr::BlockQr),
    Cr(cr::CrFactor),
}

impl BodyFactor {
    fn solver(&self) -> Option<&dyn BodySolve> {
        match self {
            BodyFactor::Lu(f) => Some(f),
            BodyFactor::Lud(f) => Some(f),
            BodyFactor::Arce(f) => Some(f),
            BodyFactor::Qr(f) => Some(f),
            BodyFactor::Empty | BodyFactor::Cr(_) => None,
        }
    }
}

/// Outcome of a single (non-recursive) attempt.
pub(crate) enum Attempt {
    Done(BodyFactor),
    /// Superblock index whose pivot block is ill-conditioned.
    Trigger(usize),
}

/// Factorization of one body between (up to) two separators.
#[derive(Debug, Clone)]
pub struct UnitFactor {
    pub body_start: usize,
    pub body_sizes: Vec<usize>,
    pub left: Option<Range<usize>>,
    pub right: Option<Range<usize>>,
    pub z: Option<DenseMatrix>,
    pub y: Option<DenseMatrix>,
    pub w: Option<DenseMatrix>,
    pub v: Option<DenseMatrix>,
    pub alpha1: DenseMatrix,
    pub alpha2: DenseMatrix,
    pub beta: DenseMatrix,
    pub gamma: DenseMatrix,
    pub(crate) body: BodyFactor,
}

impl UnitFactor {
    pub fn body_len(&self) -> usize {
        self.body_sizes.iter().sum()
    }

    pub fn left_size(&self) -> usize {
        self.left.as_ref().map_or(0, |r| r.len())
    }

    pub fn right_size(&self) -> usize {
        self.right.as_ref().map_or(0, |r| r.len())
    }

    pub fn body_range(&self) -> Range<usize> {
        self.body_start..self.body_start + self.body_len()
    }

    /// Cyclic-reduction levels (0 for the other strategies).
    pub fn levels(&self) -> usize {
        match &self.body {
            BodyFactor::Cr(c) => c.levels,
            _ => 0,
        }
    }

    pub fn fill_vector(&self, which: FillVector) -> Option<&DenseMatrix> {
        match which {
            FillVector::V => self.v.as_ref(),
            FillVector::W => self.w.as_ref(),
            FillVector::Y => self.y.as_ref(),
            FillVector::Z => self.z.as_ref(),
        }
    }

    /// Per-superblock non-zero mask of a stored fill-in vector.
    pub fn block_mask(&self, which: FillVector) -> Option<Vec<bool>> {
        let m = self.fill_vector(which)?;
        let mut out = Vec::with_capacity(self.body_sizes.len());
        let mut r0 = 0;
        for &sz in &self.body_sizes {
            let nz = (r0..r0 + sz).any(|i| m.row(i).iter().any(|v| *v != 0.0));
            out.push(nz);
            r0 += sz;
        }
        Some(out)
    }

    /// Phase 1: `u = N⁻¹ f` plus the corrections added to the left and
    /// right separator right-hand sides.
    pub fn forward(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (sl, sr) = (self.left_size(), self.right_size());
        match &self.body {
            BodyFactor::Empty => (Vec::new(), vec![0.0; sl], vec![0.0; sr]),
            BodyFactor::Cr(c) => c.forward(f, sl, sr),
            other => {
                let s = other.solver().unwrap();
                let mut u = f.to_vec();
                s.n_inv(&mut u);
                let mut dl = vec![0.0; sl];
                let mut dr = vec![0.0; sr];
                if let Some(w) = &self.w {
                    crate::dense::gemv_t_acc(&mut dl, w.as_slice(), &u, u.len(), sl, -1.0);
                }
                if let Some(v) = &self.v {
                    crate::dense::gemv_t_acc(&mut dr, v.as_slice(), &u, u.len(), sr, -1.0);
                }
                (u, dl, dr)
            }
        }
    }

    /// Phase 3: body unknowns from `u` and the separator values.
    pub fn backward(&self, u: &[f64], xl: &[f64], xr: &[f64]) -> Vec<f64> {
        match &self.body {
            BodyFactor::Empty => Vec::new(),
            BodyFactor::Cr(c) => c.backward(u, xl, xr),
            other => {
                let s = other.solver().unwrap();
                let mut t = u.to_vec();
                let nb = t.len();
                if let Some(z) = &self.z {
                    crate::dense::gemv_acc(&mut t, z.as_slice(), xl, nb, xl.len(), -1.0);
                }
                if let Some(y) = &self.y {
                    crate::dense::gemv_acc(&mut t, y.as_slice(), xr, nb, xr.len(), -1.0);
                }
                s.s_inv(&mut t);
                t
            }
        }
    }

    /// `N⁻¹ rhs` (for cyclic reduction: the eliminated right-hand side).
    pub fn apply_n_inv(&self, rhs: &[f64]) -> Vec<f64> {
        self.forward(rhs).0
    }

    /// `S⁻¹ rhs` (separators held at zero).
    pub fn apply_s_inv(&self, rhs: &[f64]) -> Vec<f64> {
        self.backward(rhs, &vec![0.0; self.left_size()], &vec![0.0; self.right_size()])
    }
}

/// Builds the unit record for a factored body from the generic formulas.
pub(crate) fn finish_unit(block: &PartitionBlock, body: BodyFactor) -> UnitFactor {
    let nb = block.body_len();
    let (sl, sr) = (block.left_size(), block.right_size());
    let a_right = block
        .right
        .as_ref()
        .map_or_else(|| DenseMatrix::zeros(0, 0), |r| r.a.clone());
    let mut unit = UnitFactor {
        body_start: block.body_start,
        body_sizes: block.body.sizes().to_vec(),
        left: block.left.as_ref().map(|l| l.range.clone()),
        right: block.right.as_ref().map(|r| r.range.clone()),
        z: None,
        y: None,
        w: None,
        v: None,
        alpha1: DenseMatrix::zeros(sl, sl),
        alpha2: a_right,
        beta: block.direct_rl.clone().unwrap_or_else(|| DenseMatrix::zeros(sr, sl)),
        gamma: block.direct_lr.clone().unwrap_or_else(|| DenseMatrix::zeros(sl, sr)),
        body,
    };
    if nb == 0 {
        return unit;
    }
    if let BodyFactor::Cr(c) = &unit.body {
        let (a1, a2, be, ga) = c.separator_blocks();
        unit.alpha1 = a1;
        unit.alpha2 = a2;
        unit.beta = be;
        unit.gamma = ga;
        return unit;
    }
    let s = unit.body.solver().unwrap();
    let apply = |mut m: DenseMatrix, f: &dyn Fn(&mut [f64])| {
        let cols = m.cols();
        map_columns(m.as_mut_slice(), nb, cols, f);
        m
    };
    let z = apply(block.b0(), &|x| s.n_inv(x));
    let y = apply(block.c1(), &|x| s.n_inv(x));
    let w = apply(block.c0t().transpose(), &|x| s.s_inv_t(x));
    let v = apply(block.b1t().transpose(), &|x| s.s_inv_t(x));
    let wt = w.transpose();
    let vt = v.transpose();
    unit.alpha1 = wt.matmul(&z).scaled(-1.0);
    unit.alpha2 = unit.alpha2.sub(&vt.matmul(&y));
    unit.beta = unit.beta.sub(&vt.matmul(&z));
    unit.gamma = unit.gamma.sub(&wt.matmul(&y));
    unit.z = Some(z);
    unit.y = Some(y);
    unit.w = Some(w);
    unit.v = Some(v);
    unit
}

/// An adaptive extra separator (a deferred superblock).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraSeparator {
    pub range: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct LocalFactorization {
    pub strategy: Strategy,
    /// 1-based partition index.
    pub index: usize,
    pub units: Vec<UnitFactor>,
    pub extra_separators: Vec<ExtraSeparator>,
    /// Largest |U| over largest |A_i| (alternate row/column elimination only).
    pub growth: Option<f64>,
    left_diag: Option<DenseMatrix>,
}

impl LocalFactorization {
    pub fn body_range(&self) -> Range<usize> {
        let start = self.units.first().unwrap().body_start;
        let end = self.units.last().unwrap().body_range().end;
        start..end
    }

    /// Diagonal block of the left separator when this partition carries it.
    pub fn left_diag(&self) -> Option<&DenseMatrix> {
        self.left_diag.as_ref()
    }

    /// Separator contributions `(α1, α2, β, γ)` of a single-unit factorization.
    pub fn contributions(&self) -> (&DenseMatrix, &DenseMatrix, &DenseMatrix, &DenseMatrix) {
        let u = &self.units[0];
        let last = self.units.last().unwrap();
        (&u.alpha1, &last.alpha2, &u.beta, &u.gamma)
    }

    /// Solves `M^(i) x = rhs` in the local order `[left, body, right]`
    /// through the stored factors and a dense solve for the separators.
    pub fn solve_local(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let first = &self.units[0];
        let last = self.units.last().unwrap();
        let (sl, sr) = (first.left_size(), last.right_size());
        let body = self.body_range();
        if rhs.len() != sl + body.len() + sr {
            return Err(Error::DimensionMismatch(format!("local rhs of length {}", rhs.len())));
        }
        // separators in local order with their local offsets
        let mut seps: Vec<(usize, usize)> = Vec::new();
        let to_local = |g: usize| g - body.start + sl;
        if sl > 0 {
            seps.push((0, sl));
        }
        for e in &self.extra_separators {
            seps.push((to_local(e.range.start), e.range.len()));
        }
        if sr > 0 {
            seps.push((sl + body.len(), sr));
        }
        let off: Vec<usize> = seps
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s.1;
                Some(o)
            })
            .collect();
        let q: usize = seps.iter().map(|s| s.1).sum();
        let mut t = DenseMatrix::zeros(q, q);
        let mut g = vec![0.0; q];
        for (k, &(pos, len)) in seps.iter().enumerate() {
            g[off[k]..off[k] + len].copy_from_slice(&rhs[pos..pos + len]);
        }
        if let Some(a) = &self.left_diag {
            t.set_block(0, 0, a);
        }
        let sep_of_left = |u: usize| if sl > 0 { Some(u) } else { u.checked_sub(1) };
        let mut us = Vec::with_capacity(self.units.len());
        for (ui, unit) in self.units.iter().enumerate() {
            let l = if unit.left.is_some() { sep_of_left(ui) } else { None };
            let r = unit.right.as_ref().map(|_| l.map_or(0, |x| x + 1));
            let br = unit.body_range();
            let (u, dl, dr) = unit.forward(&rhs[to_local(br.start)..to_local(br.end)]);
            if let Some(l) = l {
                add_block(&mut t, off[l], off[l], &unit.alpha1);
                for (i, d) in dl.iter().enumerate() {
                    g[off[l] + i] += d;
                }
            }
            if let Some(r) = r {
                add_block(&mut t, off[r], off[r], &unit.alpha2);
                for (i, d) in dr.iter().enumerate() {
                    g[off[r] + i] += d;
                }
            }
            if let (Some(l), Some(r)) = (l, r) {
                add_block(&mut t, off[l], off[r], &unit.gamma);
                add_block(&mut t, off[r], off[l], &unit.beta);
            }
            us.push((u, l, r));
        }
        let xs = if q > 0 {
            DenseLu::new(&t).map_err(|_| Error::SingularFactor)?.solve(&g)
        } else {
            Vec::new()
        };
        let mut x = vec![0.0; rhs.len()];
        for (k, &(pos, len)) in seps.iter().enumerate() {
            x[pos..pos + len].copy_from_slice(&xs[off[k]..off[k] + len]);
        }
        for (unit, (u, l, r)) in self.units.iter().zip(us) {
            let xl = l.map_or(&[][..], |l| &xs[off[l]..off[l] + seps[l].1]);
            let xr = r.map_or(&[][..], |r| &xs[off[r]..off[r] + seps[r].1]);
            let xb = unit.backward(&u, xl, xr);
            let br = unit.body_range();
            x[to_local(br.start)..to_local(br.end)].copy_from_slice(&xb);
        }
        Ok(x)
    }
}

fn add_block(t: &mut DenseMatrix, r0: usize, c0: usize, b: &DenseMatrix) {
    for i in 0..b.rows() {
        for j in 0..b.cols() {
            t[(r0 + i, c0 + j)] += b[(i, j)];
        }
    }
}

fn attempt(block: &PartitionBlock, strategy: Strategy, tol: f64) -> Result<Attempt> {
    let lu_done = |r: std::result::Result<lu::LuOutcome, usize>, wrap: fn(lu::BlockLu) -> BodyFactor| match r {
        Ok(lu::LuOutcome::Done(f)) => Ok(Attempt::Done(wrap(f))),
        Ok(lu::LuOutcome::Trigger(k)) => Ok(Attempt::Trigger(k)),
        Err(row) => Err(Error::ZeroPivot(block.body_start + row)),
    };
    match strategy {
        Strategy::Lu => lu_done(lu::BlockLu::factor(&block.body, false, None), BodyFactor::Lu),
        Strategy::Lud => lu_done(lu::BlockLu::factor(&block.body, false, None), |f| BodyFactor::Lud(lu::Lud(f))),
        Strategy::LuPivot => lu_done(lu::BlockLu::factor(&block.body, true, Some(tol)), BodyFactor::Lu),
        Strategy::Qr => Ok(qr::BlockQr::factor(&block.body, tol)),
        Strategy::Arce => arce::ArceFactor::factor(&block.body)
            .map(|f| Attempt::Done(BodyFactor::Arce(f)))
            .map_err(|e| match e {
                arce::ArceError::Upper => {
                    Error::UnsupportedStructure("alternate row/column elimination needs zero upper blocks".into())
                }
                arce::ArceError::Singular(k) => Error::SingularBlock(block.body_start + k),
            }),
        Strategy::CyclicReduction => {
            let sl = block.left_size();
            let a_right = block.right.as_ref().map(|r| r.a.clone());
            cr::CrFactor::factor(block, sl, a_right)
                .map(|f| Attempt::Done(BodyFactor::Cr(f)))
                .map_err(|row| Error::ZeroPivot(block.body_start + row))
        }
    }
}

fn factor_into(
    block: PartitionBlock,
    strategy: Strategy,
    tol: f64,
    units: &mut Vec<UnitFactor>,
    extras: &mut Vec<ExtraSeparator>,
) -> Result<()> {
    let mut current = block;
    loop {
        if current.body.is_empty() {
            units.push(finish_unit(&current, BodyFactor::Empty));
            return Ok(());
        }
        match attempt(&current, strategy, tol)? {
            Attempt::Done(body) => {
                units.push(finish_unit(&current, body));
                return Ok(());
            }
            Attempt::Trigger(k) => {
                let range = current.body_start + current.body.start(k)..current.body_start + current.body.start(k + 1);
                let (before, after) = current.split_at(k);
                factor_into(before, strategy, tol, units, extras)?;
                extras.push(ExtraSeparator { range });
                current = after;
            }
        }
    }
}

/// Factors a partition block with `strategy` (`tol` is used by the adaptive ones).
pub fn factor(block: &PartitionBlock, strategy: Strategy, tol: f64) -> Result<LocalFactorization> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let mut units = Vec::new();
    let mut extras = Vec::new();
    factor_into(block.clone(), strategy, tol, &mut units, &mut extras)?;
    if !extras.is_empty() && extras.len() == block.body.len() {
        return Err(Error::ExhaustedBody);
    }
    let growth = match units.first().map(|u| &u.body) {
        Some(BodyFactor::Arce(f)) => Some(f.growth),
        _ => None,
    };
    let left_diag = if block.owns_left_diag {
        block.left.as_ref().map(|l| l.a.clone())
    } else {
        None
    };
    Ok(LocalFactorization {
        strategy,
        index: block.index,
        units,
        extra_separators: extras,
        growth,
        left_diag,
    })
}

/// Block LU without pivoting (`N = L`, `S = U`).
pub fn factor_lu(block: &PartitionBlock) -> Result<LocalFactorization> {
    factor(block, Strategy::Lu, DEFAULT_TOL)
}

/// LU with a block-diagonal right factor (`S = D`).
pub fn factor_lud(block: &PartitionBlock) -> Result<LocalFactorization> {
    factor(block, Strategy::Lud, DEFAULT_TOL)
}

/// Local cyclic reduction; stores no fill-in vectors.
pub fn factor_cyclic_reduction(block: &PartitionBlock) -> Result<LocalFactorization> {
    factor(block, Strategy::CyclicReduction, DEFAULT_TOL)
}

/// Alternate row and column elimination (ABD/BABD bodies).
pub fn factor_arce(block: &PartitionBlock) -> Result<LocalFactorization> {
    factor(block, Strategy::Arce, DEFAULT_TOL)
}

/// LU with partial pivoting inside superblocks; ill-conditioned pivot
/// blocks become extra separators.
pub fn factor_lu_pivot(block: &PartitionBlock, tol: f64) -> Result<LocalFactorization> {
    factor(block, Strategy::LuPivot, tol)
}

/// Block Householder QR; rank-deficient diagonal blocks of R become extra
/// separators.
pub fn factor_qr(block: &PartitionBlock, tol: f64) -> Result<LocalFactorization> {
    factor(block, Strategy::Qr, tol)
}

/// Applies `N⁻¹` unit by unit on the original body; extra separator rows
/// pass through unchanged.
pub fn local_apply_n_inv(f: &LocalFactorization, rhs: &[f64]) -> Result<Vec<f64>> {
    local_apply(f, rhs, |u, x| u.apply_n_inv(x))
}

/// Applies `S⁻¹` unit by unit (separators held at zero).
pub fn local_apply_s_inv(f: &LocalFactorization, rhs: &[f64]) -> Result<Vec<f64>> {
    local_apply(f, rhs, |u, x| u.apply_s_inv(x))
}

fn local_apply(f: &LocalFactorization, rhs: &[f64], op: impl Fn(&UnitFactor, &[f64]) -> Vec<f64>) -> Result<Vec<f64>> {
    let body = f.body_range();
    if rhs.len() != body.len() {
        return Err(Error::DimensionMismatch(format!(
            "rhs of length {} for a body of {}",
            rhs.len(),
            body.len()
        )));
    }
    let mut out = rhs.to_vec();
    for u in &f.units {
        let r = u.body_range();
        let seg = op(u, &rhs[r.start - body.start..r.end - body.start]);
        if seg.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularFactor);
        }
        out[r.start - body.start..r.end - body.start].copy_from_slice(&seg);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
