//! The p-way partitioned view of a structured matrix.
//!
//! Indices are 0-based scalar rows internally; [`PartitionPlan::describe`]
//! prints 1-based ranges. Every body is re-blocked into "superblocks" of
//! `superblock` scalars (the trailing remainder merges into the last one), so
//! that body, separators and couplings all live on one block tridiagonal
//! chain.

use std::fmt::Write as _;
use std::ops::Range;

use crate::blocktri::BlockTridiag;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::structmat::{Corner, CornerPosition, MatrixKind, StructuredMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub n: usize,
    pub p: usize,
    /// Scalar size of one (block) unit: `m` for block kinds, 1 otherwise.
    pub block_size: usize,
    /// Separator size in block units.
    pub separator_size: usize,
    pub body_ranges: Vec<Range<usize>>,
    pub separators: Vec<Range<usize>>,
    pub has_corner: bool,
    pub corner_shape: Option<(usize, usize)>,
}

impl PartitionPlan {
    /// Scalar width of a separator (and of a regular superblock).
    pub fn superblock(&self) -> usize {
        self.separator_size * self.block_size
    }

    /// Superblock sizes of body `i` (0-based).
    pub fn body_superblocks(&self, i: usize) -> Vec<usize> {
        let len = self.body_ranges[i].len();
        let ks = self.superblock();
        let count = len / ks;
        let mut sizes = vec![ks; count];
        *sizes.last_mut().unwrap() += len - count * ks;
        sizes
    }

    /// Left separator of body `i` (0-based), if any.
    pub fn left_separator(&self, i: usize) -> Option<usize> {
        if self.has_corner {
            Some(i)
        } else if i > 0 {
            Some(i - 1)
        } else {
            None
        }
    }

    /// Right separator of body `i` (0-based), if any.
    pub fn right_separator(&self, i: usize) -> Option<usize> {
        if self.has_corner {
            Some(i + 1)
        } else if i + 1 < self.p {
            Some(i)
        } else {
            None
        }
    }

    /// Human-readable dump with 1-based inclusive ranges.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "plan n={} p={} block_size={} separator_size={} corner={}",
            self.n,
            self.p,
            self.block_size,
            self.separator_size,
            match self.corner_shape {
                Some((r, c)) => format!("{r}x{c}"),
                None => "none".into(),
            }
        );
        let mut items: Vec<(usize, String)> = Vec::new();
        for (i, b) in self.body_ranges.iter().enumerate() {
            items.push((b.start, format!("body {} rows {}..{}", i + 1, b.start + 1, b.end)));
        }
        for (k, s) in self.separators.iter().enumerate() {
            let label = if self.has_corner { k } else { k + 1 };
            items.push((s.start, format!("separator a{} rows {}..{}", label, s.start + 1, s.end)));
        }
        items.sort();
        for (_, line) in items {
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

/// Separator size in block units for `a` (before any adaptive growth).
pub fn separator_size(a: &StructuredMatrix) -> usize {
    match a.kind() {
        MatrixKind::Banded => a.s().max(a.r()).max(1),
        MatrixKind::CirculantLike => {
            let c = a.corner().map_or(0, |c| c.rows.max(c.cols));
            a.s().max(a.r()).max(1).max(c)
        }
        MatrixKind::BlockTridiagonal | MatrixKind::Abd | MatrixKind::Babd => 1,
    }
}

pub fn plan_partition(a: &StructuredMatrix, p: usize) -> Result<PartitionPlan> {
    if p < 2 {
        return Err(Error::TooManyPartitions(format!("p must be at least 2, got {p}")));
    }
    if let Some(c) = a.corner() {
        if c.position != CornerPosition::UpperRight {
            return Err(Error::UnsupportedStructure(
                "lower-left corner; apply permute_corner first".into(),
            ));
        }
    }
    let bs = a.m();
    let nb = a.n() / bs;
    let sep = separator_size(a);
    let has_corner = a.corner().is_some();
    let nseps = if has_corner { p + 1 } else { p - 1 };
    let need = nseps * sep + p * sep;
    if nb < need {
        return Err(Error::TooManyPartitions(format!(
            "{} block rows cannot hold {p} bodies of at least {sep} plus {nseps} separators of {sep}",
            nb
        )));
    }
    let bodies = nb - nseps * sep;
    let (base, extra) = (bodies / p, bodies % p);
    let mut body_ranges = Vec::with_capacity(p);
    let mut separators = Vec::with_capacity(nseps);
    let mut pos = 0;
    let ks = sep * bs;
    if has_corner {
        separators.push(0..ks);
        pos = ks;
    }
    for i in 0..p {
        let len = (base + usize::from(i < extra)) * bs;
        body_ranges.push(pos..pos + len);
        pos += len;
        if has_corner || i + 1 < p {
            separators.push(pos..pos + ks);
            pos += ks;
        }
    }
    debug_assert_eq!(pos, a.n());
    let corner_shape = a.corner().map(|c| (c.rows, c.cols));
    Ok(PartitionPlan {
        n: a.n(),
        p,
        block_size: bs,
        separator_size: sep,
        body_ranges,
        separators,
        has_corner,
        corner_shape,
    })
}

/// One separator as seen from an adjacent body.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatorLink {
    pub range: Range<usize>,
    /// Diagonal block of the separator.
    pub a: DenseMatrix,
    /// Column coupling: rows of the adjacent body superblock × separator.
    pub to_body: DenseMatrix,
    /// Row coupling: separator × columns of the adjacent body superblock.
    pub from_body: DenseMatrix,
}

/// The sub-matrix `M^(i)` owned by one partition (or one piece of it after
/// adaptive splitting).
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionBlock {
    /// 1-based partition index.
    pub index: usize,
    pub body_start: usize,
    pub body: BlockTridiag,
    pub left: Option<SeparatorLink>,
    pub right: Option<SeparatorLink>,
    /// Direct separator couplings, only non-zero when the body is empty.
    pub direct_lr: Option<DenseMatrix>,
    pub direct_rl: Option<DenseMatrix>,
    /// Corner block owned by the first partition (corner case only).
    pub corner_slice: Option<DenseMatrix>,
    /// Whether `M^(i)` carries the left separator's diagonal block.
    pub owns_left_diag: bool,
}

impl PartitionBlock {
    pub fn body_len(&self) -> usize {
        self.body.order()
    }

    pub fn left_size(&self) -> usize {
        self.left.as_ref().map_or(0, |l| l.range.len())
    }

    pub fn right_size(&self) -> usize {
        self.right.as_ref().map_or(0, |r| r.range.len())
    }

    /// `b0`: body rows × left separator, zero outside the first superblock.
    pub fn b0(&self) -> DenseMatrix {
        self.edge(self.left.as_ref(), true, true)
    }
    /// `c0ᵀ`: left separator × body columns.
    pub fn c0t(&self) -> DenseMatrix {
        self.edge(self.left.as_ref(), true, false)
    }
    /// `c1`: body rows × right separator.
    pub fn c1(&self) -> DenseMatrix {
        self.edge(self.right.as_ref(), false, true)
    }
    /// `b1ᵀ`: right separator × body columns.
    pub fn b1t(&self) -> DenseMatrix {
        self.edge(self.right.as_ref(), false, false)
    }

    fn edge(&self, link: Option<&SeparatorLink>, first: bool, column: bool) -> DenseMatrix {
        let nb = self.body_len();
        let Some(link) = link else {
            return if column { DenseMatrix::zeros(nb, 0) } else { DenseMatrix::zeros(0, nb) };
        };
        let s = link.range.len();
        if nb == 0 {
            return if column { DenseMatrix::zeros(0, s) } else { DenseMatrix::zeros(s, 0) };
        }
        let k = if first { 0 } else { self.body.len() - 1 };
        let off = self.body.start(k);
        if column {
            let mut d = DenseMatrix::zeros(nb, s);
            d.set_block(off, 0, &link.to_body);
            d
        } else {
            let mut d = DenseMatrix::zeros(s, nb);
            d.set_block(0, off, &link.from_body);
            d
        }
    }

    /// Dense `M^(i)` in the local order `[left separator, body, right separator]`.
    pub fn to_dense(&self) -> DenseMatrix {
        let (sl, nb, sr) = (self.left_size(), self.body_len(), self.right_size());
        let mut d = DenseMatrix::zeros(sl + nb + sr, sl + nb + sr);
        if let Some(l) = &self.left {
            if self.owns_left_diag {
                d.set_block(0, 0, &l.a);
            }
            d.set_block(sl, 0, &self.b0());
            d.set_block(0, sl, &self.c0t());
        }
        d.set_block(sl, sl, &self.body.to_dense());
        if let Some(r) = &self.right {
            d.set_block(sl + nb, sl + nb, &r.a);
            d.set_block(sl, sl + nb, &self.c1());
            d.set_block(sl + nb, sl, &self.b1t());
        }
        if let Some(x) = &self.direct_lr {
            d.set_block(0, sl + nb, x);
        }
        if let Some(x) = &self.direct_rl {
            d.set_block(sl + nb, 0, x);
        }
        d
    }

    /// Adds `M^(i)` (and the owned corner) into an n×n matrix at global positions.
    pub fn assemble_into(&self, global: &mut DenseMatrix) {
        let local = self.to_dense();
        let mut idx: Vec<usize> = Vec::new();
        if let Some(l) = &self.left {
            idx.extend(l.range.clone());
        }
        idx.extend(self.body_start..self.body_start + self.body_len());
        if let Some(r) = &self.right {
            idx.extend(r.range.clone());
        }
        for (li, &gi) in idx.iter().enumerate() {
            for (lj, &gj) in idx.iter().enumerate() {
                global[(gi, gj)] += local[(li, lj)];
            }
        }
        if let Some(c) = &self.corner_slice {
            let n = global.cols();
            for i in 0..c.rows() {
                for j in 0..c.cols() {
                    global[(i, n - c.cols() + j)] += c[(i, j)];
                }
            }
        }
    }

    /// Splits at body superblock `k`, which becomes an extra separator:
    /// returns the pieces before and after it.
    pub fn split_at(&self, k: usize) -> (PartitionBlock, PartitionBlock) {
        let kk = self.body.len();
        assert!(k < kk);
        let extra_range = self.body_start + self.body.start(k)..self.body_start + self.body.start(k + 1);
        let a_extra = self.body.diag_block(k);
        let nk = self.body.size(k);

        // piece before
        let mut before = PartitionBlock {
            index: self.index,
            body_start: self.body_start,
            body: self.body.slice(0, k),
            left: self.left.clone(),
            right: None,
            direct_lr: None,
            direct_rl: None,
            corner_slice: self.corner_slice.clone(),
            owns_left_diag: self.owns_left_diag,
        };
        if k == 0 {
            if let Some(l) = &mut before.left {
                before.direct_lr = Some(l.from_body.clone());
                before.direct_rl = Some(l.to_body.clone());
                l.to_body = DenseMatrix::zeros(0, l.range.len());
                l.from_body = DenseMatrix::zeros(l.range.len(), 0);
            }
            before.right = Some(SeparatorLink {
                range: extra_range.clone(),
                a: a_extra.clone(),
                to_body: DenseMatrix::zeros(0, nk),
                from_body: DenseMatrix::zeros(nk, 0),
            });
        } else {
            before.right = Some(SeparatorLink {
                range: extra_range.clone(),
                a: a_extra.clone(),
                to_body: self.body.upper_block(k - 1),
                from_body: self.body.lower_block(k),
            });
        }

        // piece after
        let mut after = PartitionBlock {
            index: self.index,
            body_start: extra_range.end,
            body: self.body.slice(k + 1, kk),
            left: None,
            right: self.right.clone(),
            direct_lr: None,
            direct_rl: None,
            corner_slice: None,
            owns_left_diag: false,
        };
        if k + 1 == kk {
            after.left = Some(SeparatorLink {
                range: extra_range,
                a: a_extra,
                to_body: DenseMatrix::zeros(0, nk),
                from_body: DenseMatrix::zeros(nk, 0),
            });
            if let Some(r) = &mut after.right {
                after.direct_lr = Some(r.to_body.clone());
                after.direct_rl = Some(r.from_body.clone());
                r.to_body = DenseMatrix::zeros(0, r.range.len());
                r.from_body = DenseMatrix::zeros(r.range.len(), 0);
            }
        } else {
            after.left = Some(SeparatorLink {
                range: extra_range,
                a: a_extra,
                to_body: self.body.lower_block(k + 1),
                from_body: self.body.upper_block(k),
            });
        }
        (before, after)
    }
}

/// Extracts partition `i` (1-based).
pub fn extract_block(a: &StructuredMatrix, plan: &PartitionPlan, i: usize) -> Result<PartitionBlock> {
    if i == 0 || i > plan.p {
        return Err(Error::IndexOutOfRange { index: i, max: plan.p });
    }
    let bi = i - 1;
    let range = plan.body_ranges[bi].clone();
    let sizes = plan.body_superblocks(bi);
    let body = BlockTridiag::from_matrix(a, range.start, sizes);
    let first = 0..body.size(0);
    let last = body.rows_of(body.len() - 1);
    let shift = |r: &Range<usize>| range.start + r.start..range.start + r.end;
    let left = plan.left_separator(bi).map(|k| {
        let s = plan.separators[k].clone();
        SeparatorLink {
            a: dense_slice(a, &s, &s),
            to_body: dense_slice(a, &shift(&first), &s),
            from_body: dense_slice(a, &s, &shift(&first)),
            range: s,
        }
    });
    let right = plan.right_separator(bi).map(|k| {
        let s = plan.separators[k].clone();
        SeparatorLink {
            a: dense_slice(a, &s, &s),
            to_body: dense_slice(a, &shift(&last), &s),
            from_body: dense_slice(a, &s, &shift(&last)),
            range: s,
        }
    });
    let corner_slice = if plan.has_corner && bi == 0 {
        a.corner().map(|c| corner_block(a, c, plan))
    } else {
        None
    };
    Ok(PartitionBlock {
        index: i,
        body_start: range.start,
        body,
        left,
        right,
        direct_lr: None,
        direct_rl: None,
        corner_slice,
        owns_left_diag: plan.has_corner && bi == 0,
    })
}

/// The corner as a (first separator × last separator) block.
pub fn corner_block(a: &StructuredMatrix, c: &Corner, plan: &PartitionPlan) -> DenseMatrix {
    debug_assert_eq!(c.position, CornerPosition::UpperRight);
    let rows = plan.separators[0].clone();
    let cols = plan.separators.last().unwrap().clone();
    dense_slice(a, &rows, &cols)
}

pub(crate) fn dense_slice(a: &StructuredMatrix, rows: &Range<usize>, cols: &Range<usize>) -> DenseMatrix {
    let mut d = DenseMatrix::zeros(rows.len(), cols.len());
    for i in rows.clone() {
        for j in cols.clone() {
            if a.is_structural(i, j) {
                d[(i - rows.start, j - cols.start)] = a.entry(i, j);
            }
        }
    }
    d
}

/// A row permutation: `(P f)[i] = f[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    perm: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation { perm: (0..n).collect() }
    }

    pub fn from_vec(perm: Vec<usize>) -> Self {
        Permutation { perm }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p)
    }

    /// `P f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&j| f[j]).collect()
    }

    /// `Pᵀ g`.
    pub fn apply_inverse(&self, g: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; g.len()];
        for (i, &j) in self.perm.iter().enumerate() {
            f[j] = g[i];
        }
        f
    }

    /// Dense `P`.
    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.perm.len();
        let mut d = DenseMatrix::zeros(n, n);
        for (i, &j) in self.perm.iter().enumerate() {
            d[(i, j)] = 1.0;
        }
        d
    }
}

/// Moves a lower-left corner to the upper right by cycling the last rows to
/// the top. Returns `(P A, P)`; the unknowns are unchanged, so `A x = f`
/// becomes `(P A) x = P f`.
pub fn permute_corner(a: &StructuredMatrix) -> Result<(StructuredMatrix, Permutation)> {
    let Some(c) = a.corner() else {
        return Err(Error::NothingToPermute);
    };
    if c.position == CornerPosition::UpperRight {
        return Ok((a.clone(), Permutation::identity(a.n())));
    }
    let n = a.n();
    let k = c.rows;
    let s2 = a.s() + k;
    let r2 = a.r().saturating_sub(k).max(c.cols - 1);
    let cc = (k + a.s()).min(n);
    let perm: Vec<usize> = (0..n).map(|i| (i + n - k) % n).collect();
    let len = (0..=s2 + r2)
        .map(|d| n.checked_sub((d as isize - s2 as isize).unsigned_abs()))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::InvalidBandwidth(format!("permuted bandwidths s={s2}, r={r2} exceed n={n}")))?
        .iter()
        .sum();
    let corner = Corner {
        position: CornerPosition::UpperRight,
        rows: k,
        cols: cc,
        data: vec![0.0; k * cc],
    };
    let mut out = StructuredMatrix::make(MatrixKind::CirculantLike, n, 1, s2, r2, vec![0.0; len], Some(corner))?;
    for (i, &old) in perm.iter().enumerate() {
        for (j, v) in a.row_entries(old) {
            if !out.set_entry(i, j, v) {
                return Err(Error::UnsupportedStructure(format!(
                    "entry ({old},{j}) has no place after permutation"
                )));
            }
        }
    }
    Ok((out, Permutation::from_vec(perm)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toeplitz(n: usize) -> StructuredMatrix {
        let mut data = vec![-1.0; n - 1];
        data.extend(vec![2.0; n]);
        data.extend(vec![-1.0; n - 1]);
        StructuredMatrix::make(MatrixKind::Banded, n, 1, 1, 1, data, None).unwrap()
    }

    #[test]
    fn tridiagonal_two_way_split() {
        let plan = plan_partition(&toeplitz(9), 2).unwrap();
        assert_eq!(plan.body_ranges, vec![0..4, 5..9]);
        assert_eq!(plan.separators, vec![4..5]);
        assert_eq!(plan.separator_size, 1);
    }

    #[test]
    fn banded_separator_is_max_bandwidth() {
        let a = StructuredMatrix::generate_random(MatrixKind::Banded, 20, 1, 2, 1, 0, 2.0).unwrap();
        let plan = plan_partition(&a, 3).unwrap();
        assert_eq!(plan.separator_size, 2);
        assert_eq!(plan.separators.len(), 2);
    }

    #[test]
    fn babd_has_four_separators() {
        let a = StructuredMatrix::generate_random(MatrixKind::Babd, 24, 2, 1, 0, 0, 2.0).unwrap();
        let plan = plan_partition(&a, 3).unwrap();
        assert!(plan.has_corner);
        assert_eq!(plan.separators.len(), 4);
        assert_eq!(plan.body_ranges, vec![2..8, 10..16, 18..22]);
    }

    #[test]
    fn too_many_partitions() {
        assert!(matches!(plan_partition(&toeplitz(4), 3), Err(Error::TooManyPartitions(_))));
        assert!(matches!(plan_partition(&toeplitz(5), 1), Err(Error::TooManyPartitions(_))));
    }

    #[test]
    fn toeplitz_couplings() {
        let a = toeplitz(9);
        let plan = plan_partition(&a, 2).unwrap();
        let b = extract_block(&a, &plan, 1).unwrap();
        assert!(b.left.is_none());
        let c1 = b.c1();
        let b1t = b.b1t();
        for r in 0..4 {
            assert_eq!(c1[(r, 0)], if r == 3 { -1.0 } else { 0.0 });
            assert_eq!(b1t[(0, r)], if r == 3 { -1.0 } else { 0.0 });
        }
        assert_eq!(b.to_dense(), a.to_dense().unwrap().block(0, 0, 5, 5));
        assert!(matches!(extract_block(&a, &plan, 3), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn reassembly_reproduces_matrix() {
        for (kind, n, m, s, r) in [
            (MatrixKind::Banded, 30, 1, 2, 3),
            (MatrixKind::BlockTridiagonal, 30, 3, 1, 1),
            (MatrixKind::Babd, 24, 2, 1, 0),
            (MatrixKind::CirculantLike, 25, 1, 1, 1),
        ] {
            let a = StructuredMatrix::generate_random(kind, n, m, s, r, 5, 0.0).unwrap();
            let a = if a.corner().is_some() { permute_corner(&a).unwrap().0 } else { a };
            let plan = plan_partition(&a, 3).unwrap();
            let mut acc = DenseMatrix::zeros(n, n);
            for i in 1..=3 {
                extract_block(&a, &plan, i).unwrap().assemble_into(&mut acc);
            }
            assert_eq!(acc, a.to_dense().unwrap(), "{kind}");
        }
    }

    #[test]
    fn split_preserves_assembly() {
        let a = StructuredMatrix::generate_random(MatrixKind::Banded, 30, 1, 1, 2, 9, 0.0).unwrap();
        let plan = plan_partition(&a, 2).unwrap();
        let b = extract_block(&a, &plan, 1).unwrap();
        let n = 30;
        let mut whole = DenseMatrix::zeros(n, n);
        b.assemble_into(&mut whole);
        for k in [0, 2, b.body.len() - 1] {
            let (x, y) = b.split_at(k);
            let mut acc = DenseMatrix::zeros(n, n);
            x.assemble_into(&mut acc);
            y.assemble_into(&mut acc);
            assert_eq!(acc, whole, "split at {k}");
        }
    }

    #[test]
    fn circulant_permutation() {
        let a = StructuredMatrix::generate_random(MatrixKind::CirculantLike, 12, 1, 1, 1, 2, 0.0).unwrap();
        let (b, p) = permute_corner(&a).unwrap();
        assert_eq!(b.corner().unwrap().position, CornerPosition::UpperRight);
        assert_eq!(b.to_dense().unwrap(), p.to_dense().matmul(&a.to_dense().unwrap()));
        let (c, q) = permute_corner(&b).unwrap();
        assert!(q.is_identity());
        assert_eq!(c, b);
        assert!(matches!(permute_corner(&StructuredMatrix::make(MatrixKind::Banded, 3, 1, 0, 0, vec![1.0; 3], None).unwrap()), Err(Error::NothingToPermute)));
    }
}
