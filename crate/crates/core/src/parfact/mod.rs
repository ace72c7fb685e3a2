//! Global factorization `A = F T G` from per-partition factors and the
//! three-phase parallel solve.
//!
//! Phase 1 applies `F⁻¹` partition by partition (body unknowns become
//! `N⁻¹ f`, separator right-hand sides pick up corrections), phase 2 solves
//! the reduced separator system on one thread and phase 3 applies `G⁻¹`
//! partition by partition. `F`, `T` and `G` exist only implicitly; the
//! `apply_*` maps are exposed so tests can build them densely.

pub mod reduced;

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dense::{norm_inf, DenseMatrix};
use crate::error::{Error, Result};
use crate::localfact::{self, LocalFactorization, Strategy};
use crate::partition::{corner_block, extract_block, permute_corner, plan_partition, PartitionPlan, Permutation};
use crate::structmat::{CornerPosition, MatrixKind, StructuredMatrix};

pub use reduced::{solve_reduced, ReducedSystem};

/// Where a unit's separators sit in the reduced system.
#[derive(Debug, Clone, Copy)]
struct UnitLinks {
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ParallelFactorization {
    pub plan: PartitionPlan,
    pub locals: Vec<LocalFactorization>,
    pub reduced: ReducedSystem,
    pub strategy: Strategy,
    /// Row permutation applied before partitioning (lower-left corners).
    pub permutation: Option<Permutation>,
    links: Vec<Vec<UnitLinks>>,
    pool: Arc<rayon::ThreadPool>,
}

/// Timing-free statistics of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveStats {
    /// Operations of the sequential phase (reduced factorization plus solve).
    pub reduced_ops: u64,
}

fn check_compatible(a: &StructuredMatrix, strategy: Strategy) -> Result<()> {
    if strategy == Strategy::Arce && !matches!(a.kind(), MatrixKind::Abd | MatrixKind::Babd) {
        return Err(Error::UnsupportedKind(format!(
            "{} needs an abd or babd matrix, got {}",
            strategy,
            a.kind().name()
        )));
    }
    Ok(())
}

fn build_pool(workers: usize) -> Result<Arc<rayon::ThreadPool>> {
    if workers == 0 {
        return Err(Error::InvalidParameter("workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Arc::new)
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

/// Factors `a` over `p` partitions on the default number of workers.
pub fn parallel_factor(a: &StructuredMatrix, p: usize, strategy: Strategy, tol: f64) -> Result<ParallelFactorization> {
    parallel_factor_with(a, p, strategy, tol, rayon::current_num_threads().max(1))
}

/// As [`parallel_factor`] with an explicit worker count.
pub fn parallel_factor_with(
    a: &StructuredMatrix,
    p: usize,
    strategy: Strategy,
    tol: f64,
    workers: usize,
) -> Result<ParallelFactorization> {
    check_compatible(a, strategy)?;
    let pool = build_pool(workers)?;
    let (a, permutation) = match a.corner() {
        Some(c) if c.position == CornerPosition::LowerLeft => {
            let (pa, perm) = permute_corner(a)?;
            (pa, Some(perm))
        }
        _ => (a.clone(), None),
    };
    let plan = plan_partition(&a, p)?;
    let blocks = (1..=p).map(|i| extract_block(&a, &plan, i)).collect::<Result<Vec<_>>>()?;
    let locals: Vec<LocalFactorization> = pool.install(|| {
        blocks
            .par_iter()
            .map(|b| localfact::factor(b, strategy, tol).map_err(|e| e.in_partition(b.index)))
            .collect::<Result<Vec<_>>>()
    })?;

    // separators in global order: the planned ones and the adaptive extras
    let mut positions: Vec<Range<usize>> = plan.separators.clone();
    for l in &locals {
        positions.extend(l.extra_separators.iter().map(|e| e.range.clone()));
    }
    positions.sort_by_key(|r| r.start);
    let index_of = |r: &Range<usize>| positions.binary_search_by_key(&r.start, |x| x.start).unwrap();
    let q = positions.len();
    let mut diag: Vec<DenseMatrix> = positions.iter().map(|r| DenseMatrix::zeros(r.len(), r.len())).collect();
    let mut sub: Vec<DenseMatrix> = (1..q)
        .map(|k| DenseMatrix::zeros(positions[k].len(), positions[k - 1].len()))
        .collect();
    let mut sup: Vec<DenseMatrix> = (1..q)
        .map(|k| DenseMatrix::zeros(positions[k - 1].len(), positions[k].len()))
        .collect();
    let mut links = Vec::with_capacity(locals.len());
    for l in &locals {
        if let Some(a0) = l.left_diag() {
            let k = index_of(&l.units[0].left.clone().unwrap());
            diag[k] = diag[k].add(a0);
        }
        let mut ul = Vec::with_capacity(l.units.len());
        for u in &l.units {
            let left = u.left.as_ref().map(index_of);
            let right = u.right.as_ref().map(index_of);
            if let Some(k) = left {
                diag[k] = diag[k].add(&u.alpha1);
            }
            if let Some(k) = right {
                diag[k] = diag[k].add(&u.alpha2);
            }
            if let (Some(kl), Some(kr)) = (left, right) {
                debug_assert_eq!(kr, kl + 1);
                sup[kl] = sup[kl].add(&u.gamma);
                sub[kl] = sub[kl].add(&u.beta);
            }
            ul.push(UnitLinks { left, right });
        }
        links.push(ul);
    }
    let corner = a.corner().map(|c| corner_block(&a, c, &plan));
    let reduced = ReducedSystem::new(positions, diag, sub, sup, corner)?;
    Ok(ParallelFactorization {
        plan,
        locals,
        reduced,
        strategy,
        permutation,
        links,
        pool,
    })
}

impl ParallelFactorization {
    pub fn n(&self) -> usize {
        self.plan.n
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Number of adaptive extra separators over all partitions.
    pub fn extra_count(&self) -> usize {
        self.locals.iter().map(|l| l.extra_separators.len()).sum()
    }

    /// Solves `A x = f`.
    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.solve_with_stats(f).map(|(x, _)| x)
    }

    pub fn solve_with_stats(&self, f: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        if f.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "rhs of length {} for a matrix of order {}",
                f.len(),
                self.n()
            )));
        }
        let f = match &self.permutation {
            Some(p) => p.apply(f),
            None => f.to_vec(),
        };
        let (u, g) = self.phase1(&f);
        let (xs, ops) = self.reduced.solve_counted(&g)?;
        let x = self.phase3(&u, &xs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularFactor);
        }
        Ok((
            x,
            SolveStats {
                reduced_ops: self.reduced.factor_ops() + ops,
            },
        ))
    }

    /// Per-unit `N⁻¹ f` pieces and the reduced right-hand side.
    fn phase1(&self, f: &[f64]) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
        let pieces: Vec<Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>> = self.pool.install(|| {
            self.locals
                .par_iter()
                .map(|l| l.units.iter().map(|u| u.forward(&f[u.body_range()])).collect())
                .collect()
        });
        let offsets = self.reduced_offsets();
        let mut g = vec![0.0; self.reduced.order()];
        for (k, r) in self.reduced.positions.iter().enumerate() {
            g[offsets[k]..offsets[k] + r.len()].copy_from_slice(&f[r.clone()]);
        }
        // fixed summation order: partitions, then units, left before right
        let mut u_all = Vec::with_capacity(pieces.len());
        for (ul, lp) in self.links.iter().zip(pieces) {
            let mut us = Vec::with_capacity(lp.len());
            for (links, (u, dl, dr)) in ul.iter().zip(lp) {
                if let Some(k) = links.left {
                    for (i, d) in dl.iter().enumerate() {
                        g[offsets[k] + i] += d;
                    }
                }
                if let Some(k) = links.right {
                    for (i, d) in dr.iter().enumerate() {
                        g[offsets[k] + i] += d;
                    }
                }
                us.push(u);
            }
            u_all.push(us);
        }
        (u_all, g)
    }

    fn phase3(&self, u: &[Vec<Vec<f64>>], xs: &[f64]) -> Vec<f64> {
        let offsets = self.reduced_offsets();
        let sep = |k: Option<usize>| -> &[f64] {
            match k {
                Some(k) => &xs[offsets[k]..offsets[k] + self.reduced.positions[k].len()],
                None => &[],
            }
        };
        let bodies: Vec<Vec<Vec<f64>>> = self.pool.install(|| {
            self.locals
                .par_iter()
                .zip(&self.links)
                .zip(u)
                .map(|((l, ul), us)| {
                    l.units
                        .iter()
                        .zip(ul)
                        .zip(us)
                        .map(|((unit, k), uu)| unit.backward(uu, sep(k.left), sep(k.right)))
                        .collect()
                })
                .collect()
        });
        let mut x = vec![0.0; self.n()];
        for (k, r) in self.reduced.positions.iter().enumerate() {
            x[r.clone()].copy_from_slice(sep(Some(k)));
        }
        for (l, bs) in self.locals.iter().zip(bodies) {
            for (unit, b) in l.units.iter().zip(bs) {
                x[unit.body_range()].copy_from_slice(&b);
            }
        }
        x
    }

    fn reduced_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.reduced.q());
        let mut acc = 0;
        for r in &self.reduced.positions {
            off.push(acc);
            acc += r.len();
        }
        off
    }

    /// `F⁻¹ f` on the (permuted) system, in global positions: body slots hold
    /// `N⁻¹ f`, separator slots the reduced right-hand side.
    pub fn apply_f_inv(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.n() {
            return Err(Error::DimensionMismatch(format!("vector of length {}", f.len())));
        }
        let (u, g) = self.phase1(f);
        let mut out = vec![0.0; self.n()];
        self.scatter(&u, &g, &mut out);
        Ok(out)
    }

    /// `G⁻¹ y`: body slots of `y` are `N⁻¹`-space values, separator slots
    /// are separator unknowns.
    pub fn apply_g_inv(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch(format!("vector of length {}", y.len())));
        }
        let (u, xs) = self.gather(y);
        Ok(self.phase3(&u, &xs))
    }

    /// `T` in global positions: identity on body rows, `T_p` on separators.
    pub fn t_dense(&self) -> DenseMatrix {
        let n = self.n();
        let mut t = DenseMatrix::identity(n);
        let tp = self.reduced.to_dense();
        let idx: Vec<usize> = self.reduced.positions.iter().flat_map(|r| r.clone()).collect();
        for &i in &idx {
            t[(i, i)] = 0.0;
        }
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                t[(i, j)] = tp[(a, b)];
            }
        }
        t
    }

    fn scatter(&self, u: &[Vec<Vec<f64>>], g: &[f64], out: &mut [f64]) {
        let offsets = self.reduced_offsets();
        for (k, r) in self.reduced.positions.iter().enumerate() {
            out[r.clone()].copy_from_slice(&g[offsets[k]..offsets[k] + r.len()]);
        }
        for (l, us) in self.locals.iter().zip(u) {
            for (unit, uu) in l.units.iter().zip(us) {
                out[unit.body_range()].copy_from_slice(uu);
            }
        }
    }

    fn gather(&self, y: &[f64]) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
        let xs: Vec<f64> = self.reduced.positions.iter().flat_map(|r| y[r.clone()].iter().copied()).collect();
        let u = self
            .locals
            .iter()
            .map(|l| l.units.iter().map(|unit| y[unit.body_range()].to_vec()).collect())
            .collect();
        (u, xs)
    }
}

/// `‖A x − f‖∞ / ‖f‖∞` (the absolute residual when `f = 0`).
pub fn residual(a: &StructuredMatrix, x: &[f64], f: &[f64]) -> Result<f64> {
    if f.len() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "rhs of length {} for a matrix of order {}",
            f.len(),
            a.n()
        )));
    }
    let ax = a.matvec(x)?;
    let r: Vec<f64> = ax.iter().zip(f).map(|(p, q)| p - q).collect();
    let nf = norm_inf(f);
    Ok(if nf > 0.0 { norm_inf(&r) / nf } else { norm_inf(&r) })
}
