//! Parareal as a splitting iteration on the window initial values.
//!
//! With fine propagators `F_i` and cheap coarse ones `G_i`,
//!
//! ```text
//! y_{01}^{(k+1)} = y0
//! y_{0,i+1}^{(k+1)} = G_i y_{0i}^{(k+1)} + (F_i − G_i) y_{0i}^{(k)}
//! ```
//!
//! The `F_i` terms of one iteration run concurrently, the `G_i` sweep is
//! sequential. With a fine propagator matching the discrete window solve this
//! converges to the values of the reduced recursion in
//! [`crate::odeparallel`].

use std::sync::Arc;

use rayon::prelude::*;

use crate::dense::{gemv_acc, DenseLu, DenseMatrix};
use crate::error::{Error, Result};
use crate::odeparallel::{discretize_window, Forcing, IVProblem, Method, TimeGrid, WindowSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagatorKind {
    FineDiscrete,
    CoarseDiscrete,
    /// `e^{(τ_i − τ_{i−1}) L}` on the initial value; the forcing is carried
    /// by the discrete rule of `method` with `steps` steps.
    MatrixExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Propagator {
    pub kind: PropagatorKind,
    pub method: Method,
    /// Steps per window.
    pub steps: usize,
}

impl Propagator {
    pub fn fine(method: Method, steps: usize) -> Self {
        Propagator {
            kind: PropagatorKind::FineDiscrete,
            method,
            steps,
        }
    }

    pub fn coarse(method: Method, steps: usize) -> Self {
        Propagator {
            kind: PropagatorKind::CoarseDiscrete,
            method,
            steps,
        }
    }

    pub fn exponential(method: Method, steps: usize) -> Self {
        Propagator {
            kind: PropagatorKind::MatrixExponential,
            method,
            steps,
        }
    }

    /// Precomputes the per-window operators.
    pub fn prepare(&self, prob: &IVProblem, grid: &TimeGrid) -> Result<Prepared> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("propagator needs at least one step".into()));
        }
        let g = TimeGrid::from_points(grid.tau.clone(), self.steps)?;
        let p = g.p();
        let windows = (1..=p)
            .into_par_iter()
            .map(|i| discretize_window(prob, &g, i, self.method))
            .collect::<Result<Vec<_>>>()?;
        let ops = match self.kind {
            PropagatorKind::FineDiscrete | PropagatorKind::CoarseDiscrete => windows.into_iter().map(Op::March).collect(),
            PropagatorKind::MatrixExponential => windows
                .into_par_iter()
                .enumerate()
                .map(|(k, ws)| {
                    let e = matrix_exponential(&prob.l, grid.tau[k + 1] - grid.tau[k])?;
                    let zero = vec![0.0; prob.m()];
                    let z = ws.march(&ws.gvec, &zero);
                    let tail = z[z.len() - prob.m()..].to_vec();
                    Ok(Op::Exp(e, tail))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Prepared { m: prob.m(), ops })
    }
}

#[derive(Debug, Clone)]
enum Op {
    March(WindowSystem),
    Exp(DenseMatrix, Vec<f64>),
}

/// A propagator bound to one problem and grid.
#[derive(Debug, Clone)]
pub struct Prepared {
    m: usize,
    ops: Vec<Op>,
}

impl Prepared {
    /// Maps `y` at `τ_{i−1}` to `τ_i` (window `i`, 1-based).
    pub fn apply(&self, i: usize, y: &[f64]) -> Result<Vec<f64>> {
        if i == 0 || i > self.ops.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                max: self.ops.len(),
            });
        }
        if y.len() != self.m {
            return Err(Error::DimensionMismatch(format!("state of length {} for m={}", y.len(), self.m)));
        }
        let out = match &self.ops[i - 1] {
            Op::March(ws) => {
                let traj = ws.march(&ws.gvec, y);
                traj[traj.len() - self.m..].to_vec()
            }
            Op::Exp(e, tail) => {
                let mut out = tail.clone();
                gemv_acc(&mut out, e.as_slice(), y, self.m, self.m, 1.0);
                out
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularWindow(i));
        }
        Ok(out)
    }

    pub fn windows(&self) -> usize {
        self.ops.len()
    }
}

/// One application of `prop` on window `i`.
pub fn propagate(prop: &Propagator, prob: &IVProblem, grid: &TimeGrid, i: usize, y: &[f64]) -> Result<Vec<f64>> {
    prop.prepare(prob, grid)?.apply(i, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PararealState {
    pub k: usize,
    /// `y_{0i}^{(k)}`, `i = 1..p`.
    pub inits: Vec<Vec<f64>>,
    /// `F_i y_{0i}^{(k)}` from the last iteration (empty before the first).
    pub fine_cache: Vec<Vec<f64>>,
    /// `G_i y_{0i}^{(k)}`, `i = 1..p−1`.
    pub coarse_cache: Vec<Vec<f64>>,
    /// `max_i ‖y_{0i}^{(k+1)} − y_{0i}^{(k)}‖∞` per iteration.
    pub history: Vec<f64>,
}

impl PararealState {
    /// Initial iterate from a sequential coarse sweep.
    pub fn initial(coarse: &Prepared, y0: &[f64], p: usize) -> Result<Self> {
        let mut inits = Vec::with_capacity(p);
        let mut coarse_cache = Vec::with_capacity(p.saturating_sub(1));
        inits.push(y0.to_vec());
        for i in 1..p {
            let g = coarse.apply(i, &inits[i - 1])?;
            coarse_cache.push(g.clone());
            inits.push(g);
        }
        Ok(PararealState {
            k: 0,
            inits,
            fine_cache: Vec::new(),
            coarse_cache,
            history: Vec::new(),
        })
    }

    fn max_norm(&self) -> f64 {
        self.inits.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// One Parareal iteration.
pub fn parareal_iterate(state: &PararealState, fine: &Prepared, coarse: &Prepared) -> Result<PararealState> {
    let p = state.inits.len();
    let fine_cache: Vec<Vec<f64>> = (1..p)
        .into_par_iter()
        .map(|i| fine.apply(i, &state.inits[i - 1]))
        .collect::<Result<Vec<_>>>()?;
    let mut inits = Vec::with_capacity(p);
    let mut coarse_cache = Vec::with_capacity(p.saturating_sub(1));
    inits.push(state.inits[0].clone());
    for i in 1..p {
        let g = coarse.apply(i, &inits[i - 1])?;
        let next: Vec<f64> = g
            .iter()
            .zip(&fine_cache[i - 1])
            .zip(&state.coarse_cache[i - 1])
            .map(|((gn, f), go)| gn + (f - go))
            .collect();
        coarse_cache.push(g);
        inits.push(next);
    }
    let update = inits
        .iter()
        .zip(&state.inits)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0f64, f64::max);
    let mut history = state.history.clone();
    history.push(update);
    Ok(PararealState {
        k: state.k + 1,
        inits,
        fine_cache,
        coarse_cache,
        history,
    })
}

#[derive(Debug, Clone)]
pub struct PararealOutcome {
    pub inits: Vec<Vec<f64>>,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub converged: bool,
    pub state: PararealState,
}

/// Default stopping tolerance (relative to the largest initial value).
pub const DEFAULT_TOL: f64 = 1e-8;

/// Iterates until `max_i ‖Δy_{0i}‖∞ ≤ tol · max_i ‖y_{0i}‖∞` or `max_iter`
/// (not converging is reported through `converged`, not as an error).
pub fn parareal_solve(
    prob: &IVProblem,
    grid: &TimeGrid,
    fine: &Propagator,
    coarse: &Propagator,
    tol: f64,
    max_iter: usize,
) -> Result<PararealOutcome> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let p = grid.p();
    let f = fine.prepare(prob, grid)?;
    let g = coarse.prepare(prob, grid)?;
    let mut state = PararealState::initial(&g, &prob.y0, p)?;
    let mut converged = p == 1;
    while !converged && state.k < max_iter {
        state = parareal_iterate(&state, &f, &g)?;
        let upd = *state.history.last().unwrap();
        converged = upd <= tol * state.max_norm();
    }
    Ok(PararealOutcome {
        inits: state.inits.clone(),
        iterations: state.k,
        history: state.history.clone(),
        converged,
        state,
    })
}

/// As [`parareal_solve`] on a pool of `workers` threads.
pub fn parareal_solve_with(
    prob: &IVProblem,
    grid: &TimeGrid,
    fine: &Propagator,
    coarse: &Propagator,
    tol: f64,
    max_iter: usize,
    workers: usize,
) -> Result<PararealOutcome> {
    if workers == 0 {
        return Err(Error::InvalidParameter("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| parareal_solve(prob, grid, fine, coarse, tol, max_iter))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// `e^{tL}` by scaling and squaring around a degree-13 Padé approximant.
pub fn matrix_exponential(l: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    let m = l.rows();
    if l.cols() != m {
        return Err(Error::DimensionMismatch(format!("expm of a {}x{} matrix", m, l.cols())));
    }
    if !t.is_finite() {
        return Err(Error::ExpmFailure(format!("non-finite time {t}")));
    }
    let a = l.scaled(t);
    let norm1 = a.transpose().norm_inf();
    if !norm1.is_finite() {
        return Err(Error::ExpmFailure("non-finite entries".into()));
    }
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scaled(0.5f64.powi(s));
    let id = DenseMatrix::identity(m);
    let b = &PADE13;
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let comb = |c6: f64, c4: f64, c2: f64| a6.scaled(c6).add(&a4.scaled(c4)).add(&a2.scaled(c2));
    let u = a.matmul(&a6.matmul(&comb(b[13], b[11], b[9])).add(&comb(b[7], b[5], b[3])).add(&id.scaled(b[1])));
    let v = a6.matmul(&comb(b[12], b[10], b[8])).add(&comb(b[6], b[4], b[2])).add(&id.scaled(b[0]));
    let lu = DenseLu::new(&v.sub(&u)).map_err(|_| Error::ExpmFailure("singular Padé denominator".into()))?;
    let mut r = lu.solve_matrix(&v.add(&u));
    for _ in 0..s {
        r = r.matmul(&r);
    }
    if r.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::ExpmFailure("overflow while squaring".into()));
    }
    Ok(r)
}

/// Method-of-lines heat problem on `(0, 1)` with `m` interior points:
/// `L = tridiag(1, −2, 1)/Δx²`, `Δx = 1/(m+1)`, `y0 = sin(πx) + sin(3πx)/2`
/// and a uniform source `g(t) = e^{−t}`.
pub fn heat_problem(m: usize, t_end: f64) -> Result<IVProblem> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let dx = 1.0 / (m + 1) as f64;
    let c = 1.0 / (dx * dx);
    let mut l = DenseMatrix::zeros(m, m);
    for i in 0..m {
        l[(i, i)] = -2.0 * c;
        if i > 0 {
            l[(i, i - 1)] = c;
        }
        if i + 1 < m {
            l[(i, i + 1)] = c;
        }
    }
    let pi = std::f64::consts::PI;
    let y0 = (1..=m)
        .map(|j| {
            let x = j as f64 * dx;
            (pi * x).sin() + 0.5 * (3.0 * pi * x).sin()
        })
        .collect();
    let g: Forcing = Arc::new(move |t: f64| vec![(-t).exp(); m]);
    IVProblem::new(l, Some(g), 0.0, t_end, y0)
}
