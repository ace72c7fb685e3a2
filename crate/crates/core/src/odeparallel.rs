//! Time-parallel solution of `y' = L y + g(t)` over `p` windows.
//!
//! Each window `i` is discretized by a one-step method into the lower block
//! bidiagonal system `M_i y_i = v_i y_{0i} + g_i`. The windows are solved
//! concurrently with zero initial value (`z_i = M_i⁻¹ g_i`) and for the
//! initial-value response (`w_i = M_i⁻¹ v_i`); the window initial values then
//! follow from the short recursion `y_{0,i+1} = z_{Ni} + w_{Ni} y_{0i}` and
//! the trajectories are updated in parallel. Window 1 already knows its
//! initial value and is marched directly.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dense::{gemv_acc, DenseLu, DenseMatrix};
use crate::error::{Error, Result};
use crate::structmat::{parse_vector, write_vector};

/// Forcing term `t ↦ g(t)`.
pub type Forcing = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ImplicitEuler,
    Trapezoidal,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ImplicitEuler => "ie",
            Method::Trapezoidal => "tr",
        }
    }

    pub fn from_name(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "ie" | "implicit-euler" | "implicit_euler" | "euler" => Some(Method::ImplicitEuler),
            "tr" | "trapezoidal" | "trap" => Some(Method::Trapezoidal),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone)]
pub struct IVProblem {
    pub l: DenseMatrix,
    pub g: Option<Forcing>,
    pub t0: f64,
    pub t_end: f64,
    pub y0: Vec<f64>,
}

impl fmt::Debug for IVProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IVProblem")
            .field("m", &self.m())
            .field("forced", &self.g.is_some())
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .finish()
    }
}

impl IVProblem {
    pub fn new(l: DenseMatrix, g: Option<Forcing>, t0: f64, t_end: f64, y0: Vec<f64>) -> Result<Self> {
        if l.rows() != l.cols() {
            return Err(Error::DimensionMismatch(format!("L is {}x{}", l.rows(), l.cols())));
        }
        if y0.len() != l.rows() {
            return Err(Error::DimensionMismatch(format!("y0 of length {} for m={}", y0.len(), l.rows())));
        }
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidInterval(format!("[{t0}, {t_end}]")));
        }
        Ok(IVProblem { l, g, t0, t_end, y0 })
    }

    pub fn m(&self) -> usize {
        self.l.rows()
    }

    fn forcing(&self, t: f64) -> Result<Vec<f64>> {
        match &self.g {
            None => Ok(vec![0.0; self.m()]),
            Some(g) => {
                let v = g(t);
                if v.len() != self.m() {
                    return Err(Error::DimensionMismatch(format!("g(t) of length {} for m={}", v.len(), self.m())));
                }
                Ok(v)
            }
        }
    }
}

/// Coarse points `τ_0 < … < τ_p` with `N` fine steps per window.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub tau: Vec<f64>,
    pub n_steps: usize,
    pub h: Vec<f64>,
}

impl TimeGrid {
    /// Grid on explicit coarse points.
    pub fn from_points(tau: Vec<f64>, n_steps: usize) -> Result<Self> {
        if tau.len() < 2 {
            return Err(Error::InvalidInterval("need at least two coarse points".into()));
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        if tau.iter().any(|t| !t.is_finite()) || tau.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInterval("coarse points must increase strictly".into()));
        }
        let h = tau.windows(2).map(|w| (w[1] - w[0]) / n_steps as f64).collect();
        Ok(TimeGrid { tau, n_steps, h })
    }

    pub fn p(&self) -> usize {
        self.tau.len() - 1
    }

    /// Time of fine point `n` in window `i` (1-based).
    pub fn time(&self, i: usize, n: usize) -> f64 {
        if n == self.n_steps {
            self.tau[i]
        } else {
            self.tau[i - 1] + n as f64 * self.h[i - 1]
        }
    }
}

/// Uniform coarse mesh on `[t0, t_end]`.
pub fn coarse_mesh(t0: f64, t_end: f64, p: usize, n_steps: usize) -> Result<TimeGrid> {
    if p == 0 {
        return Err(Error::InvalidParameter("p must be at least 1".into()));
    }
    if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidInterval(format!("[{t0}, {t_end}]")));
    }
    let d = (t_end - t0) / p as f64;
    let mut tau: Vec<f64> = (0..p).map(|i| t0 + i as f64 * d).collect();
    tau.push(t_end);
    TimeGrid::from_points(tau, n_steps)
}

/// The window system `M_i y_i = v_i y_{0i} + g_i`, stored by its blocks:
/// `M_i` has `D` on the diagonal and `−E` below it, `v_i = [E; 0; …]`.
#[derive(Debug, Clone)]
pub struct WindowSystem {
    /// 1-based window index.
    pub i: usize,
    pub method: Method,
    pub h: f64,
    pub n_steps: usize,
    pub d: DenseMatrix,
    pub e: DenseMatrix,
    pub gvec: Vec<f64>,
    lu: DenseLu,
}

impl WindowSystem {
    pub fn m(&self) -> usize {
        self.d.rows()
    }

    /// The `mN × m` coupling block `v_i`.
    pub fn v(&self) -> DenseMatrix {
        let m = self.m();
        let mut v = DenseMatrix::zeros(m * self.n_steps, m);
        v.set_block(0, 0, &self.e);
        v
    }

    /// Dense `M_i` (oracle use).
    pub fn to_dense(&self) -> DenseMatrix {
        let (m, n) = (self.m(), self.n_steps);
        let mut a = DenseMatrix::zeros(m * n, m * n);
        let neg = self.e.scaled(-1.0);
        for k in 0..n {
            a.set_block(k * m, k * m, &self.d);
            if k > 0 {
                a.set_block(k * m, (k - 1) * m, &neg);
            }
        }
        a
    }

    /// `y_n = D⁻¹ (b_n + E y_{n−1})` for `n = 1..N`, from `y_0 = init`.
    pub(crate) fn march(&self, b: &[f64], init: &[f64]) -> Vec<f64> {
        let m = self.m();
        let mut out = vec![0.0; m * self.n_steps];
        let mut prev = init.to_vec();
        for k in 0..self.n_steps {
            let mut r = b[k * m..(k + 1) * m].to_vec();
            gemv_acc(&mut r, self.e.as_slice(), &prev, m, m, 1.0);
            self.lu.solve_in_place(&mut r);
            out[k * m..(k + 1) * m].copy_from_slice(&r);
            prev = r;
        }
        out
    }
}

/// Builds window `i` (1-based) of `prob` on `grid`.
pub fn discretize_window(prob: &IVProblem, grid: &TimeGrid, i: usize, method: Method) -> Result<WindowSystem> {
    if i == 0 || i > grid.p() {
        return Err(Error::IndexOutOfRange { index: i, max: grid.p() });
    }
    let m = prob.m();
    let h = grid.h[i - 1];
    let n = grid.n_steps;
    let id = DenseMatrix::identity(m);
    let (d, e) = match method {
        Method::ImplicitEuler => (id.sub(&prob.l.scaled(h)), id),
        Method::Trapezoidal => (id.sub(&prob.l.scaled(h / 2.0)), id.add(&prob.l.scaled(h / 2.0))),
    };
    let lu = DenseLu::new(&d).map_err(|_| Error::StepTooLarge(i))?;
    let mut gvec = vec![0.0; m * n];
    if prob.g.is_some() {
        let mut g_prev = prob.forcing(grid.time(i, 0))?;
        for k in 0..n {
            let g_next = prob.forcing(grid.time(i, k + 1))?;
            let seg = &mut gvec[k * m..(k + 1) * m];
            for j in 0..m {
                seg[j] = match method {
                    Method::ImplicitEuler => h * g_next[j],
                    Method::Trapezoidal => h / 2.0 * (g_prev[j] + g_next[j]),
                };
            }
            g_prev = g_next;
        }
    }
    Ok(WindowSystem {
        i,
        method,
        h,
        n_steps: n,
        d,
        e,
        gvec,
        lu,
    })
}

/// `z = M_i⁻¹ g_i` and `w = M_i⁻¹ v_i` of one window.
#[derive(Debug, Clone)]
pub struct WindowSolution {
    pub i: usize,
    pub m: usize,
    pub n_steps: usize,
    pub z: Vec<f64>,
    /// `mN × m`.
    pub w: DenseMatrix,
}

impl WindowSolution {
    pub fn z_n(&self) -> &[f64] {
        &self.z[self.m * (self.n_steps - 1)..]
    }

    pub fn w_n(&self) -> DenseMatrix {
        self.w.block(self.m * (self.n_steps - 1), 0, self.m, self.m)
    }
}

fn check_finite(i: usize, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::SingularWindow(i))
    }
}

/// Forward block substitution for `z` and the `m` columns of `w`.
pub fn solve_window_homogeneous(ws: &WindowSystem) -> Result<WindowSolution> {
    let m = ws.m();
    let z = ws.march(&ws.gvec, &vec![0.0; m]);
    check_finite(ws.i, &z)?;
    let zero = vec![0.0; m * ws.n_steps];
    let mut w = DenseMatrix::zeros(m * ws.n_steps, m);
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        let col = ws.march(&zero, &e);
        check_finite(ws.i, &col)?;
        w.set_column(j, &col);
    }
    Ok(WindowSolution {
        i: ws.i,
        m,
        n_steps: ws.n_steps,
        z,
        w,
    })
}

/// Window initial values from `y_{0,i+1} = z_{Ni} + w_{Ni} y_{0i}`.
pub fn reduced_recursion(sols: &[WindowSolution], y0: &[f64]) -> Vec<Vec<f64>> {
    let mut inits = Vec::with_capacity(sols.len());
    let mut y = y0.to_vec();
    for (k, s) in sols.iter().enumerate() {
        inits.push(y.clone());
        if k + 1 < sols.len() {
            y = next_init(s, &y);
        }
    }
    inits
}

fn next_init(s: &WindowSolution, y: &[f64]) -> Vec<f64> {
    let m = s.m;
    let mut next = s.z_n().to_vec();
    let wn = s.w_n();
    gemv_acc(&mut next, wn.as_slice(), y, m, m, 1.0);
    next
}

/// `ŷ_i = z_i + w_i y_{0i}` for one window.
fn update(s: &WindowSolution, y0i: &[f64]) -> Vec<f64> {
    let mut y = s.z.clone();
    gemv_acc(&mut y, s.w.as_slice(), y0i, s.m * s.n_steps, s.m, 1.0);
    y
}

/// Discrete solution at the `pN + 1` fine points, each stored once.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub m: usize,
    pub grid: TimeGrid,
    /// `(pN + 1)·m` values, point by point.
    pub y: Vec<f64>,
}

impl Trajectory {
    fn from_windows(m: usize, grid: &TimeGrid, y0: &[f64], windows: Vec<Vec<f64>>) -> Self {
        let mut y = Vec::with_capacity(m * (grid.p() * grid.n_steps + 1));
        y.extend_from_slice(y0);
        for w in windows {
            y.extend(w);
        }
        Trajectory {
            m,
            grid: grid.clone(),
            y,
        }
    }

    pub fn p(&self) -> usize {
        self.grid.p()
    }

    pub fn points(&self) -> usize {
        self.y.len() / self.m
    }

    /// Point `k` in `0..=pN`.
    pub fn point(&self, k: usize) -> &[f64] {
        &self.y[k * self.m..(k + 1) * self.m]
    }

    /// `y_{ni}`, with `y_{0i}` shared with `y_{N,i−1}`.
    pub fn value(&self, i: usize, n: usize) -> &[f64] {
        self.point((i - 1) * self.grid.n_steps + n)
    }

    pub fn endpoint(&self) -> &[f64] {
        self.point(self.points() - 1)
    }

    pub fn max_abs(&self) -> f64 {
        self.y.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `TRAJ 1 m p N`, then one VEC block per point.
    pub fn write(&self) -> String {
        let mut out = format!("TRAJ 1 {} {} {}\n", self.m, self.p(), self.grid.n_steps);
        for k in 0..self.points() {
            out.push_str(&write_vector(self.point(k)));
        }
        out
    }

    /// Parses [`Trajectory::write`] output; returns `(m, p, N, points)`.
    pub fn parse(text: &str) -> Result<(usize, usize, usize, Vec<Vec<f64>>)> {
        let mut lines = text.lines();
        let head = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let f: Vec<&str> = head.split_whitespace().collect();
        if f.len() != 5 || f[0] != "TRAJ" {
            return Err(Error::Parse {
                line: 1,
                msg: "expected TRAJ 1 <m> <p> <N>".into(),
            });
        }
        if f[1] != "1" {
            return Err(Error::UnsupportedVersion(f[1].into()));
        }
        let num = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line: 1,
                msg: format!("bad count {s}"),
            })
        };
        let (m, p, n) = (num(f[2])?, num(f[3])?, num(f[4])?);
        let rest: Vec<&str> = lines.collect();
        let block = m + 1;
        if rest.len() != block * (p * n + 1) {
            return Err(Error::Parse {
                line: 2,
                msg: format!("expected {} VEC blocks of length {m}", p * n + 1),
            });
        }
        let pts = rest.chunks(block).map(|c| parse_vector(&c.join("\n"))).collect::<Result<Vec<_>>>()?;
        Ok((m, p, n, pts))
    }
}

/// Options of the parallel pipeline.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub workers: usize,
    /// March window 1 directly from `y0` instead of splitting it.
    pub short_circuit: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            workers: rayon::current_num_threads().max(1),
            short_circuit: true,
        }
    }
}

/// Parallel pipeline with default options.
pub fn solve_ivp_parallel(prob: &IVProblem, grid: &TimeGrid, method: Method) -> Result<Trajectory> {
    solve_ivp_parallel_with(prob, grid, method, OdeOptions::default())
}

pub fn solve_ivp_parallel_with(prob: &IVProblem, grid: &TimeGrid, method: Method, opts: OdeOptions) -> Result<Trajectory> {
    check_grid(prob, grid)?;
    if opts.workers == 0 {
        return Err(Error::InvalidParameter("workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let p = grid.p();
    let windows: Vec<WindowSystem> = pool.install(|| {
        (1..=p)
            .into_par_iter()
            .map(|i| discretize_window(prob, grid, i, method))
            .collect::<Result<Vec<_>>>()
    })?;
    let first = opts.short_circuit as usize;
    // phase 1: window 1 marched directly (if short-circuited), the rest split
    let (direct, sols) = pool.install(|| {
        rayon::join(
            || {
                (first == 1).then(|| {
                    let y = windows[0].march(&windows[0].gvec, &prob.y0);
                    check_finite(1, &y).map(|_| y)
                })
            },
            || {
                windows[first..]
                    .par_iter()
                    .map(solve_window_homogeneous)
                    .collect::<Result<Vec<_>>>()
            },
        )
    });
    let direct = direct.transpose()?;
    let sols = sols?;
    // phase 2: sequential recursion for the window initial values
    let start = match &direct {
        Some(y) => y[y.len() - prob.m()..].to_vec(),
        None => prob.y0.clone(),
    };
    let inits = reduced_recursion(&sols, &start);
    // phase 3: parallel updates
    let updated: Vec<Vec<f64>> = pool.install(|| sols.par_iter().zip(&inits).map(|(s, y)| update(s, y)).collect());
    let mut all = Vec::with_capacity(p);
    all.extend(direct);
    all.extend(updated);
    Ok(Trajectory::from_windows(prob.m(), grid, &prob.y0, all))
}

/// Trajectory update from window solutions and their initial values.
pub fn parallel_update(sols: &[WindowSolution], inits: &[Vec<f64>], grid: &TimeGrid) -> Trajectory {
    let windows: Vec<Vec<f64>> = sols.par_iter().zip(inits).map(|(s, y)| update(s, y)).collect();
    let m = sols.first().map_or(0, |s| s.m);
    let y0 = inits.first().cloned().unwrap_or_default();
    Trajectory::from_windows(m, grid, &y0, windows)
}

/// Window-by-window sequential marching (the oracle).
pub fn solve_ivp_sequential(prob: &IVProblem, grid: &TimeGrid, method: Method) -> Result<Trajectory> {
    check_grid(prob, grid)?;
    let m = prob.m();
    let mut y = prob.y0.clone();
    let mut all = Vec::with_capacity(grid.p());
    for i in 1..=grid.p() {
        let ws = discretize_window(prob, grid, i, method)?;
        let win = ws.march(&ws.gvec, &y);
        check_finite(i, &win)?;
        y = win[win.len() - m..].to_vec();
        all.push(win);
    }
    Ok(Trajectory::from_windows(m, grid, &prob.y0, all))
}

fn check_grid(prob: &IVProblem, grid: &TimeGrid) -> Result<()> {
    let (a, b) = (grid.tau[0], *grid.tau.last().unwrap());
    if a != prob.t0 || b != prob.t_end {
        return Err(Error::InvalidInterval(format!(
            "grid [{a}, {b}] does not match the problem interval [{}, {}]",
            prob.t0, prob.t_end
        )));
    }
    Ok(())
}
