//! Command-line front end (`parfact <command> …`).
//!
//! Exit codes: 0 on success, 1 for argument/input problems, 2 for numerical
//! failures. Failures print one `ERROR <code> <detail>` line on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::localfact::{Strategy, DEFAULT_TOL};
use crate::odeparallel::{coarse_mesh, solve_ivp_parallel_with, solve_ivp_sequential, IVProblem, Method, OdeOptions};
use crate::parareal::{heat_problem, parareal_solve_with, Propagator};
use crate::parfact::reduced::ReducedSystem;
use crate::parfact::{parallel_factor_with, residual};
use crate::partition::plan_partition;
use crate::structmat::{parse_vector, write_vector, MatrixKind, StructuredMatrix};

#[derive(Debug, Parser)]
#[command(name = "parfact", version, about = "Partition-method solvers for structured systems and linear ODEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random structured matrix.
    Generate(GenerateArgs),
    /// Solve `A x = f` with the partition method.
    Solve(SolveArgs),
    /// Solve and compare with a dense LU solve.
    Verify(VerifyArgs),
    /// Time-parallel solve of a linear ODE.
    Ode(OdeArgs),
    /// Parareal iteration on a linear ODE.
    Parareal(PararealArgs),
    /// Time the solver phases.
    Bench(BenchArgs),
    /// Show the partition plan of a matrix.
    Plan(PlanArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = parse_kind)]
    pub kind: MatrixKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Lower bandwidth; defaults to 1.
    #[arg(long)]
    pub s: Option<usize>,
    /// Upper bandwidth; defaults to 0 for abd/babd and 1 otherwise.
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2.0)]
    pub dominance: f64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// STRUCTMAT file.
    #[arg(short = 'm', long = "matrix")]
    pub matrix: PathBuf,
    /// VEC file, or `ones`.
    #[arg(short = 'f', long = "rhs", default_value = "ones")]
    pub rhs: String,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, value_parser = parse_strategy, default_value = "lu")]
    pub strategy: Strategy,
    /// Trigger of the adaptive strategies.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub pivot_tol: f64,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Solution as a VEC file.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemKind {
    /// 1-D heat equation by the method of lines.
    Heat,
    /// `y' = λ y`, `y(0) = 1`.
    Decay,
    /// `y' = L y` with `L` and `y0` from files.
    Matrix,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    #[arg(long, value_enum, default_value = "heat")]
    pub problem: ProblemKind,
    /// Interior points of the heat problem.
    #[arg(long = "size", default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub lambda: f64,
    /// STRUCTMAT file with `L` (problem `matrix`).
    #[arg(long = "l-matrix")]
    pub l_matrix: Option<PathBuf>,
    /// VEC file with `y0` (problem `matrix`).
    #[arg(long)]
    pub y0: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t0: f64,
    #[arg(long = "t-end", default_value_t = 1.0, allow_negative_numbers = true)]
    pub t_end: f64,
    #[arg(long, default_value_t = 4)]
    pub p: usize,
    /// Fine steps per window.
    #[arg(long = "steps", short = 'N', default_value_t = 25)]
    pub steps: usize,
    #[arg(long, value_parser = parse_method, default_value = "ie")]
    pub method: Method,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OdeArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// March the whole interval sequentially instead.
    #[arg(long)]
    pub sequential: bool,
    /// TRAJ output file.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoarseKind {
    Discrete,
    Expm,
}

#[derive(Debug, Args)]
pub struct PararealArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "discrete")]
    pub coarse: CoarseKind,
    /// Steps per window of the coarse propagator.
    #[arg(long, default_value_t = 1)]
    pub coarse_steps: usize,
    #[arg(long, default_value_t = crate::parareal::DEFAULT_TOL)]
    pub tol: f64,
    /// Defaults to `2p`.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Convergence history CSV.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_parser = parse_kind, default_value = "banded")]
    pub kind: MatrixKind,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Lower bandwidth; defaults to 1.
    #[arg(long)]
    pub s: Option<usize>,
    /// Upper bandwidth; defaults to 0 for abd/babd and 1 otherwise.
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub p: usize,
    #[arg(long, value_parser = parse_strategy, default_value = "lu")]
    pub strategy: Strategy,
    /// Compared against one worker; defaults to the available cores.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV output file (stdout when absent).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(short = 'm', long = "matrix")]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Print the plan (the default).
    #[arg(long)]
    pub print: bool,
}

fn parse_kind(s: &str) -> std::result::Result<MatrixKind, String> {
    MatrixKind::from_name(s).ok_or_else(|| format!("unknown kind {s}"))
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    Strategy::from_name(s).ok_or_else(|| format!("unknown strategy {s}"))
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::from_name(s).ok_or_else(|| format!("unknown method {s}"))
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub exit: i32,
    pub code: String,
    pub detail: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            exit: if e.is_input_error() { 1 } else { 2 },
            code: e.code().to_string(),
            detail: e.to_string(),
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("ERROR ArgumentError {first}");
            eprint!("{e}");
            return 1;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("ERROR {} {}", f.code, f.detail);
            f.exit
        }
    }
}

pub fn execute(cmd: &Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Verify(a) => verify(a),
        Command::Ode(a) => ode(a),
        Command::Parareal(a) => parareal(a),
        Command::Bench(a) => bench(a),
        Command::Plan(a) => plan(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn workers(w: Option<usize>) -> usize {
    w.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn bandwidths(kind: MatrixKind, s: Option<usize>, r: Option<usize>) -> (usize, usize) {
    let r0 = if matches!(kind, MatrixKind::Abd | MatrixKind::Babd) { 0 } else { 1 };
    (s.unwrap_or(1), r.unwrap_or(r0))
}

fn generate(a: &GenerateArgs) -> std::result::Result<(), Failure> {
    let (s, r) = bandwidths(a.kind, a.s, a.r);
    let mat = StructuredMatrix::generate_random(a.kind, a.n, a.m, s, r, a.seed, a.dominance)?;
    write(&a.output, &mat.write_matrix())?;
    println!("wrote {} n={} to {}", a.kind, a.n, a.output.display());
    Ok(())
}

fn load_system(s: &SolverArgs) -> Result<(StructuredMatrix, Vec<f64>)> {
    let a = StructuredMatrix::parse_matrix(&read(&s.matrix)?)?;
    let f = if s.rhs == "ones" {
        vec![1.0; a.n()]
    } else {
        parse_vector(&read(Path::new(&s.rhs))?)?
    };
    if f.len() != a.n() {
        return Err(Error::DimensionMismatch(format!("rhs of length {} for n={}", f.len(), a.n())));
    }
    Ok((a, f))
}

fn run_solver(s: &SolverArgs) -> Result<(StructuredMatrix, Vec<f64>, Vec<f64>)> {
    let (a, f) = load_system(s)?;
    let fct = parallel_factor_with(&a, s.p, s.strategy, s.pivot_tol, workers(s.workers))?;
    let x = fct.solve(&f)?;
    Ok((a, f, x))
}

fn solve(args: &SolveArgs) -> std::result::Result<(), Failure> {
    let (a, f, x) = run_solver(&args.solver)?;
    let res = residual(&a, &x, &f)?;
    if let Some(o) = &args.output {
        write(o, &write_vector(&x))?;
    }
    println!("residual {res:e}");
    Ok(())
}

fn verify(args: &VerifyArgs) -> std::result::Result<(), Failure> {
    let (a, f, x) = run_solver(&args.solver)?;
    let d = a.to_dense()?;
    let lu = crate::dense::DenseLu::new(&d).map_err(|_| Error::SingularFactor)?;
    let mut xd = f.clone();
    lu.solve_in_place(&mut xd);
    let scale = xd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = x.iter().zip(&xd).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let err = if scale > 0.0 { diff / scale } else { diff };
    println!("residual {:e}", residual(&a, &x, &f)?);
    println!("max_rel_error {err:e}");
    if err <= args.tol {
        Ok(())
    } else {
        Err(Failure {
            exit: 2,
            code: "ToleranceExceeded".into(),
            detail: format!("max relative error {err:e} > {:e}", args.tol),
        })
    }
}

fn build_problem(a: &ProblemArgs) -> Result<IVProblem> {
    match a.problem {
        ProblemKind::Heat => {
            let mut prob = heat_problem(a.size, a.t_end)?;
            if a.t0 != 0.0 {
                prob = IVProblem::new(prob.l, prob.g, a.t0, a.t_end, prob.y0)?;
            }
            Ok(prob)
        }
        ProblemKind::Decay => IVProblem::new(DenseMatrix::from_rows(&[vec![a.lambda]]), None, a.t0, a.t_end, vec![1.0]),
        ProblemKind::Matrix => {
            let (Some(lp), Some(yp)) = (&a.l_matrix, &a.y0) else {
                return Err(Error::InvalidParameter("problem matrix needs --l-matrix and --y0".into()));
            };
            let l = StructuredMatrix::parse_matrix(&read(lp)?)?.to_dense()?;
            let y0 = parse_vector(&read(yp)?)?;
            IVProblem::new(l, None, a.t0, a.t_end, y0)
        }
    }
}

fn ode(args: &OdeArgs) -> std::result::Result<(), Failure> {
    let pa = &args.problem;
    let prob = build_problem(pa)?;
    let grid = coarse_mesh(prob.t0, prob.t_end, pa.p, pa.steps)?;
    let traj = if args.sequential {
        solve_ivp_sequential(&prob, &grid, pa.method)?
    } else {
        let opts = OdeOptions {
            workers: workers(pa.workers),
            ..OdeOptions::default()
        };
        solve_ivp_parallel_with(&prob, &grid, pa.method, opts)?
    };
    if let Some(o) = &args.output {
        write(o, &traj.write())?;
    }
    let end = traj.endpoint();
    println!(
        "points {} endpoint_max_abs {:e} endpoint_first {:e}",
        traj.points(),
        end.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        end[0]
    );
    Ok(())
}

fn parareal(args: &PararealArgs) -> std::result::Result<(), Failure> {
    let pa = &args.problem;
    let prob = build_problem(pa)?;
    let grid = coarse_mesh(prob.t0, prob.t_end, pa.p, pa.steps)?;
    let fine = Propagator::fine(pa.method, pa.steps);
    let coarse = match args.coarse {
        CoarseKind::Discrete => Propagator::coarse(pa.method, args.coarse_steps),
        CoarseKind::Expm => Propagator::exponential(pa.method, args.coarse_steps),
    };
    let max_iter = args.max_iter.unwrap_or(2 * pa.p);
    let out = parareal_solve_with(&prob, &grid, &fine, &coarse, args.tol, max_iter, workers(pa.workers))?;
    let mut csv = String::from("iter,update_norm\n");
    for (k, u) in out.history.iter().enumerate() {
        csv.push_str(&format!("{},{:e}\n", k + 1, u));
    }
    match &args.output {
        Some(o) => write(o, &csv)?,
        None => print!("{csv}"),
    }
    println!("iterations {} converged {}", out.iterations, out.converged);
    if out.converged {
        Ok(())
    } else {
        Err(Error::NotConverged(out.iterations).into())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

struct PhaseTimes {
    factor: f64,
    reduced_factor: f64,
    solve: f64,
    reduced_solve: f64,
    factor_ops: u64,
    solve_ops: u64,
}

fn time_phases(a: &StructuredMatrix, args: &BenchArgs, w: usize) -> Result<PhaseTimes> {
    let f = vec![1.0; a.n()];
    let mut t = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    let (mut factor_ops, mut solve_ops) = (0, 0);
    for _ in 0..args.runs.max(1) {
        let t0 = Instant::now();
        let fct = parallel_factor_with(a, args.p, args.strategy, DEFAULT_TOL, w)?;
        t[0].push(t0.elapsed().as_secs_f64());

        let r = &fct.reduced;
        let t0 = Instant::now();
        let again = ReducedSystem::new(r.positions.clone(), r.diag.clone(), r.sub.clone(), r.sup.clone(), r.corner.clone())?;
        t[1].push(t0.elapsed().as_secs_f64());
        factor_ops = again.factor_ops();

        let t0 = Instant::now();
        let (_, stats) = fct.solve_with_stats(&f)?;
        t[2].push(t0.elapsed().as_secs_f64());
        solve_ops = stats.reduced_ops;

        let g = vec![1.0; r.order()];
        let t0 = Instant::now();
        r.solve_counted(&g)?;
        t[3].push(t0.elapsed().as_secs_f64());
    }
    let [a0, a1, a2, a3] = t;
    Ok(PhaseTimes {
        factor: median(a0),
        reduced_factor: median(a1),
        solve: median(a2),
        reduced_solve: median(a3),
        factor_ops,
        solve_ops,
    })
}

fn bench(args: &BenchArgs) -> std::result::Result<(), Failure> {
    let (s, r) = bandwidths(args.kind, args.s, args.r);
    let a = StructuredMatrix::generate_random(args.kind, args.n, args.m, s, r, args.seed, 2.0)?;
    let w = workers(args.workers);
    let mut counts = vec![1];
    if w > 1 {
        counts.push(w);
    }
    let mut csv = String::from("phase,n,p,workers,median_seconds,op_count\n");
    let mut results = Vec::new();
    for &k in &counts {
        let pt = time_phases(&a, args, k)?;
        let rows: [(&str, f64, Option<u64>); 4] = [
            ("factor", pt.factor, None),
            ("reduced_factor", pt.reduced_factor, Some(pt.factor_ops)),
            ("solve", pt.solve, None),
            ("reduced_solve", pt.reduced_solve, Some(pt.solve_ops)),
        ];
        for (name, secs, ops) in rows {
            let ops = ops.map_or(String::new(), |o| o.to_string());
            csv.push_str(&format!("{name},{},{},{k},{secs:e},{ops}\n", args.n, args.p));
        }
        results.push((k, pt));
    }
    match &args.output {
        Some(o) => write(o, &csv)?,
        None => print!("{csv}"),
    }
    let (_, base) = &results[0];
    let (wk, last) = results.last().unwrap();
    let total = |p: &PhaseTimes| p.factor + p.solve;
    let seq = (last.reduced_factor + last.reduced_solve) / total(last);
    println!(
        "# speedup workers={wk} factor {:.3} solve {:.3} total {:.3}; sequential_fraction {:.4}",
        base.factor / last.factor,
        base.solve / last.solve,
        total(base) / total(last),
        seq
    );
    Ok(())
}

fn plan(args: &PlanArgs) -> std::result::Result<(), Failure> {
    let a = StructuredMatrix::parse_matrix(&read(&args.matrix)?)?;
    let a = if a.corner().is_some_and(|c| c.position == crate::CornerPosition::LowerLeft) {
        crate::partition::permute_corner(&a)?.0
    } else {
        a
    };
    let p = plan_partition(&a, args.p)?;
    print!("{}", p.describe());
    Ok(())
}
