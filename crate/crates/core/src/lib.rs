//! Partition-based parallel factorization of structured sparse matrices,
//! with parallel-in-time ODE drivers built on top.
//!
//! ```
//! use parfact::localfact::{Strategy, DEFAULT_TOL};
//! use parfact::parfact::{parallel_factor, residual};
//! use parfact::{MatrixKind, StructuredMatrix};
//!
//! let a = StructuredMatrix::generate_random(MatrixKind::Banded, 200, 1, 1, 1, 7, 2.0).unwrap();
//! let fct = parallel_factor(&a, 4, Strategy::Lu, DEFAULT_TOL).unwrap();
//! assert_eq!(fct.reduced.q(), 3);
//! let f = vec![1.0; 200];
//! let x = fct.solve(&f).unwrap();
//! assert!(residual(&a, &x, &f).unwrap() < 1e-12);
//! ```
//!
//! The same splitting applied in time:
//!
//! ```
//! use parfact::dense::DenseMatrix;
//! use parfact::odeparallel::{coarse_mesh, solve_ivp_parallel, IVProblem, Method};
//!
//! let prob = IVProblem::new(DenseMatrix::from_rows(&[vec![-1.0]]), None, 0.0, 1.0, vec![1.0]).unwrap();
//! let traj = solve_ivp_parallel(&prob, &coarse_mesh(0.0, 1.0, 4, 25).unwrap(), Method::ImplicitEuler).unwrap();
//! assert!((traj.endpoint()[0] - 1.01f64.powi(-100)).abs() < 1e-13);
//! ```

pub mod blocktri;
pub mod cli;
pub mod dense;
pub mod error;
pub mod hexfloat;
pub mod localfact;
pub mod odeparallel;
pub mod parfact;
pub mod parareal;
pub mod partition;
pub mod structmat;

pub use error::{Error, Result};
pub use structmat::{Corner, CornerPosition, MatrixKind, StructuredMatrix};
