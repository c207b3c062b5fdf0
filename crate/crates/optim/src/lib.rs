//! Dense convex quadratic programming and mixed-binary branch-and-bound.
//!
//! Problems have the form
//!
//! ```text
//!     minimize     1/2 x' Q x + c' x
//!     subject to   G x <= h
//!                  l <= x <= u
//!                  x_i in {0, 1}   for i in B        (mixed-binary only)
//! ```
//!
//! with `Q` symmetric positive semidefinite. [`solve_qp`] uses a Mehrotra
//! predictor-corrector interior-point method on the dense normal equations and
//! reports scaled KKT residuals with every solution. [`solve_mbqp`] runs a
//! best-first branch-and-bound on top of it, with optional orbital branching
//! over declared groups of interchangeable variable blocks.
//!
//! ```
//! use beamflex_optim::{solve_qp, QpOptions, QpProblem, Status};
//!
//! // minimize (x - 1)^2 + (y - 1)^2  s.t.  x + y <= 1
//! let mut qp = QpProblem::new(2);
//! qp.add_square(&[(0, 1.0)], 1.0, -1.0);
//! qp.add_square(&[(1, 1.0)], 1.0, -1.0);
//! qp.add_le(&[(0, 1.0), (1, 1.0)], 1.0);
//! let sol = solve_qp(&qp, &QpOptions::default()).unwrap();
//! assert_eq!(sol.status, Status::Optimal);
//! assert!((sol.x[0] - 0.5).abs() < 1e-7 && (sol.x[1] - 0.5).abs() < 1e-7);
//! ```

mod error;
mod ipm;
mod mbqp;
mod problem;

pub use error::QpError;
pub use mbqp::{solve_mbqp, MbqpOptions, MbqpProblem, MbqpSolution, SymmetryGroup};
pub use problem::{KktResiduals, QpProblem, Solution, Status};

pub use ipm::{solve_qp, QpOptions};

/// Primal feasibility tolerance applied to constraint rows and bounds.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Scaled KKT residual bound certified for every `Optimal` solution.
pub const KKT_TOL: f64 = 1e-6;
/// Absolute optimality gap at which branch-and-bound stops.
pub const INTEGER_GAP_TOL: f64 = 1e-6;
