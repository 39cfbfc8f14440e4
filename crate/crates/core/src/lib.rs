//! Exact distributed controls for the 1D semilinear wave equation
//! `y_tt - y_xx + g(y) = f 1_omega` on `(0, 1) x (0, T)`.
//!
//! The building blocks are a leapfrog wave solver ([`wave`]), minimal-norm
//! controls of linear wave equations with potential by conjugate gradient
//! ([`hum`]), and a damped-Newton least-squares iteration ([`least_squares`])
//! that drives the residual of the semilinear equation to zero. Picard and
//! plain Newton iterations are in [`baselines`] for comparison.

// `!(x <= bound)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dump;
pub mod field;
pub mod grid;
pub mod hum;
pub mod least_squares;
pub mod nonlinearity;
pub mod norms;
pub mod wave;

pub use baselines::{BaselineError, BaselineOutcome, BaselineRun, Method};
pub use field::{SpaceTimeField, StatePair};
pub use grid::{Grid, GridError};
pub use hum::{AdjointData, ControlSolution, HumError, HumOptions, LinearControlProblem};
pub use least_squares::{Descent, InitMode, IterateRecord, LsConfig, LsError, LsRun, Outcome, TrajectoryControlPair};
pub use nonlinearity::{GrowthBound, Nonlinearity, NonlinearityError};
pub use wave::{TimeEnd, WaveError};
