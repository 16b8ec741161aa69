//! Sparse-grid combination technique for the Poisson problem on the unit
//! cube, lifted from second to fourth order by multivariate extrapolation.
//!
//! * [`grid`]: level indices, tensor grids, multilinear interpolation
//! * [`pde`]: central-difference Poisson solver (fast diagonalization)
//! * [`combine`]: combination plans, plan evaluation, convergence studies
//! * [`verify`]: exact checks of the extrapolation weight identities
//!
//! Grid solves inside a plan run on rayon when the `parallel` feature is
//! enabled (the default); see [`exec::Exec`].

pub mod combine;
pub mod error;
pub mod exec;
pub mod grid;
pub mod pde;
pub mod rational;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Exec;
pub use grid::{GridFunction, LevelIndex, Point};
pub use pde::{builtin_sine_problem, ProblemSpec};
