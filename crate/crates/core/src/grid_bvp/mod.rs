//! Two-point boundary-value machinery on the annulus `[1 - epsilon, 1]`.

pub mod banded;
pub mod grid;
pub mod newton;
pub mod operator;

pub use banded::{BandedLu, BandedMatrix, BorderedSystem};
pub use grid::{BcKind, BoundaryCondition, Grid, RadialField, Side, DEFAULT_NODES, MIN_NODES};
pub use newton::{newton_solve, Damping, DenseSystem, NewtonOptions, NewtonReport, NonlinearSystem};
pub use operator::{assemble_ln, ln_stencil, solve_linear_system, RadialOperator};
