//! Radially symmetric steady states, mode-n linearizations and bifurcation
//! points of a free-boundary model of early arterial plaque on the thin
//! annulus `1 - epsilon <= r <= 1`.

// NaN must fail positivity checks, so `!(x > 0.0)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod asymptotics;
pub mod bifurcation;
pub mod cli;
pub mod error;
pub mod grid_bvp;
pub mod linearized;
pub mod params;
pub mod steady_state;

pub use error::{Error, Result};
