//! Numerical toolkit for the mean-field equilibrium of mutual holding.
//!
//! Agents hold fractions of each other's equity. In equilibrium each one
//! holds exactly the competitors whose provisions drift `b` clears the
//! threshold `-c`, where `c = ½ ∫ (c + b)^+ dm`. The crate solves for `c`,
//! evaluates the resulting drift and volatility, simulates the
//! McKean–Vlasov dynamics and the finite-N game, and estimates how much a
//! single player can gain by deviating.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod csv_out;
pub mod equilibrium;
pub mod error;
pub mod measures;
pub mod mfsim;
pub mod models;
pub mod noise;
pub mod nplayer;
pub mod numerics;
pub mod threshold;

pub use error::{Error, Result};
pub use measures::{GaussianSpec, Measure1D};
pub use models::CoefficientModel;
