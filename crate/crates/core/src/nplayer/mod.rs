//! Finite-N cross-holding game.

mod coefficients;
mod holding;
mod nash;
mod sim;

pub use coefficients::{
    assemble_m, deviated_coefficients, deviated_coefficients_closed_form, drift_equation_residual,
    game_coefficients_closed_form, game_coefficients_solve, vol_equation_residual, CoefficientMethod, ColumnKernel,
    DeviatedKernel, GameCoefficients,
};
pub use holding::{mfg_induced_profile, mfg_induced_strategy, DeviationStrategy, HoldingMatrix, HoldingProfile};
pub use nash::{
    girsanov_weight, girsanov_weight_from_psi, nash_gap_estimate, NashGapConfig, NashGapReport, NashGapRow, Utility,
};
pub use sim::{simulate_nplayer, Deviation, NPlayerRun, PathRecord};
