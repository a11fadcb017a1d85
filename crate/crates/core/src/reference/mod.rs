//! Independent propagators used as oracles: exact Gaussian evolution for
//! quadratic Hamiltonians and a split-operator spectral solver.

mod quadratic;
mod split_step;

pub use quadratic::{exact_quadratic_apply, exact_quadratic_apply_times, exact_quadratic_coherent, GaussianState};
pub use split_step::{split_step_propagate, split_step_propagate_times, SPECTRAL_THRESHOLD};
