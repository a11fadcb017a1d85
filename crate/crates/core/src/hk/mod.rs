//! Leading-order Herman–Kluk propagation: prefactors, configuration and
//! calibration, phase-space quadrature propagation and kernel diagnostics.

mod kernel;
mod prefactor;
mod propagate;

pub use kernel::{
    fb_kernel_diagnostic, fb_kernel_samples, schur_norm_bound, DecayBin, DecayReport, KernelSamples, PeakRecord,
    SchurBound,
};
pub use prefactor::{
    frozen_det_arg, hk_prefactor_frozen, hk_prefactor_general, m_matrix, HKConfig, HKPrefactor, ThetaMode,
};
pub use propagate::{hk_propagate, hk_propagate_times, HKRun};
