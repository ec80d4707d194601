//! Series Green's function of the spheroid receiver and its time-domain
//! inversion.

mod inversion;
mod modes;
mod series;

use thiserror::Error;

use crate::model::ModelError;
use crate::signal::SignalError;
use crate::specfun::SpecialFunctionError;

pub use inversion::{
    cgf_spectrum, cgf_time, cgf_time_many, free_space_cgf, interior_profile, received_signal_analytic,
    received_spectrum, FrequencyGrid, Spectrum,
};
pub use modes::{
    helmholtz_wavenumber, laplace_wavenumbers, mode_basis, mode_coefficients, mode_coefficients_with_wavenumbers, solve_mode,
    wavenumbers, wavenumbers_with_kernel, ModeBasis, ModeSolution, RadialZone, ReferenceSequences, MAX_CONDITION,
};
pub use series::{
    cgf_frequency, free_space_cgf_frequency, AngularPath, CgfValue, FieldPoint, FrequencySolver, Region,
    TruncationPolicy,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    SpecialFunction(#[from] SpecialFunctionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("mode system n = {n} at ω = {omega:.6e} rad/s is near-singular (condition {condition:.3e})")]
    NearSingular { n: usize, omega: f64, condition: f64 },
    #[error("ω = 0 with no uptake makes the outer basis singular; sample away from zero frequency")]
    StaticLimit,
    #[error("invalid field point: {0}")]
    InvalidPoint(String),
    #[error(
        "series did not converge at ω = {omega:.6e} rad/s, r = {r:.6e} m after {modes} modes \
         (last term {last_term:.3e}, partial sum {partial_sum:.3e})"
    )]
    Truncation {
        omega: f64,
        r: f64,
        modes: usize,
        last_term: f64,
        partial_sum: f64,
    },
    #[error(
        "spectrum not resolved: |C(ω_max)|/max|C| = {ratio:.3e} exceeds {limit:.1e} at ω_max = {omega_max:.4e} rad/s; \
         raise omega_max"
    )]
    Aliasing { omega_max: f64, ratio: f64, limit: f64 },
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
}
