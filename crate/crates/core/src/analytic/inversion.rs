//! Frequency sampling and inverse Fourier transform to the time domain.
//!
//! The transform is sampled on the shifted line `s_j = σ + iω_j` with
//! midpoints `ω_j = (j + ½)Δω`, `Δω = ω_max/N`. A real signal is recovered
//! from the one-sided samples,
//!
//! ```text
//! c(t) = e^{σt} (Δω/π) Re Σ_j C(s_j) e^{iω_j t}
//! ```
//!
//! Without the shift the sum is anti-periodic with period `T = 2π/Δω`, and
//! the slow `t^{-3/2}` tail of 3D diffusion folds back onto early times. The
//! shift weights the wrapped copies by `e^{-σT}`; `σ = damping/T`. The sum is
//! evaluated on a fine uniform grid with one FFT and interpolated to the
//! requested times.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::model::{MediumModel, SphericalPoint, SpheroidGeometry};
use crate::signal::{Provenance, RadialProfile, TimeGrid, TimeSeries, Unit};

use super::series::{FieldPoint, FrequencySolver, TruncationPolicy};
use super::AnalyticError;

/// Largest FFT length used for interpolation.
const MAX_FFT_LEN: usize = 1 << 23;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub omega_max: f64,
    pub n_samples: usize,
    /// Maximum allowed `|C(ω_max)| / max|C|`.
    pub alias_fraction: f64,
    /// `σT`, the log of the suppression applied to wrapped-around copies.
    pub damping: f64,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self {
            omega_max: 4.0 * PI,
            n_samples: 1 << 14,
            alias_fraction: 1e-6,
            damping: 18.0,
        }
    }
}

impl FrequencyGrid {
    pub fn new(omega_max: f64, n_samples: usize) -> Result<Self, AnalyticError> {
        Self {
            omega_max,
            n_samples,
            ..Self::default()
        }
        .validated()
    }

    pub fn with_alias_fraction(self, alias_fraction: f64) -> Result<Self, AnalyticError> {
        Self { alias_fraction, ..self }.validated()
    }

    pub fn with_damping(self, damping: f64) -> Result<Self, AnalyticError> {
        Self { damping, ..self }.validated()
    }

    fn validated(self) -> Result<Self, AnalyticError> {
        if !(self.omega_max > 0.0) || !self.omega_max.is_finite() {
            return Err(AnalyticError::InvalidGrid(format!("omega_max = {}", self.omega_max)));
        }
        if self.n_samples < 2 || !self.n_samples.is_power_of_two() {
            return Err(AnalyticError::InvalidGrid(format!(
                "n_samples = {} must be a power of two ≥ 2",
                self.n_samples
            )));
        }
        if !(self.alias_fraction > 0.0) {
            return Err(AnalyticError::InvalidGrid(format!("alias_fraction = {}", self.alias_fraction)));
        }
        if !(self.damping >= 0.0) || !self.damping.is_finite() {
            return Err(AnalyticError::InvalidGrid(format!("damping = {}", self.damping)));
        }
        Ok(self)
    }

    pub fn spacing(&self) -> f64 {
        self.omega_max / self.n_samples as f64
    }

    pub fn omega(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.spacing()
    }

    /// Span `2π/Δω` over which the undamped sum is anti-periodic.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.spacing()
    }

    pub fn abscissa(&self) -> f64 {
        self.damping / self.period()
    }

    pub fn laplace(&self, j: usize) -> Complex64 {
        Complex64::new(self.abscissa(), self.omega(j))
    }

    pub(crate) fn solver<'a>(
        &self,
        j: usize,
        geom: &'a SpheroidGeometry,
        medium: &'a MediumModel,
    ) -> Result<FrequencySolver<'a>, AnalyticError> {
        FrequencySolver::at(self.laplace(j), geom, medium)
    }
}

/// One-sided spectrum on a midpoint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: FrequencyGrid,
    pub values: Vec<Complex64>,
}

impl Spectrum {
    /// Samples the transform `f(s)` at every grid point, in parallel.
    pub fn sample<F>(grid: FrequencyGrid, f: F) -> Result<Self, AnalyticError>
    where
        F: Fn(Complex64) -> Result<Complex64, AnalyticError> + Sync,
    {
        let values = (0..grid.n_samples)
            .into_par_iter()
            .map(|j| f(grid.laplace(j)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { grid, values })
    }

    pub fn check_aliasing(&self) -> Result<(), AnalyticError> {
        let peak = self.values.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if peak == 0.0 {
            return Ok(());
        }
        let last = self.values.last().map(|c| c.norm()).unwrap_or(0.0);
        let ratio = last / peak;
        if ratio > self.grid.alias_fraction {
            return Err(AnalyticError::Aliasing {
                omega_max: self.grid.omega_max,
                ratio,
                limit: self.grid.alias_fraction,
            });
        }
        Ok(())
    }

    /// Direct evaluation of the inversion sum at one time.
    pub fn value_at(&self, t: f64) -> f64 {
        let dw = self.grid.spacing();
        let acc: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let (s, co) = (self.grid.omega(j) * t).sin_cos();
                c.re * co - c.im * s
            })
            .sum();
        (self.grid.abscissa() * t).exp() * dw / PI * acc
    }

    /// Inversion sum at every time of `times`.
    pub fn invert(&self, times: &TimeGrid) -> Vec<f64> {
        if times.len == 0 {
            return Vec::new();
        }
        let n = self.values.len();
        let dw = self.grid.spacing();
        let period = self.grid.period();
        let target = (8.0 * period / times.dt).ceil() as usize;
        let m = target.max(16 * n).next_power_of_two().min(MAX_FFT_LEN.max(2 * n));
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        buf[..n].copy_from_slice(&self.values);
        FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
        let h = period / m as f64;
        times
            .times()
            .map(|t| {
                let u = t.rem_euclid(period) / h;
                let i = u.floor() as isize;
                let f = u - i as f64;
                let at = |k: isize| buf[k.rem_euclid(m as isize) as usize];
                // 4-point Lagrange on nodes i−1, i, i+1, i+2
                let x = at(i - 1) * (-f * (f - 1.0) * (f - 2.0) / 6.0)
                    + at(i) * ((f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0)
                    + at(i + 1) * (-(f + 1.0) * f * (f - 2.0) / 2.0)
                    + at(i + 2) * ((f + 1.0) * f * (f - 1.0) / 6.0);
                let phase = Complex64::from_polar(1.0, 0.5 * dw * t);
                (self.grid.abscissa() * t).exp() * dw / PI * (phase * x).re
            })
            .collect()
    }
}

fn solver_error_free_point(point: &FieldPoint, geom: &SpheroidGeometry) -> Result<(), AnalyticError> {
    if point.spherical().distance_to(&geom.tx_position) <= 1e-12 * geom.tx_position.r {
        return Err(AnalyticError::InvalidPoint("field point coincides with the transmitter".into()));
    }
    Ok(())
}

/// Spectra of the concentration at several points, sharing mode solutions at
/// each frequency.
fn cgf_spectra(
    points: &[FieldPoint],
    geom: &SpheroidGeometry,
    medium: &MediumModel,
    fgrid: &FrequencyGrid,
    truncation: &TruncationPolicy,
) -> Result<Vec<Spectrum>, AnalyticError> {
    for p in points {
        solver_error_free_point(p, geom)?;
    }
    let mut lowest = fgrid.solver(0, geom, medium)?;
    let policies = points
        .iter()
        .map(|p| {
            let scale = lowest.evaluate(p, truncation)?.value.norm();
            Ok(TruncationPolicy {
                abs_floor: truncation.abs_floor.max(truncation.tol * scale),
                ..*truncation
            })
        })
        .collect::<Result<Vec<_>, AnalyticError>>()?;
    let per_freq = (0..fgrid.n_samples)
        .into_par_iter()
        .map(|j| {
            let mut solver = fgrid.solver(j, geom, medium)?;
            points
                .iter()
                .zip(&policies)
                .map(|(p, policy)| solver.evaluate(p, policy).map(|v| v.value))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((0..points.len())
        .map(|k| Spectrum {
            grid: *fgrid,
            values: per_freq.iter().map(|row| row[k]).collect(),
        })
        .collect())
}

pub fn cgf_spectrum(
    point: &FieldPoint,
    geom: &SpheroidGeometry,
    medium: &MediumModel,
    fgrid: &FrequencyGrid,
    truncation: &TruncationPolicy,
) -> Result<Spectrum, AnalyticError> {
    Ok(cgf_spectra(std::slice::from_ref(point), geom, medium, fgrid, truncation)?.remove(0))
}

/// Concentration impulse response at `point` (m⁻³ per released molecule).
pub fn cgf_time(
    point: &FieldPoint,
    times: &TimeGrid,
    geom: &SpheroidGeometry,
    medium: &MediumModel,
    fgrid: &FrequencyGrid,
) -> Result<TimeSeries, AnalyticError> {
    Ok(cgf_time_many(std::slice::from_ref(point), times, geom, medium, fgrid, &TruncationPolicy::default())?.remove(0))
}

pub fn cgf_time_many(
    points: &[FieldPoint],
    times: &TimeGrid,
    geom: &SpheroidGeometry,
    medium: &MediumModel,
    fgrid: &FrequencyGrid,
    truncation: &TruncationPolicy,
) -> Result<Vec<TimeSeries>, AnalyticError> {
    cgf_spectra(points, geom, medium, fgrid, truncation)?
        .into_iter()
        .map(|s| {
            s.check_aliasing()?;
            Ok(TimeSeries::new(*times, s.invert(times), Unit::Concentration, Provenance::Analytic))
        })
        .collect()
}

/// Unbounded-medium impulse response `(4πDt)^{-3/2} exp(−d²/(4Dt))`.
pub fn free_space_cgf(point: &SphericalPoint, t: f64, d_free: f64, tx: &SphericalPoint) -> f64 {
    let d2 = point.distance_to(tx).powi(2);
    (4.0 * PI * d_free * t).powf(-1.5) * (-d2 / (4.0 * d_free * t)).exp()
}

/// Spectrum of the total uptake rate `k_f ∫_spheroid C dV`.
pub fn received_spectrum(
    geom: &SpheroidGeometry,
    medium: &MediumModel,
    fgrid: &FrequencyGrid,
) -> Result<Spectrum, AnalyticError> {
    if medium.k_f == 0.0 {
        return Ok(Spectrum {
            grid: *fgrid,
            values: vec![Complex64::new(0.0, 0.0); fgrid.n_samples],
        });
    }
    Spectrum::sample(*fgrid, |s| {
        let mut solver = FrequencySolver::at(s, geom, medium)?;
        Ok(medium.k_f * solver.interior_volume_integral()?)
    })
}

/// Product generation rate (s⁻¹ per released molecule).
pub fn received_signal_analytic(
    times: &TimeGrid,
    geom: &SpheroidGeometry,
    medium: &MediumModel,
    fgrid: &FrequencyGrid,
) -> Result<TimeSeries, AnalyticError> {
    let s = received_spectrum(geom, medium, fgrid)?;
    s.check_aliasing()?;
    Ok(TimeSeries::new(*times, s.invert(times), Unit::Rate, Provenance::Analytic))
}

/// Angular-mean interior concentration at `radii` (each `≤ R_s`) over time.
pub fn interior_profile(
    radii: &[f64],
    times: &TimeGrid,
    geom: &SpheroidGeometry,
    medium: &MediumModel,
    fgrid: &FrequencyGrid,
) -> Result<RadialProfile, AnalyticError> {
    if let Some(&r) = radii.iter().find(|&&r| !(0.0..=geom.radius_m).contains(&r)) {
        return Err(AnalyticError::InvalidPoint(format!("radius {r:.4e} m is outside [0, R_s]")));
    }
    let per_freq = (0..fgrid.n_samples)
        .into_par_iter()
        .map(|j| {
            let mut solver = fgrid.solver(j, geom, medium)?;
            radii
                .iter()
                .map(|&r| solver.interior_shell_mean(r))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut columns = Vec::with_capacity(radii.len());
    for k in 0..radii.len() {
        let s = Spectrum {
            grid: *fgrid,
            values: per_freq.iter().map(|row| row[k]).collect(),
        };
        s.check_aliasing()?;
        columns.push(s.invert(times));
    }
    let values = (0..times.len)
        .map(|t| columns.iter().map(|c| c[t]).collect())
        .collect();
    Ok(RadialProfile {
        radii: radii.to_vec(),
        times: *times,
        values,
        provenance: Provenance::Analytic,
    })
}
