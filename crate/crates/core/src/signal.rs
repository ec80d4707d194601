//! Receiver-level observables built on sampled time series.
//!
//! The received signal is either the total number of product (`E`) molecules
//! in the cells, its time derivative (the generation rate), or the fraction
//! of cell volume whose `E` concentration exceeds an activation threshold.
//! Radial integrals weight by the cell density `N_c V_c / V_s`:
//!
//! ```text
//! E(t)     = ∫_0^{R_s} 4π c_E(r, t) V_c (N_c / V_s) r² dr
//! act(t)   = ∫_0^{R_s} 4π 1[c_E(r, t) > T] V_c (N_c / V_s) r² dr / (N_c V_c)
//! ```
//!
//! The activation integral is reported as a fraction of the total cell
//! volume so that it reads as the share of activated cells.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SpheroidGeometry;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("time grids differ: {0}")]
    GridMismatch(String),
    #[error("series has {0} samples, at least {1} required")]
    TooShort(usize, usize),
    #[error("series has no positive peak")]
    NoPeak,
    #[error("half-maximum not reached on the {0} side of the peak inside the series span")]
    UnresolvedWidth(&'static str),
    #[error("radial profile must start at r = 0 and end at R_s = {radius:.4e} m, got [{first:.4e}, {last:.4e}]")]
    ProfileSpan { radius: f64, first: f64, last: f64 },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("threshold must be non-negative, got {0}")]
    NegativeThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    Concentration,
    Rate,
    Count,
    Fraction,
}

impl Unit {
    pub fn label(&self) -> &'static str {
        match self {
            Unit::Concentration => "m^-3",
            Unit::Rate => "s^-1",
            Unit::Count => "count",
            Unit::Fraction => "fraction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Analytic,
    Pbs,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Analytic => "analytic",
            Provenance::Pbs => "pbs",
        })
    }
}

/// Uniform sample times `t0 + i·dt`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, len: usize) -> Result<Self, SignalError> {
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(SignalError::InvalidGrid(format!("t0 = {t0}, dt = {dt}")));
        }
        Ok(Self { t0, dt, len })
    }

    /// Samples `dt, 2dt, …` up to and including `t_end` (within rounding).
    pub fn until(dt: f64, t_end: f64) -> Result<Self, SignalError> {
        let len = ((t_end / dt) + 1e-9).floor() as usize;
        Self::new(dt, dt, len)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.time(i))
    }

    pub fn end(&self) -> f64 {
        self.time(self.len.saturating_sub(1))
    }

    fn same_as(&self, other: &TimeGrid) -> bool {
        self.len == other.len
            && (self.t0 - other.t0).abs() <= 1e-9 * self.dt
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }
}

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt_sample: f64,
    pub values: Vec<f64>,
    pub unit: Unit,
    pub provenance: Provenance,
}

impl TimeSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>, unit: Unit, provenance: Provenance) -> Self {
        debug_assert_eq!(grid.len, values.len());
        Self {
            t0: grid.t0,
            dt_sample: grid.dt,
            values,
            unit,
            provenance,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t0: self.t0,
            dt: self.dt_sample,
            len: self.values.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt_sample
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Trapezoidal running integral, starting from zero at `t0`.
    pub fn cumulative(&self, unit: Unit) -> Self {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.values.len());
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                acc += 0.5 * (self.values[i - 1] + v) * self.dt_sample;
            }
            out.push(acc);
        }
        Self {
            values: out,
            unit,
            ..self.clone()
        }
    }
}

/// Angular-mean concentration on radial nodes over time. `values[t][i]` is
/// the value at `radii[i]` and time index `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub radii: Vec<f64>,
    pub times: TimeGrid,
    pub values: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl RadialProfile {
    fn check_span(&self, geom: &SpheroidGeometry) -> Result<(), SignalError> {
        let first = *self.radii.first().unwrap_or(&f64::NAN);
        let last = *self.radii.last().unwrap_or(&f64::NAN);
        let r = geom.radius_m;
        if self.radii.len() < 2 || first != 0.0 || (last - r).abs() > 1e-9 * r {
            return Err(SignalError::ProfileSpan { radius: r, first, last });
        }
        if self.values.len() != self.times.len || self.values.iter().any(|row| row.len() != self.radii.len()) {
            return Err(SignalError::GridMismatch("profile rows do not match the radial/time grids".into()));
        }
        Ok(())
    }

    /// Product-molecule profile from an interior concentration profile,
    /// `c_E(r, t) = k_f ∫_0^t c_s(r, t') dt'` (trapezoidal, `c_s(0) = 0`).
    pub fn integrate_sink(&self, k_f: f64) -> RadialProfile {
        let n_r = self.radii.len();
        let mut acc = vec![0.0; n_r];
        let mut prev = vec![0.0; n_r];
        let mut prev_t = 0.0;
        let mut values = Vec::with_capacity(self.times.len);
        for (ti, row) in self.values.iter().enumerate() {
            let t = self.times.time(ti);
            let h = t - prev_t;
            for i in 0..n_r {
                acc[i] += k_f * 0.5 * (prev[i] + row[i]) * h;
            }
            prev.clone_from(row);
            prev_t = t;
            values.push(acc.clone());
        }
        RadialProfile {
            radii: self.radii.clone(),
            times: self.times,
            values,
            provenance: self.provenance,
        }
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 40)
}

fn interp_linear(radii: &[f64], values: &[f64], r: f64) -> f64 {
    let i = match radii.partition_point(|&x| x <= r) {
        0 => 0,
        k if k >= radii.len() => radii.len() - 2,
        k => k - 1,
    };
    let (r0, r1) = (radii[i], radii[i + 1]);
    let w = (r - r0) / (r1 - r0);
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// Total product molecules in the cells over time (per released molecule).
pub fn received_total_e(profile: &RadialProfile, geom: &SpheroidGeometry) -> Result<TimeSeries, SignalError> {
    profile.check_span(geom)?;
    let density = geom.n_cells as f64 * geom.cell_volume_m3 / geom.volume();
    let values = profile
        .values
        .iter()
        .map(|row| {
            let f = |r: f64| 4.0 * PI * interp_linear(&profile.radii, row, r) * r * r;
            // integrate panel by panel: the interpolant is smooth inside each
            let mut total = 0.0;
            for w in profile.radii.windows(2) {
                let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs())) * 4.0 * PI * w[1] * w[1] * (w[1] - w[0]);
                total += adaptive_simpson(&f, w[0], w[1], 1e-10 * scale.max(f64::MIN_POSITIVE));
            }
            total * density
        })
        .collect();
    Ok(TimeSeries::new(profile.times, values, Unit::Count, profile.provenance))
}

/// Time derivative by central differences, one-sided at the ends.
pub fn generation_rate(series: &TimeSeries) -> Result<TimeSeries, SignalError> {
    let v = &series.values;
    let n = v.len();
    if n < 3 {
        return Err(SignalError::TooShort(n, 3));
    }
    let h = series.dt_sample;
    let mut out = Vec::with_capacity(n);
    out.push((v[1] - v[0]) / h);
    for i in 1..n - 1 {
        out.push((v[i + 1] - v[i - 1]) / (2.0 * h));
    }
    out.push((v[n - 1] - v[n - 2]) / h);
    Ok(TimeSeries {
        values: out,
        unit: Unit::Rate,
        ..series.clone()
    })
}

/// Fraction of the cell volume whose product concentration exceeds
/// `threshold`, with the profile linearly interpolated between radial nodes
/// and the threshold crossing located exactly within each panel.
pub fn threshold_activation(
    profile: &RadialProfile,
    threshold: f64,
    geom: &SpheroidGeometry,
) -> Result<TimeSeries, SignalError> {
    if !(threshold >= 0.0) {
        return Err(SignalError::NegativeThreshold(threshold));
    }
    profile.check_span(geom)?;
    let r_s = geom.radius_m;
    let values = profile
        .values
        .iter()
        .map(|row| {
            let mut cubed = 0.0;
            for (w, c) in profile.radii.windows(2).zip(row.windows(2)) {
                let (r0, r1, c0, c1) = (w[0], w[1], c[0], c[1]);
                let (above0, above1) = (c0 > threshold, c1 > threshold);
                let (lo, hi) = match (above0, above1) {
                    (true, true) => (r0, r1),
                    (false, false) => continue,
                    _ => {
                        let rc = r0 + (threshold - c0) / (c1 - c0) * (r1 - r0);
                        if above0 { (r0, rc) } else { (rc, r1) }
                    }
                };
                cubed += hi.powi(3) - lo.powi(3);
            }
            // (4π/3 · Σ(hi³ − lo³)) · (N_c V_c / V_s) / (N_c V_c)
            cubed / r_s.powi(3)
        })
        .collect();
    Ok(TimeSeries::new(profile.times, values, Unit::Fraction, profile.provenance))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakMetrics {
    pub peak_value: f64,
    pub peak_time: f64,
    pub fwhm: f64,
}

/// Global maximum, its time, and the full width at half maximum with
/// linearly interpolated crossings.
pub fn peak_metrics(series: &TimeSeries) -> Result<PeakMetrics, SignalError> {
    let v = &series.values;
    if v.is_empty() {
        return Err(SignalError::TooShort(0, 1));
    }
    let (imax, &peak) = v
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, x)| if *x > *acc.1 { (i, x) } else { acc });
    if !(peak > 0.0) {
        return Err(SignalError::NoPeak);
    }
    let half = peak / 2.0;
    let mut left = None;
    for i in (0..imax).rev() {
        if v[i] <= half {
            let w = (half - v[i]) / (v[i + 1] - v[i]);
            left = Some(series.time(i) + w * series.dt_sample);
            break;
        }
    }
    let mut right = None;
    for i in imax + 1..v.len() {
        if v[i] <= half {
            let w = (v[i - 1] - half) / (v[i - 1] - v[i]);
            right = Some(series.time(i - 1) + w * series.dt_sample);
            break;
        }
    }
    let left = left.ok_or(SignalError::UnresolvedWidth("leading"))?;
    let right = right.ok_or(SignalError::UnresolvedWidth("trailing"))?;
    Ok(PeakMetrics {
        peak_value: peak,
        peak_time: series.time(imax),
        fwhm: right - left,
    })
}

/// Spheroid-versus-transparent receiver comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReceiverComparison {
    pub amplification: f64,
    pub peak_delay: f64,
    pub width_ratio: f64,
    pub spheroid: PeakMetrics,
    pub transparent: PeakMetrics,
}

pub fn compare_receivers(spheroid_rate: &TimeSeries, transparent_rate: &TimeSeries) -> Result<ReceiverComparison, SignalError> {
    if !spheroid_rate.grid().same_as(&transparent_rate.grid()) {
        return Err(SignalError::GridMismatch(format!(
            "{:?} vs {:?}",
            spheroid_rate.grid(),
            transparent_rate.grid()
        )));
    }
    let s = peak_metrics(spheroid_rate)?;
    let t = peak_metrics(transparent_rate)?;
    Ok(ReceiverComparison {
        amplification: s.peak_value / t.peak_value,
        peak_delay: s.peak_time - t.peak_time,
        width_ratio: s.fwhm / t.fwhm,
        spheroid: s,
        transparent: t,
    })
}
