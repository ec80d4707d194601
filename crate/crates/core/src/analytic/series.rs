//! Fourier–Legendre series for the frequency-domain concentration.
//!
//! ```text
//! C(r, θ, φ, ω) = −1/D Σ_n Σ_{m≤n} H_mn R_n(r, ω) P_n^m(cos θ) cos(m(φ − φ_tx))
//! H_mn = L_m (2n+1)/2 (n−m)!/(n+m)! P_n^m(cos θ_tx),  L_0 = 1/2π, L_m = 1/π
//! ```
//!
//! The addition theorem collapses the inner sum to `(2n+1)/4π P_n(cos γ)`,
//! with γ the angle between field point and transmitter; that is the default
//! path. The full double sum is kept for cross-checking.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::model::{MediumModel, ReactionKernel, SphericalPoint, SpheroidGeometry};
use crate::specfun::{assoc_legendre_normalized, legendre_sequence, sph_h_sequence, sph_j_sequence, ScaledComplex};

use super::modes::{helmholtz_wavenumber, laplace_wavenumbers, solve_mode, wavenumbers_with_kernel, ModeSolution, RadialZone, ReferenceSequences};
use super::AnalyticError;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Mode blocks are solved in chunks of this many degrees.
const CHUNK: usize = 24;

/// Region of a field point relative to the spheroid surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Inside,
    Outside,
}

/// Observation point; `region` is derived from the radius (`inside ⇔ r < R_s`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub region: Region,
}

impl FieldPoint {
    pub fn new(r: f64, theta: f64, phi: f64, geom: &SpheroidGeometry) -> Result<Self, AnalyticError> {
        if !(r >= 0.0 && r.is_finite() && theta.is_finite() && phi.is_finite()) {
            return Err(AnalyticError::InvalidPoint(format!("({r}, {theta}, {phi})")));
        }
        let region = if r < geom.radius_m { Region::Inside } else { Region::Outside };
        Ok(Self { r, theta, phi, region })
    }

    pub fn from_spherical(p: SphericalPoint, geom: &SpheroidGeometry) -> Result<Self, AnalyticError> {
        Self::new(p.r, p.theta, p.phi, geom)
    }

    pub fn spherical(&self) -> SphericalPoint {
        SphericalPoint::new(self.r, self.theta, self.phi)
    }

    fn zone(&self, geom: &SpheroidGeometry) -> RadialZone {
        match self.region {
            Region::Inside => RadialZone::Interior,
            Region::Outside if self.r <= geom.tx_position.r => RadialZone::Middle,
            Region::Outside => RadialZone::Outer,
        }
    }
}

/// Adaptive truncation of the degree sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    /// Stop once the last three terms are each below `tol · |partial sum|`.
    pub tol: f64,
    /// Hard cap on the number of degrees.
    pub max_modes: usize,
    /// Sum exactly this many degrees, ignoring `tol`.
    pub fixed: Option<usize>,
    /// Terms below this magnitude also count as small. Lets strongly
    /// attenuated high-frequency values stop once negligible on the scale of
    /// the whole spectrum.
    pub abs_floor: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_modes: 200,
            fixed: None,
            abs_floor: 0.0,
        }
    }
}

impl TruncationPolicy {
    pub fn fixed(n_modes: usize) -> Self {
        Self {
            fixed: Some(n_modes),
            ..Self::default()
        }
    }
}

/// A summed series value with convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgfValue {
    pub value: Complex64,
    pub modes_used: usize,
    /// Geometric estimate of the omitted tail, same units as `value`.
    pub tail_estimate: f64,
}

/// Which angular expansion to sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngularPath {
    /// Transmitter-aligned frame, `m = 0` only.
    Aligned,
    /// Full `(n, m)` double sum in the fixed frame.
    General,
}

/// Mode solutions at one frequency, extended on demand.
pub struct FrequencySolver<'a> {
    pub omega: f64,
    pub k1: Complex64,
    pub k2: Complex64,
    geom: &'a SpheroidGeometry,
    medium: &'a MediumModel,
    refs: Option<ReferenceSequences>,
    modes: Vec<ModeSolution>,
}

impl<'a> FrequencySolver<'a> {
    pub fn new(omega: f64, geom: &'a SpheroidGeometry, medium: &'a MediumModel) -> Result<Self, AnalyticError> {
        Self::with_kernel(omega, geom, medium, &medium.sink())
    }

    /// Solver at a point `s` of the shifted line; `omega` records `Im s`.
    pub fn at(s: Complex64, geom: &'a SpheroidGeometry, medium: &'a MediumModel) -> Result<Self, AnalyticError> {
        let (k1, k2) = laplace_wavenumbers(s, medium);
        Self::with_wavenumbers(s.im, k1, k2, geom, medium)
    }

    pub fn with_kernel(
        omega: f64,
        geom: &'a SpheroidGeometry,
        medium: &'a MediumModel,
        kernel: &dyn ReactionKernel,
    ) -> Result<Self, AnalyticError> {
        let (k1, k2) = wavenumbers_with_kernel(omega, medium, kernel);
        Self::with_wavenumbers(omega, k1, k2, geom, medium)
    }

    /// Uses the given decay constants as-is (either square-root branch).
    pub fn with_wavenumbers(
        omega: f64,
        k1: Complex64,
        k2: Complex64,
        geom: &'a SpheroidGeometry,
        medium: &'a MediumModel,
    ) -> Result<Self, AnalyticError> {
        geom.validate()?;
        if k1 == ZERO {
            return Err(AnalyticError::StaticLimit);
        }
        Ok(Self {
            omega,
            k1,
            k2,
            geom,
            medium,
            refs: None,
            modes: Vec::new(),
        })
    }

    pub fn kappa1(&self) -> Complex64 {
        helmholtz_wavenumber(self.k1)
    }

    pub fn kappa2(&self) -> Complex64 {
        helmholtz_wavenumber(self.k2)
    }

    /// Ensures modes `0..=nmax` are solved.
    pub fn ensure_modes(&mut self, nmax: usize) -> Result<(), AnalyticError> {
        if self.modes.len() > nmax {
            return Ok(());
        }
        let have = self.refs.as_ref().map(|r| r.max_order()).unwrap_or(0);
        if self.refs.is_none() || have < nmax {
            let target = nmax.max(have + CHUNK);
            self.refs = Some(ReferenceSequences::new(
                self.kappa1(),
                self.kappa2(),
                self.geom.radius_m,
                self.geom.tx_position.r,
                target,
            ));
        }
        let refs = self.refs.as_ref().expect("reference sequences");
        for n in self.modes.len()..=nmax {
            let sol = solve_mode(n, self.omega, self.k1, self.k2, refs, self.geom, self.medium)?;
            self.modes.push(sol);
        }
        Ok(())
    }

    pub fn mode(&mut self, n: usize) -> Result<&ModeSolution, AnalyticError> {
        self.ensure_modes(n)?;
        Ok(&self.modes[n])
    }

    /// Radial functions `R_n(r)` for `n = 0..=nmax` at the point's radius.
    fn radial_terms(&mut self, point: &FieldPoint, nmax: usize) -> Result<Vec<Complex64>, AnalyticError> {
        self.ensure_modes(nmax)?;
        let zone = point.zone(self.geom);
        let (k1, k2) = (self.kappa1(), self.kappa2());
        let r = point.r;
        let zero_seq = || vec![ScaledComplex::ZERO; nmax + 1];
        let (j2, j1, h1) = match zone {
            RadialZone::Interior => (sph_j_sequence(nmax, k2 * r), zero_seq(), zero_seq()),
            RadialZone::Middle => (zero_seq(), sph_j_sequence(nmax, k1 * r), sph_h_sequence(nmax, k1 * r)),
            RadialZone::Outer => (zero_seq(), zero_seq(), sph_h_sequence(nmax, k1 * r)),
        };
        Ok((0..=nmax)
            .map(|n| self.modes[n].radial_from(zone, j2[n], j1[n], h1[n]))
            .collect())
    }

    /// Frequency-domain concentration at `point` (per released molecule).
    pub fn evaluate(&mut self, point: &FieldPoint, policy: &TruncationPolicy) -> Result<CgfValue, AnalyticError> {
        self.evaluate_with(point, policy, AngularPath::Aligned)
    }

    pub fn evaluate_with(
        &mut self,
        point: &FieldPoint,
        policy: &TruncationPolicy,
        path: AngularPath,
    ) -> Result<CgfValue, AnalyticError> {
        let tx = self.geom.tx_position;
        if point.spherical().distance_to(&tx) <= 1e-12 * tx.r {
            return Err(AnalyticError::InvalidPoint("field point coincides with the transmitter".into()));
        }
        let cap = policy.fixed.unwrap_or(policy.max_modes).max(1);
        let scale = -1.0 / self.medium.d_free;
        let cos_gamma = point.spherical().cos_angle_to(&tx);
        let (x, x_tx) = (point.theta.cos(), tx.theta.cos());
        let dphi = point.phi - tx.phi;

        let mut sum = ZERO;
        let mut envelope_prev;
        let mut envelope = f64::NAN;
        let mut small_run = 0usize;
        let mut nmax = (CHUNK - 1).min(cap - 1);
        let mut n = 0usize;
        loop {
            let radial = self.radial_terms(point, nmax)?;
            let legendre = legendre_sequence(nmax, cos_gamma);
            while n <= nmax {
                let angular = match path {
                    AngularPath::Aligned => (2 * n + 1) as f64 / (4.0 * PI) * legendre[n],
                    AngularPath::General => general_angular(n, x, x_tx, dphi)?,
                };
                let term = angular * radial[n] * scale;
                sum += term;
                envelope_prev = envelope;
                envelope = (2 * n + 1) as f64 / (4.0 * PI) * radial[n].norm() * scale.abs();
                if term.norm() <= (policy.tol * sum.norm()).max(policy.abs_floor) {
                    small_run += 1;
                } else {
                    small_run = 0;
                }
                n += 1;
                let done = match policy.fixed {
                    Some(k) => n >= k,
                    None => small_run >= 3,
                };
                if done {
                    return Ok(CgfValue {
                        value: sum,
                        modes_used: n,
                        tail_estimate: tail_estimate(envelope_prev, envelope),
                    });
                }
            }
            if n >= cap {
                return Err(AnalyticError::Truncation {
                    omega: self.omega,
                    r: point.r,
                    modes: n,
                    last_term: envelope,
                    partial_sum: sum.norm(),
                });
            }
            nmax = (nmax + CHUNK * (1 + nmax / CHUNK)).min(cap - 1);
        }
    }

    /// `∫_spheroid C dV`, using only the `n = 0` mode (the others integrate to
    /// zero over each shell): `−1/D · G_0 R_s² j_1(κ2 R_s) / (κ2 j_0(κ2 R_s))`.
    pub fn interior_volume_integral(&mut self) -> Result<Complex64, AnalyticError> {
        let kappa2 = self.kappa2();
        let radius = self.geom.radius_m;
        let d = self.medium.d_free;
        let mode = self.mode(0)?;
        let seq = sph_j_sequence(1, kappa2 * radius);
        Ok(-1.0 / d * mode.g_n * radius * radius * seq[1].ratio(seq[0]) / kappa2)
    }

    /// Angular mean of the interior concentration at radius `r < R_s`:
    /// `−1/(4πD) · G_0 j_0(κ2 r)/j_0(κ2 R_s)`.
    pub fn interior_shell_mean(&mut self, r: f64) -> Result<Complex64, AnalyticError> {
        let kappa2 = self.kappa2();
        let d = self.medium.d_free;
        let mode = *self.mode(0)?;
        let j0 = sph_j_sequence(0, kappa2 * r)[0];
        Ok(-1.0 / (4.0 * PI * d) * mode.g_n * j0.ratio(mode.basis.j2_r))
    }
}

fn general_angular(n: usize, x: f64, x_tx: f64, dphi: f64) -> Result<f64, AnalyticError> {
    let mut acc = 0.0;
    for m in 0..=n {
        let l_m = if m == 0 { 1.0 / (2.0 * PI) } else { 1.0 / PI };
        let p = assoc_legendre_normalized(n, m, x)?;
        let p_tx = assoc_legendre_normalized(n, m, x_tx)?;
        acc += l_m * (2 * n + 1) as f64 / 2.0 * p * p_tx * (m as f64 * dphi).cos();
    }
    Ok(acc)
}

fn tail_estimate(prev: f64, last: f64) -> f64 {
    if !(prev > 0.0) {
        return last;
    }
    let rho = last / prev;
    if rho < 1.0 {
        last * rho / (1.0 - rho)
    } else {
        f64::INFINITY
    }
}

/// Frequency-domain concentration at a single point and frequency.
pub fn cgf_frequency(
    point: &FieldPoint,
    omega: f64,
    geom: &SpheroidGeometry,
    medium: &MediumModel,
    truncation: &TruncationPolicy,
) -> Result<CgfValue, AnalyticError> {
    FrequencySolver::new(omega, geom, medium)?.evaluate(point, truncation)
}

/// Closed-form unbounded-medium kernel in the frequency domain,
/// `exp(−k1 d) / (4π D d)`.
pub fn free_space_cgf_frequency(point: &SphericalPoint, omega: f64, d_free: f64, tx: &SphericalPoint) -> Complex64 {
    let d = point.distance_to(tx);
    let k1 = (Complex64::new(0.0, omega) / d_free).sqrt();
    (-k1 * d).exp() / (4.0 * PI * d_free * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn geometry(n_cells: u64) -> SpheroidGeometry {
        SpheroidGeometry::new(275e-6, n_cells, 3.14e-15, SphericalPoint::new(500e-6, FRAC_PI_2, 0.0)).unwrap()
    }

    #[test]
    fn no_spheroid_limit_matches_free_space() {
        let geom = geometry(0);
        let medium = MediumModel::new(1e-9, 1.0, 0.0).unwrap();
        let policy = TruncationPolicy::default();
        let points = [
            (100e-6, 0.3, 0.2),
            (275e-6, FRAC_PI_2, 0.4),
            (420e-6, 1.2, -0.3),
            (650e-6, 2.0, 1.0),
            (0.0, 0.0, 0.0),
        ];
        for omega in [1e-3, 0.1, 2.0] {
            for &(r, th, ph) in &points {
                let p = FieldPoint::new(r, th, ph, &geom).unwrap();
                let got = cgf_frequency(&p, omega, &geom, &medium, &policy).unwrap().value;
                let expected = free_space_cgf_frequency(&p.spherical(), omega, 1e-9, &geom.tx_position);
                assert!((got - expected).norm() <= 1e-6 * expected.norm(), "ω={omega} r={r}: {got} vs {expected}");
            }
        }
    }

    #[test]
    fn aligned_and_general_paths_agree() {
        let mut geom = geometry(24000);
        let medium = MediumModel::from_geometry(1e-9, &geom, 0.01).unwrap();
        let policy = TruncationPolicy::fixed(40);
        for tx_theta in [FRAC_PI_2, 0.0] {
            geom.tx_position.theta = tx_theta;
            let mut solver = FrequencySolver::new(0.05, &geom, &medium).unwrap();
            for &(r, th, ph) in &[(200e-6, 0.7, 0.3), (350e-6, 2.2, -1.0), (800e-6, 1.0, 2.5)] {
                let p = FieldPoint::new(r, th, ph, &geom).unwrap();
                let a = solver.evaluate_with(&p, &policy, AngularPath::Aligned).unwrap().value;
                let g = solver.evaluate_with(&p, &policy, AngularPath::General).unwrap().value;
                assert!((a - g).norm() <= 1e-10 * a.norm(), "{a} vs {g}");
            }
        }
    }

    #[test]
    fn transmitter_point_rejected() {
        let geom = geometry(24000);
        let medium = MediumModel::from_geometry(1e-9, &geom, 0.0).unwrap();
        let p = FieldPoint::new(500e-6, FRAC_PI_2, 0.0, &geom).unwrap();
        assert!(matches!(
            cgf_frequency(&p, 1.0, &geom, &medium, &TruncationPolicy::default()),
            Err(AnalyticError::InvalidPoint(_))
        ));
    }

    #[test]
    fn truncation_failure_reports_diagnostics() {
        let geom = geometry(24000);
        let medium = MediumModel::from_geometry(1e-9, &geom, 0.0).unwrap();
        // very close to the source: slow convergence
        let p = FieldPoint::new(500.5e-6, FRAC_PI_2, 1e-3, &geom).unwrap();
        let policy = TruncationPolicy { max_modes: 30, ..TruncationPolicy::default() };
        match cgf_frequency(&p, 0.01, &geom, &medium, &policy) {
            Err(AnalyticError::Truncation { modes, .. }) => assert_eq!(modes, 30),
            other => panic!("expected truncation failure, got {other:?}"),
        }
    }
}
