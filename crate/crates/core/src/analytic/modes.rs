//! Per-mode radial solutions and the 4×4 interface/source system.
//!
//! With the transform convention `∂/∂t ↔ iω`, the radial equations are
//! modified-Helmholtz equations with decay constants
//!
//! ```text
//! k1 = sqrt(iω / D)                outside the spheroid
//! k2 = sqrt((iω − 𝒦(ω)) / D_eff)   inside, 𝒦(ω) = −k_f for first-order uptake
//! ```
//!
//! The spherical Bessel functions are evaluated at `κ r` with the Helmholtz
//! wavenumber `κ = ±i k`, sign chosen so that `Im κ ≥ 0`. Then
//! `h_n(κ r) = j_n + i y_n` decays as `r → ∞` and either sign of `k` gives
//! the same field.
//!
//! Radial basis, each function normalised to one at a reference radius so
//! that no coefficient overflows:
//!
//! ```text
//! r < R_s        R_n = G · j_n(κ2 r)/j_n(κ2 R_s)
//! R_s < r < r_tx R_n = A · h_n(κ1 r)/h_n(κ1 R_s) + B · j_n(κ1 r)/j_n(κ1 r_tx)
//! r > r_tx       R_n = D · h_n(κ1 r)/h_n(κ1 r_tx)
//! ```
//!
//! Constraints (one row each):
//!
//! ```text
//! jump      R_n(R_s⁻) = k R_n(R_s⁺)
//! flux      D_eff R_n'(R_s⁻) = D R_n'(R_s⁺)
//! value     R_n(r_tx⁻) = R_n(r_tx⁺)
//! source    r_tx² [R_n'(r_tx⁺) − R_n'(r_tx⁻)] = 1
//! ```
//!
//! The unit source jump leaves an overall factor `−1/D` to be applied when
//! the modes are summed into a concentration.

use num_complex::Complex64;

use crate::model::{MediumModel, ReactionKernel, SpheroidGeometry};
use crate::specfun::{
    derivative_from_sequence, sph_h_sequence, sph_j_sequence, ScaledComplex,
};

use super::AnalyticError;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Systems whose row-equilibrated 1-norm condition number exceeds this are
/// rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Decay constants `(k1, k2)` for the first-order sink carried by `medium`.
pub fn wavenumbers(omega: f64, medium: &MediumModel) -> (Complex64, Complex64) {
    wavenumbers_with_kernel(omega, medium, &medium.sink())
}

/// Decay constants `(k1, k2)` for an arbitrary reaction kernel. Principal
/// square roots.
pub fn wavenumbers_with_kernel(
    omega: f64,
    medium: &MediumModel,
    kernel: &dyn ReactionKernel,
) -> (Complex64, Complex64) {
    let iw = Complex64::new(0.0, omega);
    let k1 = (iw / medium.d_free).sqrt();
    let k2 = ((iw - kernel.kernel(omega)) / medium.d_eff).sqrt();
    (k1, k2)
}

/// Decay constants at a complex transform variable `s` (`s = iω` on the
/// imaginary axis).
pub fn laplace_wavenumbers(s: Complex64, medium: &MediumModel) -> (Complex64, Complex64) {
    let k1 = (s / medium.d_free).sqrt();
    let k2 = ((s - medium.sink().kernel(s.im)) / medium.d_eff).sqrt();
    (k1, k2)
}

/// Helmholtz wavenumber `±i k` on the branch `Im κ ≥ 0`.
pub fn helmholtz_wavenumber(k: Complex64) -> Complex64 {
    let kappa = I * k;
    if kappa.im < 0.0 || (kappa.im == 0.0 && kappa.re < 0.0) {
        -kappa
    } else {
        kappa
    }
}

/// Which side of the interface a radial evaluation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialZone {
    Interior,
    Middle,
    Outer,
}

/// Reference Bessel data shared by all modes at one frequency.
#[derive(Debug, Clone)]
pub struct ReferenceSequences {
    pub kappa1: Complex64,
    pub kappa2: Complex64,
    /// `j_n(κ2 R_s)`
    pub j2_r: Vec<ScaledComplex>,
    /// `j_n(κ1 R_s)`
    pub j1_r: Vec<ScaledComplex>,
    /// `j_n(κ1 r_tx)`
    pub j1_t: Vec<ScaledComplex>,
    /// `h_n(κ1 R_s)`
    pub h1_r: Vec<ScaledComplex>,
    /// `h_n(κ1 r_tx)`
    pub h1_t: Vec<ScaledComplex>,
}

impl ReferenceSequences {
    /// Sequences through order `nmax + 1` (derivatives need one extra order).
    pub fn new(kappa1: Complex64, kappa2: Complex64, radius: f64, r_tx: f64, nmax: usize) -> Self {
        let len = nmax + 1;
        Self {
            kappa1,
            kappa2,
            j2_r: sph_j_sequence(len, kappa2 * radius),
            j1_r: sph_j_sequence(len, kappa1 * radius),
            j1_t: sph_j_sequence(len, kappa1 * r_tx),
            h1_r: sph_h_sequence(len, kappa1 * radius),
            h1_t: sph_h_sequence(len, kappa1 * r_tx),
        }
    }

    pub fn max_order(&self) -> usize {
        self.j2_r.len() - 2
    }
}

/// Logarithmic radial derivative `d/dr ln f_n(κ r) = κ f_n'(κr)/f_n(κr)`.
pub(crate) fn log_derivative(seq: &[ScaledComplex], n: usize, kappa: Complex64, r: f64) -> Complex64 {
    let z = kappa * r;
    let d = derivative_from_sequence(seq, n, z);
    kappa * d.ratio(seq[n])
}

/// Everything needed to evaluate one mode's radial function.
#[derive(Debug, Clone, Copy)]
pub struct ModeBasis {
    pub radius: f64,
    pub r_tx: f64,
    pub d_free: f64,
    pub d_eff: f64,
    pub jump_k: f64,
    pub kappa1: Complex64,
    pub kappa2: Complex64,
    pub j2_r: ScaledComplex,
    pub j1_t: ScaledComplex,
    pub h1_r: ScaledComplex,
    pub h1_t: ScaledComplex,
    /// `j_n(κ1 R_s)/j_n(κ1 r_tx)`
    pub uj_at_r: Complex64,
    /// `h_n(κ1 r_tx)/h_n(κ1 R_s)`
    pub uh_at_t: Complex64,
    /// log-derivatives at the reference radii
    pub l2_r: Complex64,
    pub lj_r: Complex64,
    pub lh_r: Complex64,
    pub lj_t: Complex64,
    pub lh_t: Complex64,
}

/// Radial solution of one Legendre degree at one frequency.
#[derive(Debug, Clone, Copy)]
pub struct ModeSolution {
    pub n: usize,
    pub omega: f64,
    pub k1: Complex64,
    pub k2: Complex64,
    /// Interior coefficient.
    pub g_n: Complex64,
    /// Outgoing (`h_n`) coefficient between the spheroid and the source.
    pub a_n: Complex64,
    /// Regular (`j_n`) coefficient between the spheroid and the source.
    pub b_n: Complex64,
    /// Coefficient beyond the source.
    pub d_n: Complex64,
    pub basis: ModeBasis,
}

impl ModeSolution {
    /// Rows of the constraint system for this mode's basis, unknowns ordered
    /// `[G, A, B, D]`.
    pub fn system(basis: &ModeBasis) -> ([[Complex64; 4]; 4], [Complex64; 4]) {
        let b = basis;
        let k = Complex64::new(b.jump_k, 0.0);
        let rt2 = b.r_tx * b.r_tx;
        let a = [
            [ONE, -k, -k * b.uj_at_r, ZERO],
            [
                b.d_eff * b.l2_r,
                -b.d_free * b.lh_r,
                -b.d_free * b.lj_r * b.uj_at_r,
                ZERO,
            ],
            [ZERO, b.uh_at_t, ONE, -ONE],
            [ZERO, -rt2 * b.lh_t * b.uh_at_t, -rt2 * b.lj_t, rt2 * b.lh_t],
        ];
        (a, [ZERO, ZERO, ZERO, ONE])
    }

    pub fn coefficients(&self) -> [Complex64; 4] {
        [self.g_n, self.a_n, self.b_n, self.d_n]
    }

    /// Relative residual of each constraint row: `|row·x − rhs| / (Σ|a_ij x_j| + |rhs|)`.
    pub fn constraint_residuals(&self) -> [f64; 4] {
        let (a, rhs) = Self::system(&self.basis);
        let x = self.coefficients();
        let mut out = [0.0; 4];
        for i in 0..4 {
            let mut acc = -rhs[i];
            let mut scale = rhs[i].norm();
            for j in 0..4 {
                acc += a[i][j] * x[j];
                scale += (a[i][j] * x[j]).norm();
            }
            out[i] = if scale == 0.0 { 0.0 } else { acc.norm() / scale };
        }
        out
    }

    /// Radial function and its `r`-derivative at `r` in the given zone,
    /// computing the Bessel values afresh.
    pub fn radial(&self, r: f64, zone: RadialZone) -> (Complex64, Complex64) {
        let n = self.n;
        let b = &self.basis;
        match zone {
            RadialZone::Interior => {
                let seq = sph_j_sequence(n + 1, b.kappa2 * r);
                let u = seq[n].ratio(b.j2_r);
                let du = if r == 0.0 {
                    ZERO
                } else {
                    b.kappa2 * derivative_from_sequence(&seq, n, b.kappa2 * r).ratio(b.j2_r)
                };
                (self.g_n * u, self.g_n * du)
            }
            RadialZone::Middle => {
                let z = b.kappa1 * r;
                let js = sph_j_sequence(n + 1, z);
                let hs = sph_h_sequence(n + 1, z);
                let uj = js[n].ratio(b.j1_t);
                let uh = hs[n].ratio(b.h1_r);
                let duj = b.kappa1 * derivative_from_sequence(&js, n, z).ratio(b.j1_t);
                let duh = b.kappa1 * derivative_from_sequence(&hs, n, z).ratio(b.h1_r);
                (self.a_n * uh + self.b_n * uj, self.a_n * duh + self.b_n * duj)
            }
            RadialZone::Outer => {
                let z = b.kappa1 * r;
                let hs = sph_h_sequence(n + 1, z);
                let uh = hs[n].ratio(b.h1_t);
                let duh = b.kappa1 * derivative_from_sequence(&hs, n, z).ratio(b.h1_t);
                (self.d_n * uh, self.d_n * duh)
            }
        }
    }

    /// Radial function from precomputed Bessel values at the evaluation radius.
    pub(crate) fn radial_from(&self, zone: RadialZone, j2: ScaledComplex, j1: ScaledComplex, h1: ScaledComplex) -> Complex64 {
        let b = &self.basis;
        match zone {
            RadialZone::Interior => self.g_n * j2.ratio(b.j2_r),
            RadialZone::Middle => self.a_n * h1.ratio(b.h1_r) + self.b_n * j1.ratio(b.j1_t),
            RadialZone::Outer => self.d_n * h1.ratio(b.h1_t),
        }
    }
}

/// Builds the basis of degree `n` from precomputed reference sequences.
pub fn mode_basis(
    n: usize,
    refs: &ReferenceSequences,
    geom: &SpheroidGeometry,
    medium: &MediumModel,
) -> ModeBasis {
    let radius = geom.radius_m;
    let r_tx = geom.tx_position.r;
    let (k1, k2) = (refs.kappa1, refs.kappa2);
    ModeBasis {
        radius,
        r_tx,
        d_free: medium.d_free,
        d_eff: medium.d_eff,
        jump_k: medium.jump_k,
        kappa1: k1,
        kappa2: k2,
        j2_r: refs.j2_r[n],
        j1_t: refs.j1_t[n],
        h1_r: refs.h1_r[n],
        h1_t: refs.h1_t[n],
        uj_at_r: refs.j1_r[n].ratio(refs.j1_t[n]),
        uh_at_t: refs.h1_t[n].ratio(refs.h1_r[n]),
        l2_r: log_derivative(&refs.j2_r, n, k2, radius),
        lj_r: log_derivative(&refs.j1_r, n, k1, radius),
        lh_r: log_derivative(&refs.h1_r, n, k1, radius),
        lj_t: log_derivative(&refs.j1_t, n, k1, r_tx),
        lh_t: log_derivative(&refs.h1_t, n, k1, r_tx),
    }
}

/// Solves degree `n` at one frequency from shared reference sequences.
pub fn solve_mode(
    n: usize,
    omega: f64,
    k1: Complex64,
    k2: Complex64,
    refs: &ReferenceSequences,
    geom: &SpheroidGeometry,
    medium: &MediumModel,
) -> Result<ModeSolution, AnalyticError> {
    let basis = mode_basis(n, refs, geom, medium);
    let (a, rhs) = ModeSolution::system(&basis);
    let x = solve_equilibrated(a, rhs).map_err(|condition| AnalyticError::NearSingular {
        n,
        omega,
        condition,
    })?;
    Ok(ModeSolution {
        n,
        omega,
        k1,
        k2,
        g_n: x[0],
        a_n: x[1],
        b_n: x[2],
        d_n: x[3],
        basis,
    })
}

/// Radial solution of degree `n` at angular frequency `omega`.
pub fn mode_coefficients(
    n: usize,
    omega: f64,
    geom: &SpheroidGeometry,
    medium: &MediumModel,
) -> Result<ModeSolution, AnalyticError> {
    let (k1, k2) = wavenumbers(omega, medium);
    mode_coefficients_with_wavenumbers(n, omega, k1, k2, geom, medium)
}

/// Same as [`mode_coefficients`] with caller-supplied decay constants (either
/// square-root branch).
pub fn mode_coefficients_with_wavenumbers(
    n: usize,
    omega: f64,
    k1: Complex64,
    k2: Complex64,
    geom: &SpheroidGeometry,
    medium: &MediumModel,
) -> Result<ModeSolution, AnalyticError> {
    geom.validate()?;
    if k1 == ZERO {
        return Err(AnalyticError::StaticLimit);
    }
    let refs = ReferenceSequences::new(
        helmholtz_wavenumber(k1),
        helmholtz_wavenumber(k2),
        geom.radius_m,
        geom.tx_position.r,
        n,
    );
    solve_mode(n, omega, k1, k2, &refs, geom, medium)
}

/// Row-equilibrated dense solve with partial pivoting. On failure returns the
/// condition estimate.
fn solve_equilibrated(
    mut a: [[Complex64; 4]; 4],
    mut b: [Complex64; 4],
) -> Result<[Complex64; 4], f64> {
    for i in 0..4 {
        let s = a[i].iter().map(|v| v.norm()).fold(0.0, f64::max);
        if s == 0.0 || !s.is_finite() {
            return Err(f64::INFINITY);
        }
        for v in a[i].iter_mut() {
            *v /= s;
        }
        b[i] /= s;
    }
    let lu = Lu::factor(a).ok_or(f64::INFINITY)?;
    // 1-norm condition number from the explicit inverse
    let norm_a = (0..4)
        .map(|j| (0..4).map(|i| a[i][j].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut norm_inv: f64 = 0.0;
    for j in 0..4 {
        let mut e = [ZERO; 4];
        e[j] = ONE;
        let col = lu.solve(e);
        norm_inv = norm_inv.max(col.iter().map(|v| v.norm()).sum());
    }
    let cond = norm_a * norm_inv;
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(cond);
    }
    let x = lu.solve(b);
    if x.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(f64::INFINITY);
    }
    Ok(x)
}

struct Lu {
    m: [[Complex64; 4]; 4],
    perm: [usize; 4],
}

impl Lu {
    fn factor(mut m: [[Complex64; 4]; 4]) -> Option<Self> {
        let mut perm = [0, 1, 2, 3];
        for col in 0..4 {
            let pivot = (col..4).max_by(|&i, &j| m[i][col].norm().total_cmp(&m[j][col].norm()))?;
            if m[pivot][col].norm() == 0.0 {
                return None;
            }
            m.swap(col, pivot);
            perm.swap(col, pivot);
            for row in (col + 1)..4 {
                let f = m[row][col] / m[col][col];
                m[row][col] = f;
                for k in (col + 1)..4 {
                    let v = m[col][k];
                    m[row][k] -= f * v;
                }
            }
        }
        Some(Self { m, perm })
    }

    fn solve(&self, b: [Complex64; 4]) -> [Complex64; 4] {
        let mut y = [ZERO; 4];
        for i in 0..4 {
            let mut acc = b[self.perm[i]];
            for k in 0..i {
                acc -= self.m[i][k] * y[k];
            }
            y[i] = acc;
        }
        let mut x = [ZERO; 4];
        for i in (0..4).rev() {
            let mut acc = y[i];
            for k in (i + 1)..4 {
                acc -= self.m[i][k] * x[k];
            }
            x[i] = acc / self.m[i][i];
        }
        x
    }
}
