//! Associated Legendre functions and spherical Bessel functions of complex
//! argument.
//!
//! Legendre functions use the Condon–Shortley phase,
//! `P_n^m(x) = (-1)^m (1 - x²)^{m/2} d^m P_n(x) / dx^m`.
//!
//! Spherical Bessel values can grow or decay like `e^{|Im z|}` and like
//! `(2n-1)!!/z^{n+1}`, so the sequence routines return [`ScaledComplex`]
//! values (`mantissa · e^{log_scale}`). The plain `sph_bessel_*` functions
//! unscale and report [`SpecialFunctionError::Overflow`] when the value is
//! not representable in `f64`.
//!
//! Evaluation strategy:
//! - `j_n`: ratios `j_k / j_{k-1}` by the backward continued fraction
//!   (Miller-type downward recurrence), anchored on the closed forms of
//!   `j_0` or `j_1`.
//! - `y_n`, `h_n = j_n + i y_n`: upward recurrence from the closed forms of
//!   orders 0 and 1. `h_n` is recurred on its own instead of being formed as
//!   `j_n + i y_n`, which cancels catastrophically when `Im z ≫ 1`.

use num_complex::Complex64;
use thiserror::Error;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Largest natural log that still unscales to a finite `f64`.
const MAX_LOG: f64 = 709.0;
const RENORM_THRESHOLD: f64 = 1e150;
/// Below this `|Im z|` the library `sin`/`cos` are used directly.
const DIRECT_TRIG_LIMIT: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialFunctionError {
    #[error("Legendre order m = {m} exceeds degree n = {n}")]
    OrderExceedsDegree { n: usize, m: usize },
    #[error("Legendre argument x = {0} outside [-1, 1]")]
    ArgumentOutOfDomain(f64),
    #[error("spherical Bessel functions are not evaluated at z = 0")]
    ZeroArgument,
    #[error("non-finite argument z = {0}")]
    NonFiniteArgument(Complex64),
    #[error("order {n} at z = {z} overflows f64 (|value| ~ e^{log_magnitude:.1})")]
    Overflow {
        n: usize,
        z: Complex64,
        log_magnitude: f64,
    },
}

/// A complex number stored as `mantissa · e^{log_scale}` with `|mantissa| = 1`
/// (or an exact zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledComplex {
    pub mantissa: Complex64,
    pub log_scale: f64,
}

impl ScaledComplex {
    pub const ZERO: ScaledComplex = ScaledComplex {
        mantissa: ZERO,
        log_scale: 0.0,
    };

    pub fn new(mantissa: Complex64, log_scale: f64) -> Self {
        let m = mantissa.norm();
        if m == 0.0 || !m.is_finite() {
            return ScaledComplex {
                mantissa,
                log_scale: if m == 0.0 { 0.0 } else { log_scale },
            };
        }
        ScaledComplex {
            mantissa: mantissa / m,
            log_scale: log_scale + m.ln(),
        }
    }

    pub fn from_complex(z: Complex64) -> Self {
        Self::new(z, 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == ZERO
    }

    /// Natural log of the magnitude; `-inf` for zero.
    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.log_scale + self.mantissa.norm().ln()
        }
    }

    /// Unscaled value; may be `inf` or `0` when out of range.
    pub fn value(&self) -> Complex64 {
        if self.is_zero() {
            return ZERO;
        }
        self.mantissa * self.log_scale.exp()
    }

    pub fn mul(self, other: ScaledComplex) -> ScaledComplex {
        ScaledComplex::new(
            self.mantissa * other.mantissa,
            self.log_scale + other.log_scale,
        )
    }

    pub fn scale(self, factor: Complex64) -> ScaledComplex {
        ScaledComplex::new(self.mantissa * factor, self.log_scale)
    }

    /// `self / other` as a plain complex number.
    pub fn ratio(self, other: ScaledComplex) -> Complex64 {
        if self.is_zero() {
            return ZERO;
        }
        (self.mantissa / other.mantissa) * (self.log_scale - other.log_scale).exp()
    }

    pub fn add(self, other: ScaledComplex) -> ScaledComplex {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let s = self.log_scale.max(other.log_scale);
        let a = self.mantissa * (self.log_scale - s).exp();
        let b = other.mantissa * (other.log_scale - s).exp();
        ScaledComplex::new(a + b, s)
    }

    pub fn sub(self, other: ScaledComplex) -> ScaledComplex {
        self.add(other.scale(Complex64::new(-1.0, 0.0)))
    }
}

// ---------------------------------------------------------------------------
// Associated Legendre functions
// ---------------------------------------------------------------------------

fn check_legendre(n: usize, m: usize, x: f64) -> Result<(), SpecialFunctionError> {
    if m > n {
        return Err(SpecialFunctionError::OrderExceedsDegree { n, m });
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(SpecialFunctionError::ArgumentOutOfDomain(x));
    }
    Ok(())
}

/// `P_n^m(x)` with the Condon–Shortley phase, by the three-term recurrence in
/// the degree.
pub fn assoc_legendre(n: usize, m: usize, x: f64) -> Result<f64, SpecialFunctionError> {
    check_legendre(n, m, x)?;
    let s = ((1.0 - x) * (1.0 + x)).sqrt();
    // P_m^m = (-1)^m (2m-1)!! s^m
    let mut pmm = 1.0;
    for i in 1..=m {
        pmm *= -((2 * i - 1) as f64) * s;
    }
    if n == m {
        return Ok(pmm);
    }
    let mut p_prev = pmm;
    let mut p = x * (2 * m + 1) as f64 * pmm;
    for l in (m + 2)..=n {
        let next = ((2 * l - 1) as f64 * x * p - (l + m - 1) as f64 * p_prev) / (l - m) as f64;
        p_prev = p;
        p = next;
    }
    Ok(p)
}

/// `sqrt((n-m)!/(n+m)!) · P_n^m(x)`, bounded by one in magnitude and free of
/// the factorial overflow of the raw functions at large order.
pub fn assoc_legendre_normalized(n: usize, m: usize, x: f64) -> Result<f64, SpecialFunctionError> {
    check_legendre(n, m, x)?;
    let s = ((1.0 - x) * (1.0 + x)).sqrt();
    let mut pmm = 1.0;
    for i in 1..=m {
        pmm *= -s * (((2 * i - 1) as f64) / ((2 * i) as f64)).sqrt();
    }
    if n == m {
        return Ok(pmm);
    }
    let mut p_prev = pmm;
    let mut p = x * ((2 * m + 1) as f64).sqrt() * pmm;
    for l in (m + 2)..=n {
        let (lf, mf) = (l as f64, m as f64);
        let a = (2.0 * lf - 1.0) / ((lf - mf) * (lf + mf)).sqrt();
        let b = (((lf + mf - 1.0) * (lf - mf - 1.0)) / ((lf - mf) * (lf + mf))).sqrt();
        let next = a * x * p - b * p_prev;
        p_prev = p;
        p = next;
    }
    Ok(p)
}

/// Legendre polynomials `P_0(x) ..= P_nmax(x)`.
pub fn legendre_sequence(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(1.0);
    if nmax == 0 {
        return out;
    }
    out.push(x);
    for l in 2..=nmax {
        let lf = l as f64;
        let next = ((2.0 * lf - 1.0) * x * out[l - 1] - (lf - 1.0) * out[l - 2]) / lf;
        out.push(next);
    }
    out
}

// ---------------------------------------------------------------------------
// Spherical Bessel functions
// ---------------------------------------------------------------------------

/// `sin z` and `cos z` scaled by `e^{-|Im z|}`; returns (sin, cos, log_scale).
fn scaled_sin_cos(z: Complex64) -> (Complex64, Complex64, f64) {
    if z.im.abs() < DIRECT_TRIG_LIMIT {
        return (z.sin(), z.cos(), 0.0);
    }
    let s = z.im.abs();
    let phase = Complex64::new(0.0, z.re).exp();
    // e^{iz} e^{-s} and e^{-iz} e^{-s}
    let a = phase * (-z.im - s).exp();
    let b = phase.inv() * (z.im - s).exp();
    ((a - b) / (2.0 * I), (a + b) / 2.0, s)
}

fn check_bessel_argument(z: Complex64) -> Result<(), SpecialFunctionError> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(SpecialFunctionError::NonFiniteArgument(z));
    }
    if z == ZERO {
        return Err(SpecialFunctionError::ZeroArgument);
    }
    Ok(())
}

/// Largest `|Im z|` at which `y` and `h` come straight from upward recurrence.
const UPWARD_IM_LIMIT: f64 = 1.0;

/// Starting order for the backward continued fraction.
fn miller_start(nmax: usize, z: Complex64) -> usize {
    let a = z.norm();
    (nmax as f64).max(a.ceil()) as usize + 50 + (10.0 * a.cbrt()).ceil() as usize
}

/// `j_0(z) ..= j_nmax(z)`. `z = 0` is accepted here (`j_n(0) = δ_{n0}`).
pub fn sph_j_sequence(nmax: usize, z: Complex64) -> Vec<ScaledComplex> {
    let mut out = vec![ScaledComplex::ZERO; nmax + 1];
    if z == ZERO {
        out[0] = ScaledComplex::from_complex(Complex64::new(1.0, 0.0));
        return out;
    }
    let (sin, cos, ls) = scaled_sin_cos(z);
    let j0 = ScaledComplex::new(sin / z, ls);
    let j1 = ScaledComplex::new(sin / (z * z) - cos / z, ls);
    out[0] = j0;
    if nmax == 0 {
        return out;
    }

    // ratios[k] = j_k / j_{k-1}, k >= 1
    let start = miller_start(nmax, z);
    let mut ratios = vec![ZERO; nmax + 1];
    let mut rho = ZERO;
    for k in (1..=start).rev() {
        let mut denom = Complex64::new((2 * k + 1) as f64, 0.0) / z - rho;
        if denom == ZERO {
            denom = Complex64::new(1e-300, 0.0);
        }
        rho = denom.inv();
        if k <= nmax {
            ratios[k] = rho;
        }
    }

    // Anchor on whichever closed form is better conditioned. Near small |z|
    // the j_1 closed form cancels, while near zeros of j_0 the ratio j_1/j_0
    // blows up.
    let use_j1 = j1.ln_abs() > j0.ln_abs() + 1.0;
    if use_j1 {
        out[1] = j1;
        for k in 2..=nmax {
            out[k] = out[k - 1].scale(ratios[k]);
        }
    } else {
        for k in 1..=nmax {
            out[k] = out[k - 1].scale(ratios[k]);
        }
    }
    out
}

fn upward_sequence(
    nmax: usize,
    z: Complex64,
    f0: Complex64,
    f1: Complex64,
    log_scale: f64,
) -> Vec<ScaledComplex> {
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(ScaledComplex::new(f0, log_scale));
    if nmax == 0 {
        return out;
    }
    out.push(ScaledComplex::new(f1, log_scale));
    let mut prev = f0;
    let mut cur = f1;
    let mut scale = log_scale;
    for k in 1..nmax {
        let next = Complex64::new((2 * k + 1) as f64, 0.0) / z * cur - prev;
        prev = cur;
        cur = next;
        let m = cur.norm();
        if m > RENORM_THRESHOLD {
            prev /= m;
            cur /= m;
            scale += m.ln();
        }
        out.push(ScaledComplex::new(cur, scale));
    }
    out
}

/// `y_0(z) ..= y_nmax(z)`. Requires `z ≠ 0`.
///
/// Upward recurrence only near the real axis. Elsewhere the recurrence picks
/// up the Hankel component that is small at low order and grows past
/// `n ≈ |z|`, so `y` is assembled from `j` and the Hankel function that
/// decays in that half-plane: `y = i(h⁻ − j)` below the axis, `y = −i(h⁺ − j)`
/// above.
pub fn sph_y_sequence(nmax: usize, z: Complex64) -> Vec<ScaledComplex> {
    if z.im.abs() <= UPWARD_IM_LIMIT {
        let (sin, cos, ls) = scaled_sin_cos(z);
        let y0 = -cos / z;
        let y1 = -cos / (z * z) - sin / z;
        return upward_sequence(nmax, z, y0, y1, ls);
    }
    let j = sph_j_sequence(nmax, z);
    let (h, factor) = if z.im > 0.0 {
        (hankel_upward(nmax, z), Complex64::new(0.0, -1.0))
    } else {
        (conjugated(hankel_upward(nmax, z.conj())), I)
    };
    h.into_iter().zip(j).map(|(h, j)| h.sub(j).scale(factor)).collect()
}

/// Outgoing spherical Hankel functions `h_n(z) = j_n(z) + i y_n(z)`,
/// orders `0 ..= nmax`. Requires `z ≠ 0`.
///
/// For `Im z > 0` these decay like `e^{-Im z}` and upward recurrence is
/// stable; well below the axis `h = 2j − h⁻` with `h⁻_n(z) = conj h_n(conj z)`.
pub fn sph_h_sequence(nmax: usize, z: Complex64) -> Vec<ScaledComplex> {
    if z.im >= -UPWARD_IM_LIMIT {
        return hankel_upward(nmax, z);
    }
    let j = sph_j_sequence(nmax, z);
    let h2 = conjugated(hankel_upward(nmax, z.conj()));
    j.into_iter()
        .zip(h2)
        .map(|(j, h2)| j.scale(Complex64::new(2.0, 0.0)).sub(h2))
        .collect()
}

fn hankel_upward(nmax: usize, z: Complex64) -> Vec<ScaledComplex> {
    // h_0 = -i e^{iz}/z, h_1 = -e^{iz}(z + i)/z²; factor out e^{-Im z}.
    let phase = Complex64::new(0.0, z.re).exp();
    let h0 = -I * phase / z;
    let h1 = -phase * (z + I) / (z * z);
    upward_sequence(nmax, z, h0, h1, -z.im)
}

fn conjugated(seq: Vec<ScaledComplex>) -> Vec<ScaledComplex> {
    seq.into_iter()
        .map(|v| ScaledComplex {
            mantissa: v.mantissa.conj(),
            log_scale: v.log_scale,
        })
        .collect()
}

/// Derivatives `f'_n(z) = f_{n-1}(z) - (n+1)/z · f_n(z)` (and `f'_0 = -f_1`)
/// from a sequence that extends at least one order past the last requested.
pub fn derivative_from_sequence(seq: &[ScaledComplex], n: usize, z: Complex64) -> ScaledComplex {
    if n == 0 {
        return seq[1].scale(Complex64::new(-1.0, 0.0));
    }
    let term = seq[n].scale(Complex64::new((n + 1) as f64, 0.0) / z);
    seq[n - 1].sub(term)
}

fn unscale(n: usize, z: Complex64, v: ScaledComplex) -> Result<Complex64, SpecialFunctionError> {
    let lm = v.ln_abs();
    if lm > MAX_LOG {
        return Err(SpecialFunctionError::Overflow {
            n,
            z,
            log_magnitude: lm,
        });
    }
    Ok(v.value())
}

/// Spherical Bessel function of the first kind, `j_n(z)`.
pub fn sph_bessel_j(n: usize, z: Complex64) -> Result<Complex64, SpecialFunctionError> {
    check_bessel_argument(z)?;
    unscale(n, z, sph_j_sequence(n, z)[n])
}

/// Spherical Bessel function of the second kind, `y_n(z)`.
pub fn sph_bessel_y(n: usize, z: Complex64) -> Result<Complex64, SpecialFunctionError> {
    check_bessel_argument(z)?;
    unscale(n, z, sph_y_sequence(n, z)[n])
}

/// `d j_n(z) / dz`.
pub fn sph_bessel_j_deriv(n: usize, z: Complex64) -> Result<Complex64, SpecialFunctionError> {
    check_bessel_argument(z)?;
    let seq = sph_j_sequence(n.max(1), z);
    unscale(n, z, derivative_from_sequence(&seq, n, z))
}

/// `d y_n(z) / dz`.
pub fn sph_bessel_y_deriv(n: usize, z: Complex64) -> Result<Complex64, SpecialFunctionError> {
    check_bessel_argument(z)?;
    let seq = sph_y_sequence(n.max(1), z);
    unscale(n, z, derivative_from_sequence(&seq, n, z))
}

/// Outgoing spherical Hankel function `h_n(z) = j_n(z) + i y_n(z)`.
pub fn sph_hankel_out(n: usize, z: Complex64) -> Result<Complex64, SpecialFunctionError> {
    check_bessel_argument(z)?;
    unscale(n, z, sph_h_sequence(n, z)[n])
}

/// `d h_n(z) / dz`.
pub fn sph_hankel_out_deriv(n: usize, z: Complex64) -> Result<Complex64, SpecialFunctionError> {
    check_bessel_argument(z)?;
    let seq = sph_h_sequence(n.max(1), z);
    unscale(n, z, derivative_from_sequence(&seq, n, z))
}
