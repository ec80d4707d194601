//! Porous-medium description of the spheroidal receiver.
//!
//! The spheroid is a ball of radius `R_s` holding `N_c` cells of volume `V_c`.
//! Its void fraction sets everything else:
//!
//! ```text
//! ε     = 1 - N_c V_c / V_s,          V_s = 4/3 π R_s³
//! τ     = ε^{-1/2}
//! D_eff = (ε/τ) D = ε^{3/2} D
//! k     = sqrt(D / D_eff) = ε^{-3/4}   (c_s = k c_o at the surface)
//! ```
//!
//! All quantities are SI (m, s, m³).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Free-fluid diffusion coefficient used when a configuration omits it (m²/s).
pub const DEFAULT_D_FREE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("spheroid radius must be positive, got {0} m")]
    NonPositiveRadius(f64),
    #[error("cell count and cell volume must be non-negative")]
    NegativeCellMatrix,
    #[error("cell matrix volume {matrix:.4e} m³ exceeds spheroid volume {spheroid:.4e} m³ (porosity would be negative)")]
    CellMatrixExceedsSpheroid { matrix: f64, spheroid: f64 },
    #[error("porosity must lie in (0, 1], got {0}")]
    PorosityOutOfRange(f64),
    #[error("diffusion coefficient must be positive, got {0} m²/s")]
    NonPositiveDiffusion(f64),
    #[error("effective diffusion {d_eff:.4e} exceeds free diffusion {d_free:.4e}")]
    EffectiveExceedsFree { d_free: f64, d_eff: f64 },
    #[error("reaction rate must be non-negative and finite, got {0} 1/s")]
    InvalidReactionRate(f64),
    #[error("transmitter at r = {r_tx:.4e} m must lie strictly outside the spheroid (R_s = {radius:.4e} m)")]
    TransmitterInsideSpheroid { r_tx: f64, radius: f64 },
    #[error("non-finite coordinate in transmitter position")]
    NonFinitePosition,
}

/// A point in spherical coordinates: radius (m), polar angle θ and azimuth φ (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalPoint {
    pub fn new(r: f64, theta: f64, phi: f64) -> Self {
        Self { r, theta, phi }
    }

    pub fn to_cartesian(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [self.r * st * cp, self.r * st * sp, self.r * ct]
    }

    pub fn from_cartesian(p: [f64; 3]) -> Self {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if r == 0.0 {
            return Self::new(0.0, 0.0, 0.0);
        }
        let theta = (p[2] / r).clamp(-1.0, 1.0).acos();
        let phi = p[1].atan2(p[0]);
        Self::new(r, theta, phi)
    }

    /// Cosine of the angle between the position vectors of two points.
    pub fn cos_angle_to(&self, other: &SphericalPoint) -> f64 {
        let c = self.theta.cos() * other.theta.cos()
            + self.theta.sin() * other.theta.sin() * (self.phi - other.phi).cos();
        c.clamp(-1.0, 1.0)
    }

    pub fn distance_to(&self, other: &SphericalPoint) -> f64 {
        let a = self.to_cartesian();
        let b = other.to_cartesian();
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }
}

/// Receiver geometry and transmitter placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpheroidGeometry {
    pub radius_m: f64,
    pub n_cells: u64,
    pub cell_volume_m3: f64,
    pub tx_position: SphericalPoint,
}

impl SpheroidGeometry {
    pub fn new(
        radius_m: f64,
        n_cells: u64,
        cell_volume_m3: f64,
        tx_position: SphericalPoint,
    ) -> Result<Self, ModelError> {
        let geom = Self {
            radius_m,
            n_cells,
            cell_volume_m3,
            tx_position,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Checks every invariant, including strictly positive porosity.
    pub fn validate(&self) -> Result<(), ModelError> {
        let eps = porosity(self.n_cells, self.cell_volume_m3, self.radius_m)?;
        if eps <= 0.0 {
            return Err(ModelError::PorosityOutOfRange(eps));
        }
        let tx = self.tx_position;
        if !(tx.r.is_finite() && tx.theta.is_finite() && tx.phi.is_finite()) {
            return Err(ModelError::NonFinitePosition);
        }
        if tx.r <= self.radius_m {
            return Err(ModelError::TransmitterInsideSpheroid {
                r_tx: tx.r,
                radius: self.radius_m,
            });
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        sphere_volume(self.radius_m)
    }

    pub fn porosity(&self) -> Result<f64, ModelError> {
        porosity(self.n_cells, self.cell_volume_m3, self.radius_m)
    }

    /// Same geometry with a different cell count.
    pub fn with_cells(&self, n_cells: u64) -> Self {
        Self {
            n_cells,
            ..*self
        }
    }
}

pub fn sphere_volume(radius: f64) -> f64 {
    4.0 / 3.0 * PI * radius.powi(3)
}

/// Void fraction of the spheroid.
pub fn porosity(n_cells: u64, cell_volume: f64, radius: f64) -> Result<f64, ModelError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(ModelError::NonPositiveRadius(radius));
    }
    if !(cell_volume >= 0.0) || !cell_volume.is_finite() {
        return Err(ModelError::NegativeCellMatrix);
    }
    let spheroid = sphere_volume(radius);
    let matrix = n_cells as f64 * cell_volume;
    if matrix > spheroid {
        return Err(ModelError::CellMatrixExceedsSpheroid { matrix, spheroid });
    }
    Ok((1.0 - matrix / spheroid).clamp(0.0, 1.0))
}

fn check_porosity(eps: f64) -> Result<(), ModelError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(ModelError::PorosityOutOfRange(eps));
    }
    Ok(())
}

/// Tortuosity `τ = ε^{-1/2}`.
pub fn tortuosity(porosity: f64) -> Result<f64, ModelError> {
    check_porosity(porosity)?;
    Ok(porosity.powf(-0.5))
}

/// `D_eff = ε^{3/2} D`.
pub fn effective_diffusion(d_free: f64, porosity: f64) -> Result<f64, ModelError> {
    if !(d_free > 0.0) || !d_free.is_finite() {
        return Err(ModelError::NonPositiveDiffusion(d_free));
    }
    check_porosity(porosity)?;
    Ok(porosity * porosity.sqrt() * d_free)
}

/// Concentration jump `k = sqrt(D / D_eff)` across the spheroid surface.
pub fn boundary_jump(d_free: f64, d_eff: f64) -> Result<f64, ModelError> {
    if !(d_free > 0.0) || !d_free.is_finite() {
        return Err(ModelError::NonPositiveDiffusion(d_free));
    }
    if !(d_eff > 0.0) || !d_eff.is_finite() {
        return Err(ModelError::NonPositiveDiffusion(d_eff));
    }
    if d_eff > d_free {
        return Err(ModelError::EffectiveExceedsFree { d_free, d_eff });
    }
    Ok((d_free / d_eff).sqrt())
}

/// Frequency-domain net reaction term 𝒦(ω) acting on the interior
/// concentration, `D_eff ∇²C_s + 𝒦(ω) C_s = iω C_s`.
pub trait ReactionKernel: Send + Sync {
    fn kernel(&self, omega: f64) -> Complex64;
}

/// Irreversible first-order uptake `A → E` at rate `k_f`: 𝒦(ω) = −k_f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderSink {
    pub k_f: f64,
}

impl ReactionKernel for FirstOrderSink {
    fn kernel(&self, _omega: f64) -> Complex64 {
        Complex64::new(-self.k_f, 0.0)
    }
}

/// Transport parameters of the free fluid and the porous interior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumModel {
    pub d_free: f64,
    pub porosity: f64,
    pub tortuosity: f64,
    pub d_eff: f64,
    pub jump_k: f64,
    pub k_f: f64,
}

impl MediumModel {
    pub fn new(d_free: f64, porosity: f64, k_f: f64) -> Result<Self, ModelError> {
        if !(k_f >= 0.0) || !k_f.is_finite() {
            return Err(ModelError::InvalidReactionRate(k_f));
        }
        let tortuosity = tortuosity(porosity)?;
        let d_eff = effective_diffusion(d_free, porosity)?;
        let jump_k = if porosity == 1.0 {
            1.0
        } else {
            boundary_jump(d_free, d_eff)?
        };
        Ok(Self {
            d_free,
            porosity,
            tortuosity,
            d_eff: if porosity == 1.0 { d_free } else { d_eff },
            jump_k,
            k_f,
        })
    }

    pub fn from_geometry(d_free: f64, geom: &SpheroidGeometry, k_f: f64) -> Result<Self, ModelError> {
        Self::new(d_free, geom.porosity()?, k_f)
    }

    /// Baseline receiver with free-fluid transport inside (ε = 1, k = 1)
    /// but the same uptake rate.
    pub fn transparent(d_free: f64, k_f: f64) -> Result<Self, ModelError> {
        Self::new(d_free, 1.0, k_f)
    }

    pub fn sink(&self) -> FirstOrderSink {
        FirstOrderSink { k_f: self.k_f }
    }
}
