//! Particle-based Brownian simulator.
//!
//! Each released molecule is an independent random walker with Gaussian
//! steps of variance `2 D Δt` per axis, `D` taken at the start of the step
//! (`D` outside the spheroid, `D_eff` inside). A step that crosses the
//! surface is split at the first crossing and the remainder rescaled by
//! `sqrt(D_eff/D)` when entering or `sqrt(D/D_eff)` when leaving. After the
//! move, a walker inside the spheroid is absorbed with probability `k_f Δt`.

mod engine;

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::model::{MediumModel, SpheroidGeometry};

pub use engine::{run_simulation, run_simulation_with_workers, ProbeRecord, SimOutput};

pub type Vec3 = [f64; 3];

/// Largest admissible absorption probability per step.
pub const MAX_ABSORPTION_PROBABILITY: f64 = 0.1;

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn inside(p: Vec3, radius: f64) -> bool {
    dot(p, p) < radius * radius
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PbsError {
    #[error("invalid simulation config: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidConfig(Vec<FieldError>),
    #[error("could not start worker pool: {0}")]
    Workers(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProbeSplit {
    /// One count over the whole sphere.
    Whole,
    /// Separate counts for the half nearer the spheroid center (`inner`) and
    /// the far half (`outer`), split by the plane through the probe center
    /// normal to the radial direction.
    Hemispheres,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub id: String,
    pub center: Vec3,
    pub radius: f64,
    pub split: ProbeSplit,
}

impl Probe {
    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius.powi(3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub n_particles: u64,
    pub seed: u64,
    pub t_end: f64,
    pub geom: SpheroidGeometry,
    pub medium: MediumModel,
    pub probes: Vec<Probe>,
    pub record_absorption: bool,
    /// Probe counts are taken every `stride` steps.
    pub stride: usize,
    /// Width of the absorption-time histogram bins (s).
    pub bin_width: f64,
    /// Move walkers far from every probe and the spheroid by several steps
    /// at once (exact for free diffusion; see `engine`).
    pub far_field_leap: bool,
}

impl SimConfig {
    pub fn new(geom: SpheroidGeometry, medium: MediumModel, n_particles: u64, seed: u64, t_end: f64) -> Self {
        let dt = 0.05;
        Self {
            dt,
            n_particles,
            seed,
            t_end,
            geom,
            medium,
            probes: Vec::new(),
            record_absorption: true,
            stride: 1,
            bin_width: dt,
            far_field_leap: true,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), PbsError> {
        let mut errs = Vec::new();
        let mut err = |field: &str, message: String| {
            errs.push(FieldError {
                field: field.to_string(),
                message,
            })
        };
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            err("dt", format!("must be positive and finite, got {}", self.dt));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() || self.t_end < self.dt {
            err("t_end", format!("must be finite and at least dt, got {}", self.t_end));
        }
        if let Err(e) = self.geom.validate() {
            err("geometry", e.to_string());
        }
        let p_abs = self.medium.k_f * self.dt;
        if !(p_abs <= MAX_ABSORPTION_PROBABILITY) {
            err(
                "k_f",
                format!("k_f·dt = {p_abs:.4} exceeds {MAX_ABSORPTION_PROBABILITY}; reduce dt"),
            );
        }
        let step = (2.0 * self.medium.d_free * self.dt).sqrt();
        if self.dt > 0.0 && !(step <= self.geom.radius_m / 10.0) {
            err(
                "dt",
                format!(
                    "rms step sqrt(2·D·dt) = {step:.3e} m exceeds R_s/10 = {:.3e} m",
                    self.geom.radius_m / 10.0
                ),
            );
        }
        if self.stride == 0 {
            err("stride", "must be at least 1".into());
        }
        if !(self.bin_width >= self.dt) || !self.bin_width.is_finite() {
            err("bin_width", format!("must be at least dt, got {}", self.bin_width));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, p) in self.probes.iter().enumerate() {
            let field = format!("probe[{i}]");
            if !seen.insert(p.id.as_str()) {
                err(&field, format!("duplicate id {:?}", p.id));
            }
            if !(p.radius > 0.0) || p.radius > self.geom.radius_m / 10.0 {
                err(
                    &format!("{field}.radius"),
                    format!("must be in (0, R_s/10 = {:.3e}] m, got {}", self.geom.radius_m / 10.0, p.radius),
                );
            }
            if p.center.iter().any(|c| !c.is_finite()) {
                err(&format!("{field}.center"), "must be finite".into());
            }
            if p.split == ProbeSplit::Hemispheres && norm(p.center) <= p.radius {
                err(
                    &format!("{field}.split"),
                    "hemisphere split needs a probe that does not contain the spheroid center".into(),
                );
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(PbsError::InvalidConfig(errs))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Alive,
    Absorbed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleEnsemble {
    pub positions: Vec<Vec3>,
    pub status: Vec<Status>,
    /// Valid where `status` is `Absorbed`; NaN otherwise.
    pub absorption_time: Vec<f64>,
    pub stream_ids: Vec<u64>,
}

impl ParticleEnsemble {
    pub fn released_at(position: Vec3, n: usize) -> Self {
        Self {
            positions: vec![position; n],
            status: vec![Status::Alive; n],
            absorption_time: vec![f64::NAN; n],
            stream_ids: (0..n as u64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn alive(&self) -> usize {
        self.status.iter().filter(|s| **s == Status::Alive).count()
    }

    pub fn absorbed(&self) -> usize {
        self.len() - self.alive()
    }
}

/// Independent generator for walker `index`: the seed fixes the key and the
/// index selects the ChaCha stream.
pub fn particle_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn step_particle<R: Rng + ?Sized>(position: Vec3, dt: f64, local_d: f64, rng: &mut R) -> Vec3 {
    let sigma = (2.0 * local_d * dt).sqrt();
    let mut out = position;
    for c in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *c += sigma * z;
    }
    out
}

/// Parameter `t ∈ (0, 1]` of the first surface crossing along
/// `start + t (end − start)`, if any.
fn first_crossing(start: Vec3, end: Vec3, radius: f64) -> Option<f64> {
    let d = [end[0] - start[0], end[1] - start[1], end[2] - start[2]];
    let a = dot(d, d);
    if a == 0.0 {
        return None;
    }
    let b = dot(start, d);
    let c = dot(start, start) - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t = if c < 0.0 { (-b + sq) / a } else { (-b - sq) / a };
    (0.0..=1.0).contains(&t).then_some(t)
}

/// Applies the interface rule to one proposed step. Only the first crossing
/// is rescaled; a rescaled remainder that crosses back is not processed
/// again.
pub fn handle_boundary_crossing(start: Vec3, proposed_end: Vec3, geom: &SpheroidGeometry, medium: &MediumModel) -> Vec3 {
    let radius = geom.radius_m;
    let was_inside = inside(start, radius);
    let scale = if was_inside {
        (medium.d_free / medium.d_eff).sqrt()
    } else {
        (medium.d_eff / medium.d_free).sqrt()
    };
    if scale == 1.0 {
        return proposed_end;
    }
    let Some(t) = first_crossing(start, proposed_end, radius) else {
        return proposed_end;
    };
    let mut out = [0.0; 3];
    for i in 0..3 {
        let d = proposed_end[i] - start[i];
        let hit = start[i] + t * d;
        out[i] = hit + scale * (1.0 - t) * d;
    }
    out
}

/// One absorption test per alive walker strictly inside the spheroid, with
/// probability `k_f·dt`; absorbed walkers get time stamp `t_mid`.
pub fn apply_absorption<R: Rng + ?Sized>(
    ensemble: &mut ParticleEnsemble,
    dt: f64,
    t_mid: f64,
    medium: &MediumModel,
    geom: &SpheroidGeometry,
    rng: &mut R,
) {
    let p = medium.k_f * dt;
    if p == 0.0 {
        return;
    }
    for i in 0..ensemble.len() {
        if ensemble.status[i] == Status::Alive && inside(ensemble.positions[i], geom.radius_m) && rng.random::<f64>() < p {
            ensemble.status[i] = Status::Absorbed;
            ensemble.absorption_time[i] = t_mid;
        }
    }
}

/// Alive walkers inside the probe sphere per unit volume per released walker.
pub fn estimate_concentration(ensemble: &ParticleEnsemble, probe_center: Vec3, probe_radius: f64, n_released: u64) -> f64 {
    let r2 = probe_radius * probe_radius;
    let count = ensemble
        .positions
        .iter()
        .zip(&ensemble.status)
        .filter(|(p, s)| {
            **s == Status::Alive && {
                let d = [p[0] - probe_center[0], p[1] - probe_center[1], p[2] - probe_center[2]];
                dot(d, d) <= r2
            }
        })
        .count();
    if n_released == 0 {
        return 0.0;
    }
    count as f64 / (4.0 / 3.0 * PI * probe_radius.powi(3) * n_released as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SphericalPoint;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn reference() -> (SpheroidGeometry, MediumModel) {
        let g = SpheroidGeometry::new(275e-6, 24000, 3.14e-15, SphericalPoint::new(500e-6, FRAC_PI_2, 0.0)).unwrap();
        let m = MediumModel::from_geometry(1e-9, &g, 0.01).unwrap();
        (g, m)
    }

    #[test]
    fn step_statistics() {
        let mut rng = particle_rng(7, 0);
        let n = 1_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let x = step_particle([0.0; 3], 0.05, 1e-9, &mut rng)[0];
            sum += x;
            sum2 += x * x;
        }
        let var = sum2 / n as f64;
        // sample variance of N(0, 1e-10) has relative sd sqrt(2/n) = 1.4e-3
        assert!((var / 1e-10 - 1.0).abs() < 0.01, "{var}");
        let se = (1e-10 / n as f64).sqrt();
        assert!((sum / n as f64).abs() < 3.0 * se);
        assert_eq!(step_particle([1.0, 2.0, 3.0], 0.0, 1e-9, &mut rng), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| particle_rng(3, 5).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| particle_rng(3, 5).random()).collect();
        assert_eq!(a, b);
        assert_ne!(particle_rng(3, 5).random::<u64>(), particle_rng(3, 6).random::<u64>());
        assert_ne!(particle_rng(3, 5).random::<u64>(), particle_rng(4, 5).random::<u64>());
    }

    #[test]
    fn radial_entry_depth_is_scaled() {
        let (g, m) = reference();
        let r = g.radius_m;
        let a = 2e-6;
        let p = 5e-6;
        let end = handle_boundary_crossing([r + a, 0.0, 0.0], [r - p, 0.0, 0.0], &g, &m);
        let depth = r - end[0];
        assert_relative_eq!(depth, p * (m.d_eff / m.d_free).sqrt(), max_relative = 1e-9);
        assert_eq!(end[1], 0.0);
    }

    #[test]
    fn radial_exit_is_stretched() {
        let (g, m) = reference();
        let r = g.radius_m;
        let end = handle_boundary_crossing([0.0, r - 1e-6, 0.0], [0.0, r + 1e-6, 0.0], &g, &m);
        assert_relative_eq!(end[1] - r, 1e-6 * m.jump_k, max_relative = 1e-9);
    }

    #[test]
    fn no_interface_passes_through() {
        let (g, _) = reference();
        let m = MediumModel::transparent(1e-9, 0.0).unwrap();
        let s = [g.radius_m + 1e-6, 1e-7, -2e-7];
        let e = [g.radius_m - 3e-6, 2e-6, 1e-6];
        assert_eq!(handle_boundary_crossing(s, e, &g, &m), e);
        let (g, m) = reference();
        let e2 = [g.radius_m + 5e-6, 0.0, 0.0];
        assert_eq!(handle_boundary_crossing(s, e2, &g, &m), e2);
    }

    #[test]
    fn tangent_chord_enters_and_is_scaled() {
        let (g, m) = reference();
        let r = g.radius_m;
        // chord through the cap, both ends outside
        let s = [r - 1e-7, -1e-5, 0.0];
        let e = [r - 1e-7, 1e-5, 0.0];
        assert!(!inside(s, r) && !inside(e, r));
        let out = handle_boundary_crossing(s, e, &g, &m);
        assert!(inside(out, r), "{out:?}");
    }

    #[test]
    fn absorption_only_inside() {
        let (g, _) = reference();
        let m = MediumModel::from_geometry(1e-9, &g, 1.0).unwrap();
        let mut e = ParticleEnsemble::released_at([400e-6, 0.0, 0.0], 1000);
        let mut rng = particle_rng(1, 0);
        apply_absorption(&mut e, 0.1, 0.05, &m, &g, &mut rng);
        assert_eq!(e.absorbed(), 0);
        e.positions.iter_mut().for_each(|p| *p = [0.0; 3]);
        apply_absorption(&mut e, 0.1, 0.05, &m, &g, &mut rng);
        assert!(e.absorbed() > 50 && e.absorbed() < 150, "{}", e.absorbed());
        assert!(e.status.iter().zip(&e.absorption_time).all(|(s, t)| (*s == Status::Absorbed) == (*t == 0.05)));
        let zero = MediumModel::from_geometry(1e-9, &g, 0.0).unwrap();
        let before = e.status.clone();
        apply_absorption(&mut e, 0.1, 0.15, &zero, &g, &mut rng);
        assert_eq!(e.status, before);
    }

    #[test]
    fn concentration_counts() {
        let mut e = ParticleEnsemble::released_at([0.0; 3], 10);
        let v = 4.0 / 3.0 * PI * 1e-15;
        assert_relative_eq!(estimate_concentration(&e, [0.0; 3], 1e-5, 1000), 10.0 / (v * 1000.0), max_relative = 1e-12);
        assert_eq!(estimate_concentration(&e, [1.0, 0.0, 0.0], 1e-5, 1000), 0.0);
        e.status[0] = Status::Absorbed;
        assert_relative_eq!(estimate_concentration(&e, [0.0; 3], 1e-5, 1000), 9.0 / (v * 1000.0), max_relative = 1e-12);
    }

    #[test]
    fn validation_lists_fields() {
        let (g, m) = reference();
        let mut c = SimConfig::new(g, m, 10, 1, 1.0);
        assert!(c.validate().is_ok());
        c.dt = 20.0;
        c.stride = 0;
        c.probes.push(Probe { id: "a".into(), center: [0.0; 3], radius: 1e-3, split: ProbeSplit::Hemispheres });
        let PbsError::InvalidConfig(errs) = c.validate().unwrap_err() else { panic!() };
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        for f in ["t_end", "k_f", "dt", "stride", "probe[0].radius", "probe[0].split"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    proptest! {
        #[test]
        fn crossing_lands_on_correct_side(
            sx in -1.0f64..1.0, sy in -1.0f64..1.0, sz in -1.0f64..1.0,
            dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0,
            rs in 0.9f64..1.1,
        ) {
            let (g, m) = reference();
            let r = g.radius_m;
            let n = (sx * sx + sy * sy + sz * sz).sqrt().max(1e-9);
            let start = [sx / n * r * rs, sy / n * r * rs, sz / n * r * rs];
            let step = [dx * 3e-5, dy * 3e-5, dz * 3e-5];
            let proposed = [start[0] + step[0], start[1] + step[1], start[2] + step[2]];
            let out = handle_boundary_crossing(start, proposed, &g, &m);
            prop_assert!(out.iter().all(|c| c.is_finite()));
            if inside(start, r) == inside(proposed, r) && first_crossing(start, proposed, r).is_none() {
                prop_assert_eq!(out, proposed);
            }
            // displacement never grows by more than the exit factor
            let moved = norm([out[0] - start[0], out[1] - start[1], out[2] - start[2]]);
            prop_assert!(moved <= norm(step) * m.jump_k * (1.0 + 1e-12));
        }
    }
}
