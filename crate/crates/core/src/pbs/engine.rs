//! Ensemble driver.
//!
//! Walkers are simulated one at a time from release to `t_end`, each with
//! its own generator stream, and their probe hits and absorption times are
//! tallied as integer counts. Tallies from different workers are summed, so
//! the output does not depend on how walkers are split across threads.
//!
//! Far-field leap: a walker outside every probe and the spheroid at distance
//! `δ` from the nearest of them takes `k = ⌊(δ / 12σ)²⌋` steps as a single
//! Gaussian step of variance `2 D k Δt` per axis, `σ² = 2 D Δt`. Nothing
//! observable happens out there, and the chance that the skipped path
//! would have reached the interaction zone is below `1e-10` per leap.

use rayon::prelude::*;

use crate::signal::{Provenance, TimeGrid, TimeSeries, Unit};

use super::{
    dot, handle_boundary_crossing, inside, norm, particle_rng, step_particle, ParticleEnsemble, PbsError, ProbeSplit,
    SimConfig, Status, Vec3,
};

const BLOCK: usize = 1024;
const LEAP_SIGMAS: f64 = 12.0;

/// Concentration series of one probe (or one hemisphere of a split probe).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub id: String,
    pub series: TimeSeries,
    pub counts: Vec<u64>,
    /// Counting volume (m³).
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub probes: Vec<ProbeRecord>,
    pub absorption_rate: TimeSeries,
    pub absorbed_per_bin: Vec<u64>,
    pub ensemble: ParticleEnsemble,
    pub n_released: u64,
}

#[derive(Clone, Copy)]
enum Region {
    Whole,
    Inner,
    Outer,
}

struct Channel {
    id: String,
    center: Vec3,
    radius2: f64,
    axis: Vec3,
    region: Region,
    volume: f64,
}

impl Channel {
    fn contains(&self, p: Vec3) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        if dot(d, d) > self.radius2 {
            return false;
        }
        match self.region {
            Region::Whole => true,
            Region::Inner => dot(d, self.axis) < 0.0,
            Region::Outer => dot(d, self.axis) >= 0.0,
        }
    }
}

fn channels(cfg: &SimConfig) -> Vec<Channel> {
    let mut out = Vec::new();
    for p in &cfg.probes {
        let n = norm(p.center);
        let axis = if n > 0.0 { [p.center[0] / n, p.center[1] / n, p.center[2] / n] } else { [0.0; 3] };
        let base = |id: String, region, volume| Channel {
            id,
            center: p.center,
            radius2: p.radius * p.radius,
            axis,
            region,
            volume,
        };
        match p.split {
            ProbeSplit::Whole => out.push(base(p.id.clone(), Region::Whole, p.volume())),
            ProbeSplit::Hemispheres => {
                out.push(base(format!("{}_inner", p.id), Region::Inner, p.volume() / 2.0));
                out.push(base(format!("{}_outer", p.id), Region::Outer, p.volume() / 2.0));
            }
        }
    }
    out
}

struct Tally {
    counts: Vec<u64>,
    bins: Vec<u64>,
}

impl Tally {
    fn new(n_counts: usize, n_bins: usize) -> Self {
        Self {
            counts: vec![0; n_counts],
            bins: vec![0; n_bins],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        for (a, b) in self.bins.iter_mut().zip(other.bins) {
            *a += b;
        }
        self
    }
}

#[derive(Clone, Copy)]
struct Final {
    position: Vec3,
    status: Status,
    time: f64,
}

struct Plan<'a> {
    cfg: &'a SimConfig,
    channels: Vec<Channel>,
    n_steps: usize,
    n_samples: usize,
    n_bins: usize,
    interaction_radius: f64,
    start: Vec3,
}

impl Plan<'_> {
    fn walk(&self, index: u64, tally: &mut Tally) -> Final {
        let cfg = self.cfg;
        let (geom, medium) = (&cfg.geom, &cfg.medium);
        let radius = geom.radius_m;
        let p_abs = medium.k_f * cfg.dt;
        let sigma = (2.0 * medium.d_free * cfg.dt).sqrt();
        let mut rng = particle_rng(cfg.seed, index);
        let mut pos = self.start;
        let mut s = 0usize;
        while s < self.n_steps {
            if cfg.far_field_leap {
                let margin = norm(pos) - self.interaction_radius;
                if margin > 0.0 {
                    let k = ((margin / (LEAP_SIGMAS * sigma)).powi(2).floor() as usize).min(self.n_steps - s);
                    if k >= 2 {
                        pos = step_particle(pos, k as f64 * cfg.dt, medium.d_free, &mut rng);
                        s += k;
                        continue;
                    }
                }
            }
            let was_inside = inside(pos, radius);
            let local_d = if was_inside { medium.d_eff } else { medium.d_free };
            let proposed = step_particle(pos, cfg.dt, local_d, &mut rng);
            pos = handle_boundary_crossing(pos, proposed, geom, medium);
            s += 1;
            if p_abs > 0.0 && inside(pos, radius) && rand::Rng::random::<f64>(&mut rng) < p_abs {
                let t = (s as f64 - 0.5) * cfg.dt;
                let bin = ((t / cfg.bin_width) as usize).min(self.n_bins.saturating_sub(1));
                if self.n_bins > 0 {
                    tally.bins[bin] += 1;
                }
                return Final { position: pos, status: Status::Absorbed, time: t };
            }
            if s.is_multiple_of(cfg.stride) {
                let sample = s / cfg.stride - 1;
                if sample < self.n_samples {
                    for (c, ch) in self.channels.iter().enumerate() {
                        if ch.contains(pos) {
                            tally.counts[c * self.n_samples + sample] += 1;
                        }
                    }
                }
            }
        }
        Final { position: pos, status: Status::Alive, time: f64::NAN }
    }
}

/// Runs the ensemble on the current rayon pool.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimOutput, PbsError> {
    cfg.validate()?;
    let channels = channels(cfg);
    let n_steps = cfg.n_steps();
    let n_samples = n_steps / cfg.stride;
    let n_bins = if cfg.record_absorption { (cfg.t_end / cfg.bin_width - 1e-9).ceil().max(1.0) as usize } else { 0 };
    let interaction_radius = cfg
        .probes
        .iter()
        .map(|p| norm(p.center) + p.radius)
        .fold(cfg.geom.radius_m, f64::max);
    let plan = Plan {
        cfg,
        n_steps,
        n_samples,
        n_bins,
        interaction_radius,
        start: cfg.geom.tx_position.to_cartesian(),
        channels,
    };
    let n = cfg.n_particles as usize;
    let n_counts = plan.channels.len() * n_samples;
    let mut finals = vec![
        Final {
            position: plan.start,
            status: Status::Alive,
            time: f64::NAN
        };
        n
    ];
    let tally = finals
        .par_chunks_mut(BLOCK)
        .enumerate()
        .fold(
            || Tally::new(n_counts, n_bins),
            |mut tally, (b, chunk)| {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = plan.walk((b * BLOCK + k) as u64, &mut tally);
                }
                tally
            },
        )
        .reduce(|| Tally::new(n_counts, n_bins), Tally::merge);

    let released = cfg.n_particles;
    let probe_grid = TimeGrid {
        t0: cfg.stride as f64 * cfg.dt,
        dt: cfg.stride as f64 * cfg.dt,
        len: if n == 0 { 0 } else { n_samples },
    };
    let probes = plan
        .channels
        .iter()
        .enumerate()
        .map(|(c, ch)| {
            let counts: Vec<u64> = if n == 0 { Vec::new() } else { tally.counts[c * n_samples..(c + 1) * n_samples].to_vec() };
            let values = counts.iter().map(|&k| k as f64 / (ch.volume * released as f64)).collect();
            ProbeRecord {
                id: ch.id.clone(),
                series: TimeSeries::new(probe_grid, values, Unit::Concentration, Provenance::Pbs),
                counts,
                volume: ch.volume,
            }
        })
        .collect();
    let bins: Vec<u64> = if n == 0 { Vec::new() } else { tally.bins };
    let rate_grid = TimeGrid {
        t0: cfg.bin_width / 2.0,
        dt: cfg.bin_width,
        len: bins.len(),
    };
    let rate = bins.iter().map(|&k| k as f64 / (cfg.bin_width * released as f64)).collect();
    let ensemble = ParticleEnsemble {
        positions: finals.iter().map(|f| f.position).collect(),
        status: finals.iter().map(|f| f.status).collect(),
        absorption_time: finals.iter().map(|f| f.time).collect(),
        stream_ids: (0..released).collect(),
    };
    Ok(SimOutput {
        probes,
        absorption_rate: TimeSeries::new(rate_grid, rate, Unit::Rate, Provenance::Pbs),
        absorbed_per_bin: bins,
        ensemble,
        n_released: released,
    })
}

/// Runs the ensemble on a dedicated pool of `workers` threads.
pub fn run_simulation_with_workers(cfg: &SimConfig, workers: usize) -> Result<SimOutput, PbsError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PbsError::Workers(e.to_string()))?;
    pool.install(|| run_simulation(cfg))
}
