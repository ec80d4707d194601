//! Command-line front end: config ingestion, mode dispatch, artifact export.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::analytic::{
    cgf_time_many, interior_profile, received_signal_analytic, AnalyticError, FieldPoint,
};
use crate::model::{MediumModel, ModelError, SphericalPoint};
use crate::pbs::{run_simulation, PbsError, ProbeSplit};
use crate::signal::{
    compare_receivers, peak_metrics, received_total_e, threshold_activation, ReceiverComparison, SignalError,
    TimeGrid,
};

pub use config::{parse_config, parse_config_str, ConfigError, ConfigIssue, ExperimentConfig, Mode};
use output::{config_hash, file_stem, ArtifactWriter};

pub const THREADS_ENV: &str = "SPHEROID_MC_THREADS";

/// Radial nodes used for the interior profile behind the activation series.
const PROFILE_NODES: usize = 41;

/// Transmitter-to-porous-spheroid diffusion link: analytic series solution,
/// particle simulation and receiver metrics.
///
/// The config file is TOML; see the README for every key. All lengths in the
/// file are micrometres, all other quantities SI.
#[derive(Debug, Clone, Parser)]
#[command(name = "spheroid-mc", version)]
pub struct Args {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,

    /// What to run; overrides `mode` in the config file.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,

    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// PBS seed; overrides `pbs.seed`.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Print nothing on success.
    #[arg(long)]
    pub quiet: bool,

    /// Worker threads for the analytic and PBS engines (default: all cores).
    #[arg(long, env = THREADS_ENV, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Pbs(#[from] PbsError),
    #[error("{context}: {source}")]
    Signal { context: String, source: SignalError },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    fn signal(context: impl Into<String>) -> impl FnOnce(SignalError) -> CliError {
        let context = context.into();
        move |source| CliError::Signal { context, source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Model(_) => "model",
            CliError::Analytic(_) => "analytic",
            CliError::Pbs(_) => "pbs",
            CliError::Signal { .. } => "signal",
            CliError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Io { .. } => 4,
            _ => 3,
        }
    }

    /// Machine-readable form written to stderr and `error.json`.
    pub fn record(&self) -> serde_json::Value {
        let mut rec = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::Config(c) = self {
            rec["issues"] = serde_json::to_value(&c.issues).expect("issues serialize");
        }
        if let CliError::Pbs(PbsError::InvalidConfig(fields)) = self {
            rec["issues"] = fields
                .iter()
                .map(|f| json!({"path": f.field, "message": f.message}))
                .collect();
        }
        rec
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub mode: Mode,
    pub config_hash: String,
    pub resolved_config: String,
    pub summary: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

/// Parses, validates and runs one experiment, writing every artifact into
/// `args.out`.
pub fn run(args: &Args) -> Result<RunReport, CliError> {
    let source = args.config.display().to_string();
    let mut cfg = parse_config(&args.config)?;
    let mode = args.mode.or(cfg.mode).ok_or_else(|| {
        CliError::Usage("no mode given: pass --mode or set `mode` in the config file".into())
    })?;
    cfg.mode = Some(mode);
    if let (Some(seed), Some(pbs)) = (args.seed, cfg.pbs.as_mut()) {
        pbs.seed = seed;
    }
    cfg.check_mode(mode, &source)?;
    match args.threads {
        None => execute(&cfg, mode, &args.out),
        Some(0) => Err(CliError::Usage(format!("--threads / {THREADS_ENV} must be at least 1"))),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?
            .install(|| execute(&cfg, mode, &args.out)),
    }
}

fn uses_pbs(cfg: &ExperimentConfig, mode: Mode) -> bool {
    matches!(mode, Mode::Pbs) || (mode == Mode::Compare && cfg.pbs.is_some())
}

fn execute(cfg: &ExperimentConfig, mode: Mode, out: &Path) -> Result<RunReport, CliError> {
    let resolved = cfg.to_toml();
    let hash = config_hash(&resolved);
    let seed = if uses_pbs(cfg, mode) { cfg.pbs.map(|p| p.seed) } else { None };
    let mut w = ArtifactWriter::create(out, mode.name(), hash.clone(), seed)?;
    w.write("resolved_config.toml", &resolved)?;
    let medium = cfg.medium()?;
    let mut summary = vec![format!(
        "porosity ε = {:.5}, tortuosity τ = {:.4}, D_eff = {:.4e} m²/s, jump k = {:.4}",
        medium.porosity, medium.tortuosity, medium.d_eff, medium.jump_k
    )];
    match mode {
        Mode::Model => run_model(cfg, &medium, &mut w)?,
        Mode::Sweep => run_sweep(cfg, &mut w, &mut summary)?,
        Mode::Analytic => run_analytic(cfg, &medium, &mut w, &mut summary)?,
        Mode::Pbs => run_pbs(cfg, &mut w, &mut summary)?,
        Mode::Compare => run_compare(cfg, &medium, &mut w, &mut summary)?,
    }
    Ok(RunReport {
        mode,
        config_hash: hash,
        resolved_config: resolved,
        summary,
        artifacts: w.written,
    })
}

fn run_model(cfg: &ExperimentConfig, medium: &MediumModel, w: &mut ArtifactWriter) -> Result<(), CliError> {
    let g = &cfg.geometry;
    w.json(
        "model.json",
        &json!({
            "radius_m": g.radius_m,
            "n_cells": g.n_cells,
            "cell_volume_m3": g.cell_volume_m3,
            "spheroid_volume_m3": g.volume(),
            "porosity": medium.porosity,
            "tortuosity": medium.tortuosity,
            "d_free_m2_s": medium.d_free,
            "d_eff_m2_s": medium.d_eff,
            "jump_k": medium.jump_k,
            "k_f_s": medium.k_f,
        }),
    )?;
    Ok(())
}

fn sweep_counts(lo: u64, hi: u64, n: usize) -> Vec<u64> {
    (0..n)
        .map(|i| lo + ((hi - lo) as f64 * i as f64 / (n - 1) as f64).round() as u64)
        .collect()
}

fn run_sweep(cfg: &ExperimentConfig, w: &mut ArtifactWriter, summary: &mut Vec<String>) -> Result<(), CliError> {
    let s = cfg.sweep.expect("checked by check_mode");
    let mut rows = Vec::with_capacity(s.n_points);
    for n in sweep_counts(s.n_cells_min, s.n_cells_max, s.n_points) {
        let m = MediumModel::from_geometry(cfg.d_free, &cfg.geometry.with_cells(n), cfg.k_f)?;
        rows.push(vec![
            n.to_string(),
            format!("{:e}", m.porosity),
            format!("{:e}", m.tortuosity),
            format!("{:e}", m.d_eff),
            format!("{:e}", m.jump_k),
        ]);
    }
    summary.push(format!(
        "sweep N_c ∈ [{}, {}]: ε {} → {}, k {} → {}",
        s.n_cells_min,
        s.n_cells_max,
        rows[0][1],
        rows[rows.len() - 1][1],
        rows[0][4],
        rows[rows.len() - 1][4]
    ));
    w.table(
        "sweep.csv",
        "porosity and jump constant versus cell count",
        &["n_cells", "porosity", "tortuosity", "d_eff_m2_s", "jump_k"],
        &rows,
    )?;
    Ok(())
}

/// Field points for the analytic probes; a hemisphere probe becomes its two
/// one-sided limits at the probe center.
fn analytic_points(cfg: &ExperimentConfig) -> Vec<(String, SphericalPoint)> {
    let mut out = Vec::new();
    for p in &cfg.probes {
        match p.split {
            ProbeSplit::Whole => out.push((p.id.clone(), p.point)),
            ProbeSplit::Hemispheres => {
                let at = |f: f64| SphericalPoint::new(p.point.r * f, p.point.theta, p.point.phi);
                out.push((format!("{}_inner", p.id), at(1.0 - 1e-9)));
                out.push((format!("{}_outer", p.id), at(1.0 + 1e-9)));
            }
        }
    }
    out
}

fn analytic_grid(cfg: &ExperimentConfig) -> Result<TimeGrid, CliError> {
    let t = cfg.time.expect("checked by check_mode");
    TimeGrid::until(t.sample_dt, t.t_end).map_err(CliError::signal("time grid"))
}

fn run_analytic(
    cfg: &ExperimentConfig,
    medium: &MediumModel,
    w: &mut ArtifactWriter,
    summary: &mut Vec<String>,
) -> Result<(), CliError> {
    let times = analytic_grid(cfg)?;
    let named = analytic_points(cfg);
    let points = named
        .iter()
        .map(|(_, p)| FieldPoint::from_spherical(*p, &cfg.geometry))
        .collect::<Result<Vec<_>, _>>()?;
    let series = cgf_time_many(&points, &times, &cfg.geometry, medium, &cfg.analytic.fgrid, &cfg.analytic.truncation)?;
    for ((id, _), s) in named.iter().zip(&series) {
        w.series(&format!("cgf_{}.csv", file_stem(id)), id, s)?;
        match peak_metrics(s) {
            Ok(m) => summary.push(format!("{id}: peak {:.4e} m^-3 at {:.2} s", m.peak_value, m.peak_time)),
            Err(e) => summary.push(format!("{id}: {e}")),
        }
    }
    Ok(())
}

fn run_pbs(cfg: &ExperimentConfig, w: &mut ArtifactWriter, summary: &mut Vec<String>) -> Result<(), CliError> {
    let sim = cfg.sim_config(cfg.k_f).expect("checked by check_mode");
    let out = run_simulation(&sim)?;
    for p in &out.probes {
        w.series(&format!("pbs_{}.csv", file_stem(&p.id)), &p.id, &p.series)?;
        summary.push(format!("{}: {} particle-samples counted", p.id, p.counts.iter().sum::<u64>()));
    }
    w.series("pbs_absorption_rate.csv", "receiver", &out.absorption_rate)?;
    let absorbed: u64 = out.absorbed_per_bin.iter().sum();
    summary.push(format!(
        "absorbed {absorbed} of {} released ({:.4})",
        out.n_released,
        absorbed as f64 / out.n_released.max(1) as f64
    ));
    Ok(())
}

#[derive(Serialize)]
struct CompareMetrics {
    analytic: ReceiverComparison,
    pbs: Option<ReceiverComparison>,
}

fn run_compare(
    cfg: &ExperimentConfig,
    medium: &MediumModel,
    w: &mut ArtifactWriter,
    summary: &mut Vec<String>,
) -> Result<(), CliError> {
    let times = analytic_grid(cfg)?;
    let fgrid = &cfg.analytic.fgrid;
    let open = cfg.geometry.with_cells(0);
    let transparent = MediumModel::transparent(cfg.d_free, cfg.k_f)?;
    let s_rate = received_signal_analytic(&times, &cfg.geometry, medium, fgrid)?;
    let t_rate = received_signal_analytic(&times, &open, &transparent, fgrid)?;
    w.series("rate_spheroid_analytic.csv", "spheroid", &s_rate)?;
    w.series("rate_transparent_analytic.csv", "transparent", &t_rate)?;

    if let (Some(threshold), true) = (cfg.analytic.activation_threshold, cfg.k_f > 0.0) {
        let r_s = cfg.geometry.radius_m;
        let radii: Vec<f64> = (0..PROFILE_NODES)
            .map(|i| r_s * i as f64 / (PROFILE_NODES - 1) as f64)
            .collect();
        let products = interior_profile(&radii, &times, &cfg.geometry, medium, fgrid)?.integrate_sink(cfg.k_f);
        let total = received_total_e(&products, &cfg.geometry).map_err(CliError::signal("received products"))?;
        let active = threshold_activation(&products, threshold, &cfg.geometry).map_err(CliError::signal("activation"))?;
        w.series("received_products_analytic.csv", "spheroid", &total)?;
        w.series("activation_analytic.csv", "spheroid", &active)?;
        if let Some(last) = active.values.last() {
            summary.push(format!("activated fraction at t_end: {last:.4}"));
        }
    }

    let pbs_rates = match cfg.sim_config(cfg.k_f) {
        Some(mut sim) => {
            sim.probes.clear();
            let s = run_simulation(&sim)?.absorption_rate;
            sim.geom = open;
            sim.medium = transparent;
            let t = run_simulation(&sim)?.absorption_rate;
            w.series("rate_spheroid_pbs.csv", "spheroid", &s)?;
            w.series("rate_transparent_pbs.csv", "transparent", &t)?;
            Some((s, t))
        }
        None => None,
    };

    let analytic = compare_receivers(&s_rate, &t_rate).map_err(CliError::signal("analytic receiver comparison"))?;
    let pbs = pbs_rates
        .map(|(s, t)| compare_receivers(&s, &t))
        .transpose()
        .map_err(CliError::signal("pbs receiver comparison"))?;
    for (name, c) in [("analytic", Some(&analytic)), ("pbs", pbs.as_ref())] {
        if let Some(c) = c {
            summary.push(format!(
                "{name}: amplification {:.4}, peak delay {:.2} s, width ratio {:.4}",
                c.amplification, c.peak_delay, c.width_ratio
            ));
        }
    }
    w.json("compare_metrics.json", &CompareMetrics { analytic, pbs })?;
    Ok(())
}

/// Best-effort `error.json` next to the other artifacts.
pub fn write_error_record(out: &Path, err: &CliError) {
    if std::fs::create_dir_all(out).is_ok() {
        let mut text = serde_json::to_string_pretty(&err.record()).expect("error record serializes");
        text.push('\n');
        let _ = std::fs::write(out.join("error.json"), text);
    }
}
