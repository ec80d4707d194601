//! Experiment configuration file.
//!
//! TOML with fixed sections; every key is checked, unknown keys are errors.
//! Lengths in the file are in micrometres (`*_um`), everything else SI.
//!
//! ```toml
//! mode = "compare"              # optional, overridden by --mode
//!
//! [geometry]
//! radius_um = 275.0             # required
//! n_cells = 24000               # required
//! cell_volume_m3 = 3.14e-15     # required
//! tx_r_um = 500.0               # required
//! tx_theta = 1.5707963267948966 # rad, default π/2
//! tx_phi = 0.0                  # rad, default 0
//!
//! [medium]
//! d_free = 1e-9                 # m²/s, default 1e-9
//! k_f = 0.01                    # 1/s, required
//!
//! [analytic]                    # all optional
//! omega_max = 12.566370614359172
//! n_samples = 16384
//! truncation_tol = 1e-8
//! max_modes = 200
//! alias_fraction = 1e-6
//! damping = 18.0                # σT of the shifted inversion line
//! activation_threshold = 1e8    # m⁻³; enables the activation series
//!
//! [time]                        # analytic, pbs and compare modes
//! t_end = 400.0                 # required
//! sample_dt = 1.0
//!
//! [pbs]                         # pbs mode; compare adds PBS curves if present
//! n_particles = 1000000         # required
//! dt = 0.05
//! seed = 0
//! stride = 20
//! bin_width = 5.0
//! far_field_leap = true
//!
//! [[probe]]                     # analytic and pbs modes
//! id = "boundary"
//! r_um = 275.0
//! theta = 1.5707963267948966
//! phi = 0.0
//! radius_um = 10.0
//! split = "hemisphere"          # or "none"
//!
//! [sweep]                       # sweep mode
//! n_cells_min = 15000
//! n_cells_max = 25000
//! n_points = 11
//! ```

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::Path;

use serde::Serialize;
use toml::{Table, Value};

use crate::analytic::{FrequencyGrid, TruncationPolicy};
use crate::model::{MediumModel, SphericalPoint, SpheroidGeometry, DEFAULT_D_FREE};
use crate::pbs::{Probe, ProbeSplit, SimConfig};

const UM_PER_M: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Model,
    Analytic,
    Pbs,
    Compare,
    Sweep,
}

impl Mode {
    fn parse(s: &str) -> Option<Mode> {
        match s {
            "model" => Some(Mode::Model),
            "analytic" => Some(Mode::Analytic),
            "pbs" => Some(Mode::Pbs),
            "compare" => Some(Mode::Compare),
            "sweep" => Some(Mode::Sweep),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Model => "model",
            Mode::Analytic => "analytic",
            Mode::Pbs => "pbs",
            Mode::Compare => "compare",
            Mode::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigError {
    pub source: String,
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.source)?;
        let parts: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticSettings {
    pub fgrid: FrequencyGrid,
    pub truncation: TruncationPolicy,
    pub activation_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSettings {
    pub t_end: f64,
    pub sample_dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PbsSettings {
    pub n_particles: u64,
    pub dt: f64,
    pub seed: u64,
    pub stride: usize,
    pub bin_width: f64,
    pub far_field_leap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    pub id: String,
    pub point: SphericalPoint,
    pub radius_m: f64,
    pub split: ProbeSplit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub n_cells_min: u64,
    pub n_cells_max: u64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub geometry: SpheroidGeometry,
    pub d_free: f64,
    pub k_f: f64,
    pub analytic: AnalyticSettings,
    pub time: Option<TimeSettings>,
    pub pbs: Option<PbsSettings>,
    pub probes: Vec<ProbeSpec>,
    pub sweep: Option<SweepSettings>,
}

struct Reader<'s> {
    source: &'s str,
    issues: Vec<ConfigIssue>,
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

impl Reader<'_> {
    fn issue(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }

    fn check_keys(&mut self, table: &Table, prefix: &str, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                self.issue(join(prefix, key), format!("unknown key (expected one of: {})", allowed.join(", ")));
            }
        }
    }

    fn get<'t>(&mut self, table: Option<&'t Table>, prefix: &str, key: &str, required: bool) -> Option<&'t Value> {
        let v = table.and_then(|t| t.get(key));
        if v.is_none() && required {
            self.issue(join(prefix, key), "missing required key");
        }
        v
    }

    fn float(&mut self, table: Option<&Table>, prefix: &str, key: &str, default: Option<f64>) -> Option<f64> {
        match self.get(table, prefix, key, default.is_none()) {
            None => default,
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(other) => {
                let t = type_name(other);
                self.issue(join(prefix, key), format!("expected a number, found {t}"));
                None
            }
        }
    }

    fn int(&mut self, table: Option<&Table>, prefix: &str, key: &str, default: Option<u64>) -> Option<u64> {
        match self.get(table, prefix, key, default.is_none()) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(Value::Integer(i)) => {
                self.issue(join(prefix, key), format!("must be non-negative, got {i}"));
                None
            }
            Some(other) => {
                let t = type_name(other);
                self.issue(join(prefix, key), format!("expected a non-negative integer, found {t}"));
                None
            }
        }
    }

    fn boolean(&mut self, table: Option<&Table>, prefix: &str, key: &str, default: bool) -> bool {
        match self.get(table, prefix, key, false) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(other) => {
                let t = type_name(other);
                self.issue(join(prefix, key), format!("expected a boolean, found {t}"));
                default
            }
        }
    }

    fn string(&mut self, table: Option<&Table>, prefix: &str, key: &str, default: Option<&str>) -> Option<String> {
        match self.get(table, prefix, key, default.is_none()) {
            None => default.map(str::to_string),
            Some(Value::String(s)) => Some(s.clone()),
            Some(other) => {
                let t = type_name(other);
                self.issue(join(prefix, key), format!("expected a string, found {t}"));
                None
            }
        }
    }

    fn section<'t>(&mut self, root: &'t Table, name: &str, allowed: &[&str]) -> Option<&'t Table> {
        match root.get(name) {
            None => None,
            Some(Value::Table(t)) => {
                self.check_keys(t, name, allowed);
                Some(t)
            }
            Some(other) => {
                let t = type_name(other);
                self.issue(name, format!("expected a table, found {t}"));
                None
            }
        }
    }

    fn positive(&mut self, path: &str, v: Option<f64>) -> Option<f64> {
        match v {
            Some(x) if x > 0.0 && x.is_finite() => Some(x),
            Some(x) => {
                self.issue(path, format!("must be positive and finite, got {x}"));
                None
            }
            None => None,
        }
    }

    fn non_negative(&mut self, path: &str, v: Option<f64>) -> Option<f64> {
        match v {
            Some(x) if x >= 0.0 && x.is_finite() => Some(x),
            Some(x) => {
                self.issue(path, format!("must be non-negative and finite, got {x}"));
                None
            }
            None => None,
        }
    }

    fn finish<T>(self, value: Option<T>) -> Result<T, ConfigError> {
        match value {
            Some(v) if self.issues.is_empty() => Ok(v),
            _ => Err(ConfigError {
                source: self.source.to_string(),
                issues: self.issues,
            }),
        }
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

const ROOT_KEYS: &[&str] = &["mode", "geometry", "medium", "analytic", "time", "pbs", "probe", "sweep"];
const GEOMETRY_KEYS: &[&str] = &["radius_um", "n_cells", "cell_volume_m3", "tx_r_um", "tx_theta", "tx_phi"];
const MEDIUM_KEYS: &[&str] = &["d_free", "k_f"];
const ANALYTIC_KEYS: &[&str] = &[
    "omega_max",
    "n_samples",
    "truncation_tol",
    "max_modes",
    "alias_fraction",
    "damping",
    "activation_threshold",
];
const TIME_KEYS: &[&str] = &["t_end", "sample_dt"];
const PBS_KEYS: &[&str] = &["n_particles", "dt", "seed", "stride", "bin_width", "far_field_leap"];
const PROBE_KEYS: &[&str] = &["id", "r_um", "theta", "phi", "radius_um", "split"];
const SWEEP_KEYS: &[&str] = &["n_cells_min", "n_cells_max", "n_points"];

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let source = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        source: source.clone(),
        issues: vec![ConfigIssue {
            path: String::new(),
            message: format!("cannot read file: {e}"),
        }],
    })?;
    parse_config_str(&text, &source)
}

pub fn parse_config_str(text: &str, source: &str) -> Result<ExperimentConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        source: source.to_string(),
        issues: vec![ConfigIssue {
            path: String::new(),
            message: format!("malformed TOML: {}", e.message()),
        }],
    })?;
    let mut rd = Reader { source, issues: Vec::new() };
    rd.check_keys(&root, "", ROOT_KEYS);

    let mode = match rd.string(Some(&root), "", "mode", Some("")) {
        Some(s) if s.is_empty() => None,
        Some(s) => {
            let m = Mode::parse(&s);
            if m.is_none() {
                rd.issue("mode", format!("unknown mode {s:?} (model, analytic, pbs, compare, sweep)"));
            }
            m
        }
        None => None,
    };

    let g = rd.section(&root, "geometry", GEOMETRY_KEYS);
    let radius = rd.float(g, "geometry", "radius_um", None);
    let radius = rd.positive("geometry.radius_um", radius).map(|x| x / UM_PER_M);
    let n_cells = rd.int(g, "geometry", "n_cells", None);
    let cell_volume = rd.float(g, "geometry", "cell_volume_m3", None);
    let cell_volume = rd.non_negative("geometry.cell_volume_m3", cell_volume);
    let tx_r = rd.float(g, "geometry", "tx_r_um", None);
    let tx_r = rd.positive("geometry.tx_r_um", tx_r).map(|x| x / UM_PER_M);
    let tx_theta = rd.float(g, "geometry", "tx_theta", Some(FRAC_PI_2));
    let tx_phi = rd.float(g, "geometry", "tx_phi", Some(0.0));
    if let Some(t) = tx_theta {
        if !(0.0..=PI).contains(&t) {
            rd.issue("geometry.tx_theta", format!("polar angle must lie in [0, π], got {t}"));
        }
    }

    let m = rd.section(&root, "medium", MEDIUM_KEYS);
    let d_free = rd.float(m, "medium", "d_free", Some(DEFAULT_D_FREE));
    let d_free = rd.positive("medium.d_free", d_free);
    let k_f = rd.float(m, "medium", "k_f", None);
    let k_f = rd.non_negative("medium.k_f", k_f);

    let geometry = match (radius, n_cells, cell_volume, tx_r, tx_theta, tx_phi) {
        (Some(r), Some(n), Some(v), Some(tr), Some(th), Some(ph)) => {
            match SpheroidGeometry::new(r, n, v, SphericalPoint::new(tr, th, ph)) {
                Ok(g) => Some(g),
                Err(e) => {
                    let path = match e {
                        crate::model::ModelError::CellMatrixExceedsSpheroid { .. } => {
                            "geometry.n_cells × geometry.cell_volume_m3 (porosity constraint N_c·V_c ≤ V_s)"
                        }
                        crate::model::ModelError::TransmitterInsideSpheroid { .. } => "geometry.tx_r_um",
                        _ => "geometry",
                    };
                    rd.issue(path, e.to_string());
                    None
                }
            }
        }
        _ => None,
    };

    let a = rd.section(&root, "analytic", ANALYTIC_KEYS);
    let defaults = FrequencyGrid::default();
    let omega_max = rd.float(a, "analytic", "omega_max", Some(defaults.omega_max));
    let omega_max = rd.positive("analytic.omega_max", omega_max);
    let n_samples = rd.int(a, "analytic", "n_samples", Some(defaults.n_samples as u64));
    let alias = rd.float(a, "analytic", "alias_fraction", Some(defaults.alias_fraction));
    let alias = rd.positive("analytic.alias_fraction", alias);
    let damping = rd.float(a, "analytic", "damping", Some(defaults.damping));
    let tpol = TruncationPolicy::default();
    let tol = rd.float(a, "analytic", "truncation_tol", Some(tpol.tol));
    let tol = rd.positive("analytic.truncation_tol", tol);
    let max_modes = rd.int(a, "analytic", "max_modes", Some(tpol.max_modes as u64));
    let threshold = match a.and_then(|t| t.get("activation_threshold")) {
        None => None,
        Some(_) => {
            let v = rd.float(a, "analytic", "activation_threshold", None);
            rd.non_negative("analytic.activation_threshold", v)
        }
    };
    let fgrid = match (omega_max, n_samples, alias, damping) {
        (Some(w), Some(n), Some(al), Some(dmp)) => match FrequencyGrid::new(w, n as usize)
            .and_then(|g| g.with_alias_fraction(al))
            .and_then(|g| g.with_damping(dmp))
        {
            Ok(g) => Some(g),
            Err(e) => {
                rd.issue("analytic", e.to_string());
                None
            }
        },
        _ => None,
    };
    if max_modes == Some(0) {
        rd.issue("analytic.max_modes", "must be at least 1");
    }
    let analytic = match (fgrid, tol, max_modes) {
        (Some(fgrid), Some(tol), Some(mm)) => Some(AnalyticSettings {
            fgrid,
            truncation: TruncationPolicy {
                tol,
                max_modes: mm as usize,
                ..TruncationPolicy::default()
            },
            activation_threshold: threshold,
        }),
        _ => None,
    };

    let time = match rd.section(&root, "time", TIME_KEYS) {
        None => None,
        Some(t) => {
            let t_end = rd.float(Some(t), "time", "t_end", None);
            let t_end = rd.positive("time.t_end", t_end);
            let sample_dt = rd.float(Some(t), "time", "sample_dt", Some(1.0));
            let sample_dt = rd.positive("time.sample_dt", sample_dt);
            match (t_end, sample_dt) {
                (Some(t_end), Some(sample_dt)) if sample_dt <= t_end => Some(TimeSettings { t_end, sample_dt }),
                (Some(_), Some(_)) => {
                    rd.issue("time.sample_dt", "must not exceed time.t_end");
                    None
                }
                _ => None,
            }
        }
    };

    let pbs = match rd.section(&root, "pbs", PBS_KEYS) {
        None => None,
        Some(t) => {
            let n_particles = rd.int(Some(t), "pbs", "n_particles", None);
            let dt = rd.float(Some(t), "pbs", "dt", Some(0.05));
            let dt = rd.positive("pbs.dt", dt);
            let seed = rd.int(Some(t), "pbs", "seed", Some(0));
            let stride = rd.int(Some(t), "pbs", "stride", Some(1));
            if stride == Some(0) {
                rd.issue("pbs.stride", "must be at least 1");
            }
            let bin_width = rd.float(Some(t), "pbs", "bin_width", dt);
            let bin_width = rd.positive("pbs.bin_width", bin_width);
            let far_field_leap = rd.boolean(Some(t), "pbs", "far_field_leap", true);
            match (n_particles, dt, seed, stride, bin_width) {
                (Some(n_particles), Some(dt), Some(seed), Some(stride), Some(bin_width)) if stride > 0 => {
                    Some(PbsSettings {
                        n_particles,
                        dt,
                        seed,
                        stride: stride as usize,
                        bin_width,
                        far_field_leap,
                    })
                }
                _ => None,
            }
        }
    };

    let mut probes = Vec::new();
    match root.get("probe") {
        None => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                let prefix = format!("probe[{i}]");
                let Value::Table(t) = item else {
                    rd.issue(&prefix, "expected a table");
                    continue;
                };
                rd.check_keys(t, &prefix, PROBE_KEYS);
                let id = rd.string(Some(t), &prefix, "id", None);
                let r = rd.float(Some(t), &prefix, "r_um", None);
                let r = rd.non_negative(&join(&prefix, "r_um"), r).map(|x| x / UM_PER_M);
                let theta = rd.float(Some(t), &prefix, "theta", Some(0.0));
                let phi = rd.float(Some(t), &prefix, "phi", Some(0.0));
                let radius = rd.float(Some(t), &prefix, "radius_um", Some(10.0));
                let radius = rd.positive(&join(&prefix, "radius_um"), radius).map(|x| x / UM_PER_M);
                let split = match rd.string(Some(t), &prefix, "split", Some("none")).as_deref() {
                    Some("none") => Some(ProbeSplit::Whole),
                    Some("hemisphere") => Some(ProbeSplit::Hemispheres),
                    Some(other) => {
                        rd.issue(join(&prefix, "split"), format!("expected \"none\" or \"hemisphere\", got {other:?}"));
                        None
                    }
                    None => None,
                };
                if let Some(id) = &id {
                    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                        rd.issue(join(&prefix, "id"), "must be non-empty and use only letters, digits, '_' or '-'");
                    } else if probes.iter().any(|p: &ProbeSpec| &p.id == id) {
                        rd.issue(join(&prefix, "id"), format!("duplicate probe id {id:?}"));
                    }
                }
                if let (Some(id), Some(r), Some(theta), Some(phi), Some(radius_m), Some(split)) =
                    (id, r, theta, phi, radius, split)
                {
                    probes.push(ProbeSpec {
                        id,
                        point: SphericalPoint::new(r, theta, phi),
                        radius_m,
                        split,
                    });
                }
            }
        }
        Some(other) => {
            let t = type_name(other);
            rd.issue("probe", format!("expected an array of tables ([[probe]]), found {t}"));
        }
    }

    let sweep = match rd.section(&root, "sweep", SWEEP_KEYS) {
        None => None,
        Some(t) => {
            let lo = rd.int(Some(t), "sweep", "n_cells_min", None);
            let hi = rd.int(Some(t), "sweep", "n_cells_max", None);
            let n = rd.int(Some(t), "sweep", "n_points", Some(11));
            match (lo, hi, n) {
                (Some(lo), Some(hi), Some(n)) if lo <= hi && n >= 2 => Some(SweepSettings {
                    n_cells_min: lo,
                    n_cells_max: hi,
                    n_points: n as usize,
                }),
                (Some(_), Some(_), Some(n)) if n < 2 => {
                    rd.issue("sweep.n_points", "must be at least 2");
                    None
                }
                (Some(_), Some(_), Some(_)) => {
                    rd.issue("sweep.n_cells_max", "must not be below sweep.n_cells_min");
                    None
                }
                _ => None,
            }
        }
    };

    let cfg = match (geometry, d_free, k_f, analytic) {
        (Some(geometry), Some(d_free), Some(k_f), Some(analytic)) => Some(ExperimentConfig {
            mode,
            geometry,
            d_free,
            k_f,
            analytic,
            time,
            pbs,
            probes,
            sweep,
        }),
        _ => None,
    };
    if let Some(c) = &cfg {
        if let Err(e) = c.medium() {
            rd.issue("medium", e.to_string());
        }
    }
    rd.finish(cfg)
}

impl ExperimentConfig {
    pub fn medium(&self) -> Result<MediumModel, crate::model::ModelError> {
        MediumModel::from_geometry(self.d_free, &self.geometry, self.k_f)
    }

    /// Checks that the sections needed by `mode` are present and usable.
    pub fn check_mode(&self, mode: Mode, source: &str) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut need = |ok: bool, path: &str, message: &str| {
            if !ok {
                issues.push(ConfigIssue {
                    path: path.to_string(),
                    message: message.to_string(),
                });
            }
        };
        match mode {
            Mode::Model => {}
            Mode::Analytic => {
                need(self.time.is_some(), "time", "section required for mode analytic");
                need(!self.probes.is_empty(), "probe", "at least one [[probe]] required for mode analytic");
            }
            Mode::Pbs => {
                need(self.time.is_some(), "time", "section required for mode pbs");
                need(self.pbs.is_some(), "pbs", "section required for mode pbs");
            }
            Mode::Compare => {
                need(self.time.is_some(), "time", "section required for mode compare");
            }
            Mode::Sweep => {
                need(self.sweep.is_some(), "sweep", "section required for mode sweep");
            }
        }
        if let (Mode::Analytic | Mode::Compare, Some(t)) = (mode, self.time) {
            let limit = self.analytic.fgrid.period() / 4.0;
            need(
                t.t_end <= limit,
                "time.t_end",
                &format!("exceeds a quarter of the inversion period ({limit:.4e} s); raise analytic.n_samples or lower omega_max"),
            );
        }
        if matches!(mode, Mode::Pbs | Mode::Compare) && self.time.is_some() {
            if let Some(sim) = self.sim_config(self.k_f) {
                if let Err(crate::pbs::PbsError::InvalidConfig(errs)) = sim.validate() {
                    for e in errs {
                        let path = match e.field.as_str() {
                            "t_end" => "time.t_end".to_string(),
                            "k_f" => "medium.k_f".to_string(),
                            "geometry" => "geometry".to_string(),
                            f if f.starts_with("probe[") => f.replace(".radius", ".radius_um").replace(".center", ""),
                            f => format!("pbs.{f}"),
                        };
                        issues.push(ConfigIssue { path, message: e.message });
                    }
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError {
                source: source.to_string(),
                issues,
            })
        }
    }

    pub fn pbs_probes(&self) -> Vec<Probe> {
        self.probes
            .iter()
            .map(|p| Probe {
                id: p.id.clone(),
                center: p.point.to_cartesian(),
                radius: p.radius_m,
                split: p.split,
            })
            .collect()
    }

    /// PBS settings for the spheroid geometry with uptake `k_f`.
    pub fn sim_config(&self, k_f: f64) -> Option<SimConfig> {
        let (pbs, time) = (self.pbs?, self.time?);
        let medium = MediumModel::from_geometry(self.d_free, &self.geometry, k_f).ok()?;
        Some(SimConfig {
            dt: pbs.dt,
            n_particles: pbs.n_particles,
            seed: pbs.seed,
            t_end: time.t_end,
            geom: self.geometry,
            medium,
            probes: self.pbs_probes(),
            record_absorption: true,
            stride: pbs.stride,
            bin_width: pbs.bin_width,
            far_field_leap: pbs.far_field_leap,
        })
    }

    /// The configuration with every default filled in, as TOML.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        if let Some(m) = self.mode {
            root.insert("mode".into(), m.name().into());
        }
        let g = &self.geometry;
        let mut geometry = Table::new();
        geometry.insert("radius_um".into(), (g.radius_m * UM_PER_M).into());
        geometry.insert("n_cells".into(), Value::Integer(g.n_cells as i64));
        geometry.insert("cell_volume_m3".into(), g.cell_volume_m3.into());
        geometry.insert("tx_r_um".into(), (g.tx_position.r * UM_PER_M).into());
        geometry.insert("tx_theta".into(), g.tx_position.theta.into());
        geometry.insert("tx_phi".into(), g.tx_position.phi.into());
        root.insert("geometry".into(), geometry.into());
        let mut medium = Table::new();
        medium.insert("d_free".into(), self.d_free.into());
        medium.insert("k_f".into(), self.k_f.into());
        root.insert("medium".into(), medium.into());
        let a = &self.analytic;
        let mut analytic = Table::new();
        analytic.insert("omega_max".into(), a.fgrid.omega_max.into());
        analytic.insert("n_samples".into(), Value::Integer(a.fgrid.n_samples as i64));
        analytic.insert("alias_fraction".into(), a.fgrid.alias_fraction.into());
        analytic.insert("damping".into(), a.fgrid.damping.into());
        analytic.insert("truncation_tol".into(), a.truncation.tol.into());
        analytic.insert("max_modes".into(), Value::Integer(a.truncation.max_modes as i64));
        if let Some(t) = a.activation_threshold {
            analytic.insert("activation_threshold".into(), t.into());
        }
        root.insert("analytic".into(), analytic.into());
        if let Some(t) = self.time {
            let mut time = Table::new();
            time.insert("t_end".into(), t.t_end.into());
            time.insert("sample_dt".into(), t.sample_dt.into());
            root.insert("time".into(), time.into());
        }
        if let Some(p) = self.pbs {
            let mut pbs = Table::new();
            pbs.insert("n_particles".into(), Value::Integer(p.n_particles as i64));
            pbs.insert("dt".into(), p.dt.into());
            pbs.insert("seed".into(), Value::Integer(p.seed as i64));
            pbs.insert("stride".into(), Value::Integer(p.stride as i64));
            pbs.insert("bin_width".into(), p.bin_width.into());
            pbs.insert("far_field_leap".into(), p.far_field_leap.into());
            root.insert("pbs".into(), pbs.into());
        }
        if !self.probes.is_empty() {
            let items = self
                .probes
                .iter()
                .map(|p| {
                    let mut t = Table::new();
                    t.insert("id".into(), p.id.clone().into());
                    t.insert("r_um".into(), (p.point.r * UM_PER_M).into());
                    t.insert("theta".into(), p.point.theta.into());
                    t.insert("phi".into(), p.point.phi.into());
                    t.insert("radius_um".into(), (p.radius_m * UM_PER_M).into());
                    let split = match p.split {
                        ProbeSplit::Whole => "none",
                        ProbeSplit::Hemispheres => "hemisphere",
                    };
                    t.insert("split".into(), split.into());
                    Value::Table(t)
                })
                .collect();
            root.insert("probe".into(), Value::Array(items));
        }
        if let Some(s) = self.sweep {
            let mut sweep = Table::new();
            sweep.insert("n_cells_min".into(), Value::Integer(s.n_cells_min as i64));
            sweep.insert("n_cells_max".into(), Value::Integer(s.n_cells_max as i64));
            sweep.insert("n_points".into(), Value::Integer(s.n_points as i64));
            root.insert("sweep".into(), sweep.into());
        }
        toml::to_string(&root).expect("config tables always serialize")
    }
}

/// Paths of every required key, for messages about empty files.
pub fn required_keys() -> BTreeSet<&'static str> {
    [
        "geometry.radius_um",
        "geometry.n_cells",
        "geometry.cell_volume_m3",
        "geometry.tx_r_um",
        "medium.k_f",
    ]
    .into_iter()
    .collect()
}
