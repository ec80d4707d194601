use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::signal::TimeSeries;

use super::CliError;

pub fn config_hash(resolved_toml: &str) -> String {
    format!("{:x}", Sha256::digest(resolved_toml.as_bytes()))
}

/// Writes artifacts into one directory and remembers what was written.
pub struct ArtifactWriter {
    dir: PathBuf,
    mode: &'static str,
    hash: String,
    seed: Option<u64>,
    pub written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path, mode: &'static str, hash: String, seed: Option<u64>) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            mode,
            hash,
            seed,
            written: Vec::new(),
        })
    }

    fn preamble(&self, what: &str) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "# {} {}\n# mode: {}\n# config_hash: {}\n# seed: {}\n# series: {}\n",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION"),
            self.mode,
            self.hash,
            seed,
            what
        )
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// One series per file: `t_s,value,unit,provenance,probe_id`.
    pub fn series(&mut self, name: &str, probe_id: &str, series: &TimeSeries) -> Result<PathBuf, CliError> {
        let mut out = self.preamble(probe_id);
        out.push_str("t_s,value,unit,provenance,probe_id\n");
        let unit = series.unit.label();
        for (i, v) in series.values.iter().enumerate() {
            writeln!(out, "{},{:e},{},{},{}", series.time(i), v, unit, series.provenance, probe_id).unwrap();
        }
        self.write(name, &out)
    }

    /// A plain table with the same comment preamble.
    pub fn table(&mut self, name: &str, what: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut out = self.preamble(what);
        out.push_str(&header.join(","));
        out.push('\n');
        for row in rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        self.write(name, &out)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            config_hash: &'a str,
            seed: Option<u64>,
            mode: &'a str,
            #[serde(flatten)]
            body: &'a T,
        }
        let w = Wrapped {
            config_hash: &self.hash,
            seed: self.seed,
            mode: self.mode,
            body: value,
        };
        let mut text = serde_json::to_string_pretty(&w).expect("artifact records serialize");
        text.push('\n');
        self.write(name, &text)
    }
}

/// File-name-safe form of a probe id (ids are already restricted, this is a
/// second line of defence for ids built in code).
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}
