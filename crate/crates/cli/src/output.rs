//! Artifact writing: atomic CSV/JSON files and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let io = |e: std::io::Error| CliError::Output(format!("{}: {e}", path.display()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(name: &str, unit: &str, values: &[f64]) -> Self {
        Axis {
            name: name.into(),
            unit: unit.into(),
            start: values.first().copied().unwrap_or(f64::NAN),
            stop: values.last().copied().unwrap_or(f64::NAN),
            points: values.len(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub subcommand: String,
    pub config_origin: String,
    pub config_sha256: String,
    pub arguments: Vec<String>,
    pub sweep_axes: Vec<Axis>,
    pub wall_time_s: f64,
    pub timestamp_unix_s: u64,
    pub outputs: Vec<OutputFile>,
}

/// Collects the files of one run and writes the manifest last.
pub struct OutputSet {
    dir: PathBuf,
    subcommand: String,
    config_origin: String,
    config_sha256: String,
    arguments: Vec<String>,
    axes: Vec<Axis>,
    files: Vec<OutputFile>,
    started: Instant,
}

impl OutputSet {
    pub fn new(dir: &Path, subcommand: &str, config_origin: &str, config_bytes: &[u8]) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            subcommand: subcommand.into(),
            config_origin: config_origin.into(),
            config_sha256: sha256_hex(config_bytes),
            arguments: std::env::args().skip(1).collect(),
            axes: vec![],
            files: vec![],
            started: Instant::now(),
        })
    }

    pub fn axis(&mut self, name: &str, unit: &str, values: &[f64]) {
        self.axes.push(Axis::new(name, unit, values));
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.push(OutputFile {
            path: name.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(header).map_err(|e| CliError::Output(e.to_string()))?;
        for r in rows {
            w.write_record(r).map_err(|e| CliError::Output(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish(self) -> Result<PathBuf, CliError> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            config_origin: self.config_origin,
            config_sha256: self.config_sha256,
            arguments: self.arguments,
            sweep_axes: self.axes,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            timestamp_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            outputs: self.files,
        };
        let path = self.dir.join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}

/// Shortest round-trip formatting, so re-runs give byte-identical files.
pub fn num(x: f64) -> String {
    // adding zero folds -0 into 0
    format!("{}", x + 0.0)
}
