//! Run manifests and output plumbing.
//!
//! JSON outputs embed the manifest under `"manifest"`; CSV outputs get a sidecar
//! `<out>.manifest.json`, or the manifest goes to stderr when the CSV goes to stdout.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every resolved option, defaults included.
    pub config: Value,
    pub version: String,
    pub seeds: Vec<u64>,
    /// Value of RDCP_THREADS, if set.
    pub threads: Option<String>,
    pub started_unix: f64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    /// Small derived results worth keeping next to CSV tables.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Value>,
}

pub struct Run {
    manifest: RunManifest,
    clock: Instant,
}

impl Run {
    pub fn start(command: &str, config: &impl Serialize, seeds: Vec<u64>) -> Result<Self, CliError> {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Ok(Self {
            manifest: RunManifest {
                command: command.into(),
                config: serde_json::to_value(config)?,
                version: env!("CARGO_PKG_VERSION").into(),
                seeds,
                threads: std::env::var(rdcp::sim::THREADS_ENV).ok(),
                started_unix,
                wall_clock_seconds: 0.0,
                outputs: Vec::new(),
                summary: None,
            },
            clock: Instant::now(),
        })
    }

    pub fn set_summary(&mut self, summary: Value) {
        self.manifest.summary = Some(summary);
    }

    fn finish(&mut self, outputs: Vec<String>) -> &RunManifest {
        self.manifest.wall_clock_seconds = self.clock.elapsed().as_secs_f64();
        self.manifest.outputs = outputs;
        &self.manifest
    }

    /// Writes `{"manifest": …, <payload fields>}`.
    pub fn emit_json(mut self, out: Option<&Path>, payload: Value) -> Result<(), CliError> {
        let outputs = out.map(|p| vec![p.display().to_string()]).unwrap_or_default();
        let mut doc = serde_json::Map::new();
        doc.insert("manifest".into(), serde_json::to_value(self.finish(outputs))?);
        match payload {
            Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("result".into(), other);
            }
        }
        let text = serde_json::to_string_pretty(&Value::Object(doc))?;
        write_text(out, &text)
    }

    /// Writes the table plus its manifest; `extra` files were already written by the caller.
    pub fn emit_csv(mut self, out: Option<&Path>, table: &str, extra: Vec<PathBuf>) -> Result<(), CliError> {
        match out {
            Some(path) => {
                let sidecar = sidecar_path(path);
                let mut outputs = vec![path.display().to_string(), sidecar.display().to_string()];
                outputs.extend(extra.iter().map(|p| p.display().to_string()));
                std::fs::write(path, table)?;
                let text = serde_json::to_string_pretty(self.finish(outputs))?;
                std::fs::write(sidecar, text + "\n")?;
            }
            None => {
                write_stdout(table)?;
                let text = serde_json::to_string_pretty(self.finish(Vec::new()))?;
                eprintln!("{text}");
            }
        }
        Ok(())
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, format!("{text}\n"))?,
        None => write_stdout(&format!("{text}\n"))?,
    }
    Ok(())
}

/// A closed pipe (`| head`) is not an error.
fn write_stdout(text: &str) -> Result<(), CliError> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

/// 17 significant digits; empty for missing or non-finite values.
pub fn fmt_float(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        _ => String::new(),
    }
}
