//! Deterministic CSV/JSON artifacts. Files are written under a temporary
//! name and renamed when the whole run succeeds; failed runs leave nothing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Artifacts {
    dir: PathBuf,
    meta: Value,
    pending: Vec<(PathBuf, PathBuf)>,
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Artifacts {
    pub fn new(dir: &Path, config_hash: &str, grids: Value) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            meta: json!({
                "config_hash": config_hash,
                "code_version": CODE_VERSION,
                "grids": grids,
            }),
            pending: Vec::new(),
        })
    }

    fn stage(&mut self, name: &str) -> PathBuf {
        let fin = self.dir.join(name);
        let tmp = self.dir.join(format!("{name}.incomplete"));
        self.pending.push((tmp.clone(), fin));
        tmp
    }

    /// `{"meta": ..., "result": ...}` with sorted keys.
    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<(), CliError> {
        let body = json!({ "meta": self.meta, "result": result });
        let mut text = serde_json::to_string_pretty(&body).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        let path = self.stage(name);
        fs::write(&path, text).map_err(|e| io(&path, e))
    }

    /// CSV with the metadata in leading `#` comment lines.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        let path = self.stage(name);
        let mut out = Vec::new();
        for key in ["config_hash", "code_version"] {
            out.extend(format!("# {key}: {}\n", self.meta[key].as_str().unwrap_or("")).into_bytes());
        }
        out.extend(format!("# grids: {}\n", self.meta["grids"]).into_bytes());
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
            for row in rows {
                w.write_record(row.iter().map(|v| format!("{v:e}")))
                    .map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.flush().map_err(|e| io(&path, e))?;
        }
        fs::write(&path, out).map_err(|e| io(&path, e))
    }

    /// Moves staged files into place.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::new();
        for (tmp, fin) in &self.pending {
            fs::rename(tmp, fin).map_err(|e| io(fin, e))?;
            done.push(fin.clone());
        }
        Ok(done)
    }

    /// Removes staged files after a failure.
    pub fn discard(self) {
        for (tmp, _) in &self.pending {
            let _ = fs::remove_file(tmp);
        }
    }
}
