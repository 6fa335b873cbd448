//! Atomic output files stamped with the run configuration.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tempfile::NamedTempFile;

use crate::config::RunConfig;
use crate::CliError;

/// Provenance block embedded in every output file.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub hash: String,
    pub config: Value,
}

impl Provenance {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            hash: cfg.hash(),
            config: cfg.provenance_value(),
        }
    }

    fn config_line(&self) -> String {
        serde_json::to_string(&self.config).expect("config serializes")
    }

    /// Comment lines for CSV preambles.
    pub fn csv_preamble(&self) -> String {
        format!(
            "generator=routinesig {}\nrun_config_sha256={}\nrun_config={}",
            env!("CARGO_PKG_VERSION"),
            self.hash,
            self.config_line()
        )
    }

    /// An XML or HTML comment; `--` cannot occur inside one.
    pub fn markup_comment(&self) -> String {
        let cfg = self.config_line().replace("--", "-\\u002d");
        format!("<!-- run_config_sha256={} run_config={} -->", self.hash, cfg)
    }

    /// Adds a top-level `provenance` key to a JSON object.
    pub fn stamp(&self, mut doc: Value) -> Value {
        if let Some(obj) = doc.as_object_mut() {
            obj.insert(
                "provenance".into(),
                serde_json::json!({
                    "generator": format!("routinesig {}", env!("CARGO_PKG_VERSION")),
                    "run_config_sha256": self.hash,
                    "run_config": self.config,
                }),
            );
        }
        doc
    }
}

/// Writes through a temporary file in the target directory, then renames it
/// into place.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf)?;
        buf.flush().map_err(|e| CliError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, |w| w.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e)))
}

pub fn write_json(path: &Path, prov: &Provenance, doc: Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(&prov.stamp(doc)).expect("json serializes");
    text.push('\n');
    write_text(path, &text)
}
