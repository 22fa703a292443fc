//! Manifest-stamped artifact files.
//!
//! CSV and TOML files start with `# key: value` comment lines (TOML files
//! also carry the same data as a `[manifest]` table), SVG files with an XML
//! comment. Numbers are written with the shortest round-trip representation,
//! so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Version of the artifact layout (CSV columns, TOML tables).
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub artifact_version: u32,
    pub command: String,
    /// SHA-256 of the effective configuration.
    pub config_hash: String,
    pub seed: u64,
    /// How each reported constant was obtained.
    pub provenance: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            tool: "gp-bounds".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            artifact_version: ARTIFACT_VERSION,
            command: command.into(),
            config_hash: config.hash()?,
            seed: config.seed,
            provenance: BTreeMap::new(),
        })
    }

    pub fn provenance(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.provenance.insert(key.into(), value.into());
        self
    }

    fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("tool: {}", self.tool),
            format!("version: {}", self.version),
            format!("artifact_version: {}", self.artifact_version),
            format!("command: {}", self.command),
            format!("config_hash: {}", self.config_hash),
            format!("seed: {}", self.seed),
        ];
        out.extend(self.provenance.iter().map(|(k, v)| format!("provenance.{k}: {v}")));
        out
    }
}

#[derive(Serialize)]
struct Stamped<'a, B> {
    manifest: &'a Manifest,
    #[serde(flatten)]
    body: &'a B,
}

/// Writes artifacts into one output directory.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    manifest: Manifest,
    plots: bool,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    /// Creates `dir` if needed.
    pub fn create(dir: &Path, manifest: Manifest, plots: bool) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            plots,
            written: Vec::new(),
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn manifest_mut(&mut self) -> &mut Manifest {
        &mut self.manifest
    }

    pub fn plots_enabled(&self) -> bool {
        self.plots
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.written
    }

    fn put(&mut self, name: &str, text: String) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn comment_block(&self) -> String {
        let mut text = String::new();
        for line in self.manifest.lines() {
            let _ = writeln!(text, "# {line}");
        }
        text
    }

    /// CSV with a manifest header; `rows` must match `header` in length.
    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<PathBuf> {
        let mut text = self.comment_block();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_error)?;
        for row in rows {
            if row.len() != header.len() {
                return Err(Error::DimensionMismatch {
                    expected: header.len(),
                    found: row.len(),
                });
            }
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        text.push_str(&String::from_utf8_lossy(&bytes));
        self.put(name, text)
    }

    /// TOML document with a manifest comment block and `[manifest]` table.
    pub fn toml<B: Serialize>(&mut self, name: &str, body: &B) -> Result<PathBuf> {
        let doc = Stamped {
            manifest: &self.manifest,
            body,
        };
        let mut text = self.comment_block();
        text.push_str(&toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?);
        self.put(name, text)
    }

    /// SVG document; skipped (returns `None`) when plots are disabled.
    pub fn svg(&mut self, name: &str, svg: &str) -> Result<Option<PathBuf>> {
        if !self.plots {
            return Ok(None);
        }
        let mut text = String::from("<!--\n");
        for line in self.manifest.lines() {
            let _ = writeln!(text, "  {}", line.replace("--", "- -"));
        }
        text.push_str("-->\n");
        text.push_str(svg);
        self.put(name, text).map(Some)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Splits the `# ` manifest lines off a CSV artifact.
pub fn split_csv_manifest(text: &str) -> (Vec<&str>, &str) {
    let mut manifest = Vec::new();
    let mut rest = text;
    while let Some(line) = rest.strip_prefix("# ") {
        let end = line.find('\n').map_or(line.len(), |i| i + 1);
        manifest.push(line[..end].trim_end());
        rest = &line[end..];
    }
    (manifest, rest)
}
