//! Artifact files, provenance stamps and per-command manifests.
//!
//! JSON artifacts embed `config_hash` and `seed`; CSV artifacts carry them in
//! a leading `#` comment line. Manifests list every input and output with its
//! SHA-256 and contain no timestamps, so identical runs give identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Self { config_hash: cfg.hash(), seed: cfg.seed }
    }

    pub fn comment(&self) -> String {
        format!("dtslpm config_hash={} seed={}", self.config_hash, self.seed)
    }
}

/// A JSON artifact: provenance fields followed by the payload's own fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    #[serde(flatten)]
    pub provenance: Provenance,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    /// Path relative to the output directory when inside it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<FileRef>,
    pub outputs: Vec<FileRef>,
    pub warnings: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Tracks the files one command reads and writes.
pub struct Outputs {
    dir: PathBuf,
    provenance: Provenance,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.output_dir)
            .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))?;
        Ok(Self { dir: cfg.output_dir.clone(), provenance: Provenance::of(cfg), inputs: vec![], outputs: vec![] })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn read(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Registers an output path, creating its parent directory.
    pub fn create(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        self.outputs.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, body: &T) -> Result<PathBuf> {
        let path = self.create(rel)?;
        let stamped = Stamped { provenance: self.provenance.clone(), body };
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer_pretty(&mut w, &stamped)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(path)
    }

    /// Opens a CSV writer whose file starts with the provenance comment.
    pub fn csv(&mut self, rel: &str) -> Result<csv::Writer<File>> {
        let path = self.create(rel)?;
        let mut file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        writeln!(file, "# {}", self.provenance.comment())?;
        Ok(csv::Writer::from_writer(file))
    }

    fn file_ref(&self, path: &Path) -> Result<FileRef> {
        let shown = path.strip_prefix(&self.dir).unwrap_or(path);
        Ok(FileRef { path: shown.to_string_lossy().replace('\\', "/"), sha256: sha256_file(path)? })
    }

    /// Writes `manifest-<command>.json` and returns its path.
    pub fn finish(self, command: &str, cfg: &RunConfig, warnings: Vec<String>) -> Result<PathBuf> {
        let manifest = Manifest {
            command: command.into(),
            config_hash: self.provenance.config_hash.clone(),
            seed: self.provenance.seed,
            config: cfg.clone(),
            inputs: self.inputs.iter().map(|p| self.file_ref(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| self.file_ref(p)).collect::<Result<_>>()?,
            warnings,
        };
        let path = self.path(&format!("manifest-{command}.json"));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Reads a stamped JSON artifact, naming the command that produces it when
/// the file is missing.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, producer: &str) -> Result<Stamped<T>> {
    if !path.exists() {
        anyhow::bail!("{} not found; run `dtslpm {producer}` first with the same --output-dir", path.display());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
