use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use soh_core::RunConfig;

/// Everything that determines a run's outputs. Its hash names the output
/// directory and is stamped into every file written there.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    /// Training seeds derived from the master seed, as decimal strings.
    pub seeds: Vec<String>,
    /// SHA-256 of every input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// Subcommand options that are not part of the configuration.
    pub options: BTreeMap<String, String>,
    /// Resolved configuration; dataset paths are replaced by `inputs`.
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: &RunConfig) -> Self {
        let mut config = config.clone();
        config.cycles.path = None;
        config.fleet.path = None;
        Self {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: config.seeds().iter().map(u64::to_string).collect(),
            inputs: BTreeMap::new(),
            options: BTreeMap::new(),
            config,
        }
    }

    pub fn input(&mut self, role: impl Into<String>, path: &Path) -> Result<()> {
        self.inputs.insert(role.into(), file_digest(path)?);
        Ok(())
    }

    pub fn option(&mut self, key: &str, value: impl ToString) {
        self.options.insert(key.to_string(), value.to_string());
    }

    pub fn render(&self) -> Result<String> {
        toml::to_string(self).context("serializing the run manifest")
    }

    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.render()?.as_bytes());
        Ok(hex::encode(&digest[..8]))
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Output directory of one run.
pub struct RunDir {
    pub path: PathBuf,
    pub hash: String,
}

impl RunDir {
    /// Creates `root/<hash>/` and writes `manifest.toml` into it.
    pub fn create(root: &Path, manifest: &RunManifest) -> Result<Self> {
        let hash = manifest.hash()?;
        let path = root.join(&hash);
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let dir = Self { path, hash };
        dir.text("manifest.toml", &manifest.render()?)?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn header(&self) -> String {
        format!("manifest {}", self.hash)
    }

    fn create_file(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.file(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# {}", self.header())?;
        Ok((path, out))
    }

    /// Text file whose first line is the manifest comment.
    pub fn text(&self, name: &str, body: &str) -> Result<PathBuf> {
        let (path, mut out) = self.create_file(name)?;
        out.write_all(body.as_bytes())?;
        out.flush().with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn toml<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let body = toml::to_string(value).with_context(|| format!("serializing {name}"))?;
        self.text(name, &body)
    }

    pub fn csv<I, R>(&self, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let (path, out) = self.create_file(name)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
