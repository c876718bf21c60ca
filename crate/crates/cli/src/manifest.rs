//! Run manifest: command, seed, scalar results, output checksums and the
//! configuration snapshot, in the same line format as the configuration.
//! No timestamps or host data, so reruns produce identical manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use fput::{Error, Result};

use crate::cache::sha256_hex;
use crate::config::Config;

pub const FILE_NAME: &str = "manifest.txt";

#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub results: BTreeMap<String, String>,
    /// File name relative to the output directory, to SHA-256 hex.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Manifest { command: command.to_string(), seed, ..Default::default() }
    }

    pub fn result(&mut self, key: &str, value: impl ToString) {
        self.results.insert(key.to_string(), value.to_string());
    }

    /// Write `bytes` to `dir/name` and record its checksum.
    pub fn write_output(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(dir.join(name), bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn render(&self, cfg: &Config) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[manifest]");
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "producer = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "\n[results]");
        for (k, v) in &self.results {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "\n[outputs]");
        for (k, v) in &self.outputs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push('\n');
        out.push_str(&cfg.canonical_with_prefix("config."));
        out
    }

    pub fn write(&self, dir: &Path, cfg: &Config) -> Result<()> {
        std::fs::write(dir.join(FILE_NAME), self.render(cfg))?;
        Ok(())
    }
}

/// Parsed manifest sections.
pub fn read(dir: &Path) -> Result<Config> {
    Config::parse(&crate::read_text(&dir.join(FILE_NAME))?)
}

/// Check every recorded output checksum in `dir`.
pub fn verify(dir: &Path) -> Result<()> {
    let m = read(dir)?;
    let outputs = m.section("outputs").cloned().unwrap_or_default();
    for (name, sum) in outputs {
        let bytes = crate::read_bytes(&dir.join(&name))?;
        if sha256_hex(&bytes) != sum {
            return Err(Error::Format(format!("checksum mismatch for {name}")));
        }
    }
    Ok(())
}
