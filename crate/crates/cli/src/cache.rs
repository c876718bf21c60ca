//! Content-addressed on-disk cache for eigenvalue windows.
//!
//! An entry is `FPC1`, a 32-byte SHA-256 of the payload, a `u64` payload
//! length and the payload. Entries are published by writing a temporary
//! file and renaming it into place, so readers never see partial entries.
//! Any entry that fails validation is treated as a miss.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use fput::basis::ModelParams;
use fput::spectral::EigenWindow;
use fput::{Error, Result};

pub const ENV_CACHE_DIR: &str = "FPUT_CACHE_DIR";
const MAGIC: &[u8; 4] = b"FPC1";
/// Bumped whenever cached producers change their output.
pub const PRODUCER_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"), "-eig1");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Key from a producer name and its canonical parameter text.
pub fn key(producer: &str, params: &str) -> String {
    sha256_hex(format!("{PRODUCER_VERSION}\n{producer}\n{params}").as_bytes())
}

#[derive(Debug)]
pub struct Cache {
    dir: Option<PathBuf>,
    pub warnings: Vec<String>,
}

/// Outcome of a lookup-or-compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    /// Entry present but invalid; recomputed.
    Corrupt,
    Bypass,
}

impl CacheStatus {
    pub fn name(self) -> &'static str {
        match self {
            CacheStatus::Hit => "hit",
            CacheStatus::Miss => "miss",
            CacheStatus::Corrupt => "corrupt",
            CacheStatus::Bypass => "bypass",
        }
    }
}

impl Cache {
    /// Open the cache at `dir`; an unusable directory disables caching with
    /// a warning instead of failing.
    pub fn open(dir: &Path) -> Cache {
        match std::fs::create_dir_all(dir).and_then(|_| probe_writable(dir)) {
            Ok(()) => Cache { dir: Some(dir.to_path_buf()), warnings: Vec::new() },
            Err(e) => Cache { dir: None, warnings: vec![format!("cache directory {} unusable ({e}); caching disabled", dir.display())] },
        }
    }

    pub fn disabled() -> Cache {
        Cache { dir: None, warnings: Vec::new() }
    }

    pub fn is_enabled(&self) -> bool {
        self.dir.is_some()
    }

    pub fn entry_path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.fpc")))
    }

    /// Payload of a valid entry; `Err` describes why an existing entry was
    /// rejected, `Ok(None)` means no entry.
    pub fn get(&self, key: &str) -> std::result::Result<Option<Vec<u8>>, String> {
        let Some(path) = self.entry_path(key) else { return Ok(None) };
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.to_string()),
        };
        decode_entry(&bytes).map(Some)
    }

    pub fn put(&mut self, key: &str, payload: &[u8]) {
        let Some(path) = self.entry_path(key) else { return };
        let mut bytes = Vec::with_capacity(payload.len() + 44);
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&Sha256::digest(payload));
        bytes.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        bytes.extend_from_slice(payload);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let res = std::fs::write(&tmp, &bytes).and_then(|_| std::fs::rename(&tmp, &path));
        if let Err(e) = res {
            let _ = std::fs::remove_file(&tmp);
            self.warnings.push(format!("cannot write cache entry {}: {e}", path.display()));
        }
    }

    /// Cached eigenvalue window for `params_text`, computing and storing it
    /// on a miss.
    pub fn eigen_window(
        &mut self,
        params_text: &str,
        compute: impl FnOnce() -> Result<EigenWindow>,
    ) -> Result<(EigenWindow, CacheStatus)> {
        if !self.is_enabled() {
            return Ok((compute()?, CacheStatus::Bypass));
        }
        let k = key("eigen-window", params_text);
        let mut status = CacheStatus::Miss;
        match self.get(&k) {
            Ok(Some(p)) => match decode_window(&p) {
                Ok(w) => return Ok((w, CacheStatus::Hit)),
                Err(e) => {
                    self.warnings.push(format!("discarding cache entry {k}: {e}"));
                    status = CacheStatus::Corrupt;
                }
            },
            Ok(None) => {}
            Err(e) => {
                self.warnings.push(format!("discarding cache entry {k}: {e}"));
                status = CacheStatus::Corrupt;
            }
        }
        let w = compute()?;
        self.put(&k, &encode_window(&w));
        Ok((w, status))
    }
}

fn probe_writable(dir: &Path) -> std::io::Result<()> {
    let probe = dir.join(format!(".probe{}", std::process::id()));
    std::fs::write(&probe, b"")?;
    std::fs::remove_file(&probe)
}

fn decode_entry(bytes: &[u8]) -> std::result::Result<Vec<u8>, String> {
    if bytes.len() < 44 || &bytes[..4] != MAGIC {
        return Err("bad header".into());
    }
    let len = u64::from_le_bytes(bytes[36..44].try_into().expect("8 bytes")) as usize;
    let payload = &bytes[44..];
    if payload.len() != len {
        return Err(format!("length {} does not match recorded {len}", payload.len()));
    }
    if Sha256::digest(payload).as_slice() != &bytes[4..36] {
        return Err("checksum mismatch".into());
    }
    Ok(payload.to_vec())
}

/// Window layout: `u64 n`, `u64 dim`, window bounds, energies, residual
/// norms, then `n` coefficient vectors, all little-endian.
pub fn encode_window(w: &EigenWindow) -> Vec<u8> {
    let n = w.len();
    let dim = w.coefficients.first().map_or(0, |c| c.len());
    let mut out = Vec::with_capacity(16 + 16 + 16 * n + 8 * n * dim);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(dim as u64).to_le_bytes());
    let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
    put(w.window.0);
    put(w.window.1);
    w.energies.iter().for_each(|&x| put(x));
    w.residual_norms.iter().for_each(|&x| put(x));
    for c in &w.coefficients {
        c.iter().for_each(|&x| put(x));
    }
    out
}

pub fn decode_window(p: &[u8]) -> Result<EigenWindow> {
    let bad = || Error::Format("malformed cached eigenvalue window".into());
    if p.len() < 32 {
        return Err(bad());
    }
    let n = u64::from_le_bytes(p[0..8].try_into().expect("8 bytes")) as usize;
    let dim = u64::from_le_bytes(p[8..16].try_into().expect("8 bytes")) as usize;
    let expected = n.checked_mul(dim).and_then(|x| x.checked_add(2 * n + 2)).and_then(|x| x.checked_mul(8)).ok_or_else(bad)?;
    if p.len() != 16 + expected {
        return Err(bad());
    }
    let vals: Vec<f64> = p[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let energies = vals[2..2 + n].to_vec();
    let residual_norms = vals[2 + n..2 + 2 * n].to_vec();
    let coefficients = vals[2 + 2 * n..].chunks(dim.max(1)).take(n).map(|c| c.to_vec()).collect();
    Ok(EigenWindow { energies, coefficients, window: (vals[0], vals[1]), params: None, residual_norms })
}

/// Canonical parameter text of a model for cache keys.
pub fn model_key_text(p: &ModelParams) -> String {
    format!(
        "alpha={:e}\nlambda={:e}\nhbar={:e}\ncutoff={}\nsector={}\n",
        p.alpha,
        p.lambda,
        p.hbar,
        p.cutoff_n,
        p.sector.name()
    )
}
