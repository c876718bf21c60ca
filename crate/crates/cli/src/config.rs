//! Run configuration: UTF-8 text of `key = value` lines under `[section]`
//! headers. Arrays are comma-separated lists; `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use fput::basis::{ModelParams, Sector};
use fput::{Error, Result};

/// Keys accepted in each section.
const KNOWN: &[(&str, &[&str])] = &[
    ("model", &["alpha", "lambda", "hbar", "cutoff", "sector"]),
    ("run", &["seed", "output", "cache_dir"]),
    ("classical", &["energy", "grid", "spacing", "bounds", "t_end", "threshold", "rtol", "atol", "q2", "p2"]),
    ("transport", &["energies", "n_ics", "q2_min", "q2_max", "p2", "horizon", "sample_dt", "window", "threshold", "threshold_fine"]),
    ("window", &["center", "width", "count", "dense_max_dim", "tol", "max_per_shift"]),
    ("dos", &["energies", "staircase"]),
    ("husimi", &["grid", "spacing", "bounds", "nodes", "route"]),
    ("stats", &["input", "inputs", "class_map", "alphas", "m_chaotic", "window", "random_trials", "energy"]),
    ("render", &["input", "scale", "floor", "palette", "cell_size"]),
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        let mut current: Option<String> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(format!("line {}: unterminated section header", ln + 1)))?
                    .trim();
                if name.is_empty() {
                    return Err(config_err(format!("line {}: empty section name", ln + 1)));
                }
                cfg.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected 'key = value'", ln + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(config_err(format!("line {}: empty key", ln + 1)));
            }
            let sec = current.as_ref().ok_or_else(|| config_err(format!("line {}: key '{k}' outside a section", ln + 1)))?;
            let table = cfg.sections.get_mut(sec).expect("section was created");
            if table.insert(k.to_string(), v.to_string()).is_some() {
                return Err(config_err(format!("line {}: duplicate key '{sec}.{k}'", ln + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// Reject sections and keys outside the documented set.
    pub fn validate_keys(&self) -> Result<()> {
        for (sec, table) in &self.sections {
            let known = KNOWN
                .iter()
                .find(|(s, _)| s == sec)
                .ok_or_else(|| config_err(format!("unknown section [{sec}]")))?
                .1;
            for k in table.keys() {
                if !known.contains(&k.as_str()) {
                    return Err(config_err(format!("unknown key '{sec}.{k}'")));
                }
            }
        }
        Ok(())
    }

    /// Set `section.key` to `value`, replacing any existing value.
    pub fn set(&mut self, dotted: &str, value: &str) -> Result<()> {
        let (sec, key) = dotted
            .split_once('.')
            .ok_or_else(|| config_err(format!("override '{dotted}' must have the form section.key")))?;
        self.sections.entry(sec.trim().to_string()).or_default().insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, sec: &str, key: &str) -> Option<&str> {
        self.sections.get(sec).and_then(|t| t.get(key)).map(|s| s.as_str())
    }

    pub fn has(&self, sec: &str, key: &str) -> bool {
        self.get(sec, key).is_some()
    }

    fn parsed<T: FromStr>(&self, sec: &str, key: &str) -> Result<Option<T>> {
        match self.get(sec, key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| config_err(format!("'{sec}.{key}' = '{v}' is not a valid {}", std::any::type_name::<T>()))),
        }
    }

    pub fn f64_or(&self, sec: &str, key: &str, default: f64) -> Result<f64> {
        Ok(self.parsed(sec, key)?.unwrap_or(default))
    }

    pub fn f64_req(&self, sec: &str, key: &str) -> Result<f64> {
        self.parsed(sec, key)?.ok_or_else(|| config_err(format!("missing required key '{sec}.{key}'")))
    }

    pub fn f64_opt(&self, sec: &str, key: &str) -> Result<Option<f64>> {
        self.parsed(sec, key)
    }

    pub fn usize_or(&self, sec: &str, key: &str, default: usize) -> Result<usize> {
        Ok(self.parsed(sec, key)?.unwrap_or(default))
    }

    pub fn usize_opt(&self, sec: &str, key: &str) -> Result<Option<usize>> {
        self.parsed(sec, key)
    }

    pub fn u64_or(&self, sec: &str, key: &str, default: u64) -> Result<u64> {
        Ok(self.parsed(sec, key)?.unwrap_or(default))
    }

    pub fn str_or<'a>(&'a self, sec: &str, key: &str, default: &'a str) -> &'a str {
        self.get(sec, key).unwrap_or(default)
    }

    pub fn str_req(&self, sec: &str, key: &str) -> Result<&str> {
        self.get(sec, key).ok_or_else(|| config_err(format!("missing required key '{sec}.{key}'")))
    }

    pub fn bool_or(&self, sec: &str, key: &str, default: bool) -> Result<bool> {
        match self.get(sec, key) {
            None => Ok(default),
            Some("true") | Some("yes") | Some("1") => Ok(true),
            Some("false") | Some("no") | Some("0") => Ok(false),
            Some(v) => Err(config_err(format!("'{sec}.{key}' = '{v}' is not a boolean"))),
        }
    }

    pub fn list_f64(&self, sec: &str, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(sec, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| config_err(format!("'{sec}.{key}': '{}' is not a number", x.trim()))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn list_str(&self, sec: &str, key: &str) -> Option<Vec<String>> {
        self.get(sec, key).map(|v| v.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())
    }

    /// `(xmin, xmax, ymin, ymax)` from a four-element list.
    pub fn bounds(&self, sec: &str, key: &str) -> Result<Option<(f64, f64, f64, f64)>> {
        match self.list_f64(sec, key)? {
            None => Ok(None),
            Some(v) if v.len() == 4 => Ok(Some((v[0], v[1], v[2], v[3]))),
            Some(v) => Err(config_err(format!("'{sec}.{key}' needs 4 values, got {}", v.len()))),
        }
    }

    /// Model parameters from `[model]`.
    pub fn model(&self) -> Result<ModelParams> {
        let alpha = self.f64_or("model", "alpha", 1.0)?;
        let lambda = self.f64_or("model", "lambda", 0.0)?;
        let hbar = self.f64_req("model", "hbar")?;
        let cutoff = self.parsed::<u32>("model", "cutoff")?.ok_or_else(|| config_err("missing required key 'model.cutoff'"))?;
        let sector = Sector::from_str(self.str_or("model", "sector", "singlet")).map_err(|e| config_err(e.to_string()))?;
        ModelParams::new(alpha, lambda, hbar, cutoff, sector).map_err(|e| config_err(e.to_string()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.u64_or("run", "seed", 1)
    }

    /// Canonical text: sections and keys sorted, one `key = value` per line.
    pub fn canonical(&self) -> String {
        self.canonical_with_prefix("")
    }

    pub fn canonical_with_prefix(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (sec, table) in &self.sections {
            if table.is_empty() {
                continue;
            }
            let _ = writeln!(out, "[{prefix}{sec}]");
            for (k, v) in table {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    pub fn section(&self, sec: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.get(sec)
    }
}
