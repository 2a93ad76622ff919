//! Run configuration: flat UTF-8 `key = value` lines with `#` comments and
//! dotted keys. Every key a command does not consume is rejected, so typos
//! fail loudly instead of silently using defaults.

use anyhow::{bail, Context, Result};
use std::cell::RefCell;
use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub struct RunConfig {
    entries: BTreeMap<String, String>,
    used: RefCell<HashSet<String>>,
    /// Base directory for relative output paths (--out).
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, out_dir: PathBuf) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected `key = value`, got `{raw}`", i + 1);
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                bail!("config line {}: empty key", i + 1);
            }
            if entries.insert(key.clone(), value).is_some() {
                bail!("config line {}: duplicate key `{key}`", i + 1);
            }
        }
        Ok(RunConfig { entries, used: RefCell::new(HashSet::new()), out_dir })
    }

    pub fn load(path: &Path, out_dir: PathBuf) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, out_dir)
    }

    /// Command-line seed override.
    pub fn override_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed {
            self.entries.insert("seed".into(), s.to_string());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        let v = self.entries.get(key).map(|s| s.as_str());
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).with_context(|| format!("missing required config key `{key}`"))
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow::anyhow!("config key `{key}` = `{raw}`: {e}")),
        }
    }

    pub fn require_parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|e| anyhow::anyhow!("config key `{key}` = `{raw}`: {e}"))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(other) => bail!("config key `{key}`: expected a boolean, got `{other}`"),
        }
    }

    /// Input path, as written.
    pub fn path(&self, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require(key)?))
    }

    /// Output path, resolved against --out for relative values.
    pub fn out_path(&self, key: &str) -> Result<PathBuf> {
        Ok(self.resolve_out(self.require(key)?))
    }

    pub fn out_path_opt(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.resolve_out(v))
    }

    fn resolve_out(&self, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        if p.is_absolute() {
            p
        } else {
            self.out_dir.join(p)
        }
    }

    /// Every key must have been consumed by now. `seed` is a global key
    /// (overridable by --seed) and always allowed.
    pub fn reject_unknown(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self
            .entries
            .keys()
            .filter(|k| !used.contains(*k) && k.as_str() != "seed")
            .collect();
        if !unknown.is_empty() {
            bail!(
                "unknown config keys: {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            );
        }
        Ok(())
    }
}
