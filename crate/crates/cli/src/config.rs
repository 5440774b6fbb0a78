//! Plain `key = value` config files.
//!
//! Keys are long flag names without the leading dashes (`kb`, `threshold`,
//! `suppress-negated`). Blank lines and `#` comments are skipped. Flags given
//! on the command line take precedence over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub const THRESHOLD_ENV: &str = "NR_THRESHOLD";

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    dir: PathBuf,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = Self::parse(&text)?;
        cfg.dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("config line {}: expected key=value", n + 1);
            };
            values.insert(k.trim().replace('_', "-"), v.trim().to_string());
        }
        Ok(ConfigFile {
            values,
            dir: PathBuf::new(),
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Relative paths resolve against the config file's directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_relative() {
                self.dir.join(p)
            } else {
                p
            }
        })
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None => Ok(false),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(other) => bail!("config {key}: expected true or false, got {other:?}"),
        }
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config {key}: {e}")))
            .transpose()
    }
}

/// flag > config file > `NR_THRESHOLD` > default.
pub fn resolve_threshold(flag: Option<f64>, config: &ConfigFile, env: Option<&str>, default: f64) -> Result<f64> {
    let t = match (flag, config.parsed::<f64>("threshold")?, env) {
        (Some(t), _, _) => t,
        (None, Some(t), _) => t,
        (None, None, Some(raw)) => raw
            .trim()
            .parse()
            .with_context(|| format!("{THRESHOLD_ENV}: not a number: {raw:?}"))?,
        (None, None, None) => default,
    };
    if !(t > 0.0 && t <= 1.0) {
        bail!("threshold must be in (0, 1], got {t}");
    }
    Ok(t)
}
