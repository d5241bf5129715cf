//! Plain-text run configuration: one `key=value` per line, `#` comments.
//! Unknown keys are rejected; serialization is deterministic (sorted keys)
//! so a resolved config written next to a run's outputs replays it exactly.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Every key any command understands. One flat namespace keeps resolved
/// configs replayable across subcommands.
pub const KNOWN_KEYS: &[&str] = &[
    "bank",
    "batch",
    "best_perm",
    "cases",
    "checkpoint",
    "checkpoint_interval",
    "clip",
    "count",
    "critic_channels",
    "critic_kernel",
    "dataset",
    "det",
    "dropout",
    "dropout_levels",
    "epochs",
    "eps",
    "gen_channels",
    "gen_kernel",
    "height",
    "inject_fault",
    "kind",
    "klen",
    "lambda_gp",
    "lambda_u",
    "lambda_v",
    "leaky",
    "log",
    "log_diagnostics",
    "lr",
    "mixture",
    "mode",
    "n",
    "n_critic",
    "oracle",
    "out",
    "out_prefix",
    "passes",
    "pgm",
    "record",
    "rho",
    "seed",
    "t",
    "tol",
    "width",
    "workers",
];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunConfig {
    map: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_key(key: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        Self::check_key(key)?;
        self.map.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Set only when the caller actually has a value (flag overrides).
    pub fn set_opt(&mut self, key: &str, value: Option<impl ToString>) -> Result<()> {
        if let Some(v) = value {
            self.set(key, v)?;
        }
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str, raw: &str) -> Result<T> {
        raw.parse().map_err(|_| {
            Error::Config(format!(
                "key '{key}': cannot parse '{raw}' as {}",
                std::any::type_name::<T>()
            ))
        })
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => Ok(Some(self.parse_as(key, raw)?)),
        }
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get_parsed(key)?.unwrap_or(default))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None => Ok(false),
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(other) => Err(Error::Config(format!(
                "key '{key}': expected true/false, got '{other}'"
            ))),
        }
    }

    /// Comma-separated usize list, e.g. channel stacks.
    pub fn get_usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|p| {
                    p.trim().parse::<usize>().map_err(|_| {
                        Error::Config(format!("key '{key}': bad list entry '{p}'"))
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected key=value, got '{line}'",
                    lineno + 1
                )));
            };
            let key = key.trim();
            Self::check_key(key)?;
            if cfg.map.contains_key(key) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
            cfg.map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    /// Deterministic rendering: keys in sorted order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    /// Overlay `other` on top of `self` (other wins).
    pub fn merged_with(&self, other: &RunConfig) -> RunConfig {
        let mut map = self.map.clone();
        for (k, v) in &other.map {
            map.insert(k.clone(), v.clone());
        }
        RunConfig { map }
    }
}
