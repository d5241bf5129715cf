//! File-config plus flag-override resolution. Every command assembles a
//! fully-resolved `RunConfig`, reads its inputs from it, and writes it next
//! to the primary output so the run can be replayed with `--config` alone.

use pdsep_core::config::RunConfig;
use pdsep_core::error::{Error, Result};
use std::path::{Path, PathBuf};

pub fn load_base(config: &Option<PathBuf>) -> Result<RunConfig> {
    match config {
        Some(path) => RunConfig::from_file(path),
        None => Ok(RunConfig::new()),
    }
}

/// Seed resolution order: explicit flag, config file, PDSEP_SEED, then 0.
pub fn resolve_seed(cfg: &mut RunConfig, flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        cfg.set("seed", s)?;
    }
    if !cfg.contains("seed") {
        if let Ok(env) = std::env::var("PDSEP_SEED") {
            let s: u64 = env.parse().map_err(|_| {
                Error::Config(format!("PDSEP_SEED must be an unsigned integer, got '{env}'"))
            })?;
            cfg.set("seed", s)?;
        }
    }
    cfg.get_or("seed", 0u64)
}

/// Resolved-config path placed next to an output file.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".cfg");
    PathBuf::from(os)
}
