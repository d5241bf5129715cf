use crate::resolve;
use clap::Args;
use pdsep_core::error::{Error, Result};
use pdsep_core::mixing::{synth_dataset, MixKind};
use pdsep_core::sources;
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// key=value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mixing model: inst(antaneous) or conv(olutive).
    #[arg(long)]
    kind: Option<String>,
    /// Sources per mixture.
    #[arg(long)]
    n: Option<usize>,
    /// Number of records.
    #[arg(long)]
    count: Option<usize>,
    /// Master seed (PDSEP_SEED is the fallback).
    #[arg(long)]
    seed: Option<u64>,
    /// Kernel length for convolutive mixing.
    #[arg(long)]
    klen: Option<usize>,
    /// 1-D signal length.
    #[arg(long)]
    t: Option<usize>,
    /// 2-D image height (use with --width).
    #[arg(long)]
    height: Option<usize>,
    /// 2-D image width.
    #[arg(long)]
    width: Option<usize>,
    /// Comma-separated waveform names for the source bank.
    #[arg(long)]
    bank: Option<String>,
    /// Output dataset path.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: SynthArgs) -> Result<i32> {
    let mut cfg = resolve::load_base(&args.config)?;
    cfg.set_opt("kind", args.kind)?;
    cfg.set_opt("n", args.n)?;
    cfg.set_opt("count", args.count)?;
    cfg.set_opt("klen", args.klen)?;
    cfg.set_opt("t", args.t)?;
    cfg.set_opt("height", args.height)?;
    cfg.set_opt("width", args.width)?;
    cfg.set_opt("bank", args.bank)?;
    cfg.set_opt("out", args.out.as_ref().map(|p| p.display()))?;
    let seed = resolve::resolve_seed(&mut cfg, args.seed)?;

    let kind = MixKind::parse(cfg.require("kind")?)?;
    let n: usize = cfg.get_or("n", 4)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    let count: usize = cfg.get_or("count", 0)?;
    if count < 1 {
        return Err(Error::InvalidArgument("need count >= 1".into()));
    }
    let k_len: usize = cfg.get_or("klen", 8)?;
    let shape: Vec<usize> = if cfg.contains("height") || cfg.contains("width") {
        vec![cfg.get_or("height", 32)?, cfg.get_or("width", 32)?]
    } else {
        vec![cfg.get_or("t", 256usize)?]
    };
    // Freeze all applied defaults into the resolved config.
    cfg.set("kind", kind.name())?;
    cfg.set("n", n)?;
    cfg.set("klen", k_len)?;
    if shape.len() == 1 {
        cfg.set("t", shape[0])?;
    } else {
        cfg.set("height", shape[0])?;
        cfg.set("width", shape[1])?;
    }

    let bank_names: Vec<String> = match cfg.get("bank") {
        Some(raw) => raw.split(',').map(|s| s.trim().to_string()).collect(),
        None => sources::default_bank_names(shape.len())
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    cfg.set("bank", bank_names.join(","))?;
    let name_refs: Vec<&str> = bank_names.iter().map(|s| s.as_str()).collect();
    let bank = sources::bank(&name_refs, &shape, seed)?;

    let out = PathBuf::from(cfg.require("out")?);
    let dataset = synth_dataset(&bank, &shape, count, kind, n, k_len, seed)?;
    dataset.write(&out)?;
    cfg.write(&resolve::sidecar(&out))?;

    println!(
        "wrote {} records (n={n}, kind={}, shape={shape:?}, seed={seed}) to {}",
        dataset.len(),
        kind.name(),
        out.display()
    );
    Ok(0)
}
