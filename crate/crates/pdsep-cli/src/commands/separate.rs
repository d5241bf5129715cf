use crate::{commands, resolve};
use clap::Args;
use pdsep_core::checkpoint::load_checkpoint;
use pdsep_core::dataset::{read_raw_array, write_pgm, write_raw_array, Dataset};
use pdsep_core::error::{Error, Result};
use pdsep_core::trainer::separate;
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct SeparateArgs {
    /// key=value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained checkpoint (PDGM).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Mixture as a raw array file (rank, extents, f32 little-endian).
    #[arg(long)]
    mixture: Option<PathBuf>,
    /// Alternatively: take the mixture from this dataset...
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// ...at this record index.
    #[arg(long)]
    record: Option<usize>,
    /// Output prefix for the per-source estimate files.
    #[arg(long)]
    out_prefix: Option<String>,
    /// Average this many stochastic passes.
    #[arg(long)]
    passes: Option<usize>,
    /// Disable test-time dropout (deterministic debugging mode; the
    /// training protocol keeps it on).
    #[arg(long)]
    det: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write PGM renders (2-D models only).
    #[arg(long)]
    pgm: bool,
}

pub fn run(args: SeparateArgs) -> Result<i32> {
    let mut cfg = resolve::load_base(&args.config)?;
    cfg.set_opt("checkpoint", args.checkpoint.as_ref().map(|p| p.display()))?;
    cfg.set_opt("mixture", args.mixture.as_ref().map(|p| p.display()))?;
    cfg.set_opt("dataset", args.dataset.as_ref().map(|p| p.display()))?;
    cfg.set_opt("record", args.record)?;
    cfg.set_opt("out_prefix", args.out_prefix)?;
    cfg.set_opt("passes", args.passes)?;
    if args.det {
        cfg.set("det", true)?;
    }
    if args.pgm {
        cfg.set("pgm", true)?;
    }
    let seed = resolve::resolve_seed(&mut cfg, args.seed)?;

    let model = load_checkpoint(&PathBuf::from(cfg.require("checkpoint")?))?;
    let expected_shape = model.desc.tensor_shape();

    let mixture: Vec<f32> = if let Some(mix_path) = cfg.get("mixture") {
        let (shape, data) = read_raw_array(&PathBuf::from(mix_path))?;
        let spatial: Vec<usize> = model.desc.input_shape.clone();
        if shape != spatial && shape != expected_shape {
            return Err(Error::ShapeMismatch {
                op: "separate mixture",
                lhs: shape,
                rhs: expected_shape,
            });
        }
        data
    } else if let Some(ds_path) = cfg.get("dataset") {
        let dataset = Dataset::read(&PathBuf::from(ds_path))?;
        let idx: usize = cfg.get_or("record", 0usize)?;
        cfg.set("record", idx)?;
        let rec = dataset.records.get(idx).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "record {idx} out of range ({} records)",
                dataset.len()
            ))
        })?;
        rec.mixture.clone()
    } else {
        return Err(Error::Config(
            "separate needs either 'mixture' or 'dataset' (+'record')".into(),
        ));
    };

    let opts = commands::separate_options(&cfg, seed)?;
    cfg.set("passes", opts.passes)?;
    cfg.set("det", !opts.noise)?;
    let estimates = separate(&model, &mixture, &opts)?;

    let prefix = cfg.require("out_prefix")?.to_string();
    let spatial = model.desc.input_shape.clone();
    for (i, est) in estimates.iter().enumerate() {
        let path = PathBuf::from(format!("{prefix}_s{}.raw", i + 1));
        write_raw_array(&path, &spatial, est)?;
        if cfg.get_bool("pgm")? {
            if spatial.len() != 2 {
                return Err(Error::InvalidArgument(
                    "--pgm requires a 2-D model".into(),
                ));
            }
            write_pgm(
                &PathBuf::from(format!("{prefix}_s{}.pgm", i + 1)),
                spatial[0],
                spatial[1],
                est,
            )?;
        }
    }
    cfg.write(&resolve::sidecar(&PathBuf::from(format!("{prefix}_s1.raw"))))?;
    println!(
        "separated {} sources (passes={}, noise={}) -> {prefix}_s*.raw",
        estimates.len(),
        opts.passes,
        opts.noise
    );
    Ok(0)
}
