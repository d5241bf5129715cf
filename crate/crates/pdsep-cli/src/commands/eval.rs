use crate::{commands, resolve};
use clap::Args;
use pdsep_core::checkpoint::load_checkpoint;
use pdsep_core::dataset::Dataset;
use pdsep_core::error::Result;
use pdsep_core::metrics::{evaluate_estimates, evaluate_model, write_report_csv};
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// key=value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained checkpoint (PDGM). Not needed in --oracle mode.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Labeled test dataset (PDG1).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Metrics CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Average this many stochastic passes per mixture.
    #[arg(long)]
    passes: Option<usize>,
    /// Disable test-time dropout.
    #[arg(long)]
    det: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Harness sanity mode: score the ground truth against itself.
    #[arg(long)]
    oracle: bool,
    /// Diagnostic re-pairing: score the best per-record permutation.
    #[arg(long)]
    best_perm: bool,
}

pub fn run(args: EvalArgs) -> Result<i32> {
    let mut cfg = resolve::load_base(&args.config)?;
    cfg.set_opt("checkpoint", args.checkpoint.as_ref().map(|p| p.display()))?;
    cfg.set_opt("dataset", args.dataset.as_ref().map(|p| p.display()))?;
    cfg.set_opt("out", args.out.as_ref().map(|p| p.display()))?;
    cfg.set_opt("passes", args.passes)?;
    if args.det {
        cfg.set("det", true)?;
    }
    if args.oracle {
        cfg.set("oracle", true)?;
    }
    if args.best_perm {
        cfg.set("best_perm", true)?;
    }
    let seed = resolve::resolve_seed(&mut cfg, args.seed)?;

    let dataset = Dataset::read(&PathBuf::from(cfg.require("dataset")?))?;
    let best_perm = cfg.get_bool("best_perm")?;
    let report = if cfg.get_bool("oracle")? {
        let truths: Vec<Vec<Vec<f32>>> =
            dataset.records.iter().map(|r| r.sources.clone()).collect();
        evaluate_estimates(&truths, &dataset, best_perm)?
    } else {
        let model = load_checkpoint(&PathBuf::from(cfg.require("checkpoint")?))?;
        let opts = commands::separate_options(&cfg, seed)?;
        cfg.set("passes", opts.passes)?;
        cfg.set("det", !opts.noise)?;
        evaluate_model(&model, &dataset, &opts, best_perm)?
    };

    let out = PathBuf::from(cfg.require("out")?);
    write_report_csv(&report, &out)?;
    cfg.write(&resolve::sidecar(&out))?;

    println!(
        "evaluated {} records x {} sources -> {}",
        report.n_records,
        report.n_sources,
        out.display()
    );
    println!(
        "grand means: psnr {:.4} dB ({} capped), corr {:.4}, mixture baseline {:.4}",
        report.grand.psnr_mean,
        report.grand.sentinel_count,
        report.grand.corr_mean,
        report.grand.baseline_mean
    );
    Ok(0)
}
