use crate::{commands, resolve};
use clap::Args;
use pdsep_core::dataset::Dataset;
use pdsep_core::error::{Error, Result};
use pdsep_core::loss::LossConfig;
use pdsep_core::trainer::{train, PDualGanModel, TrainConfig};
use std::path::PathBuf;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// key=value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training dataset (PDG1).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Assert the dataset carries this many sources.
    #[arg(long)]
    n: Option<usize>,
    /// Passes over the dataset.
    #[arg(long)]
    epochs: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f32>,
    /// Critic steps per generator step.
    #[arg(long)]
    n_critic: Option<usize>,
    /// Critic regularization: clip or gp.
    #[arg(long)]
    mode: Option<String>,
    /// Clip bound c.
    #[arg(long)]
    clip: Option<f32>,
    /// Gradient-penalty weight.
    #[arg(long)]
    lambda_gp: Option<f32>,
    #[arg(long)]
    lambda_u: Option<f32>,
    #[arg(long)]
    lambda_v: Option<f32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sub-model training threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Epochs between checkpoint writes (0: final only).
    #[arg(long)]
    checkpoint_interval: Option<usize>,
    /// Training-log CSV path.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Additionally log reconstruction/penalty components.
    #[arg(long)]
    log_diagnostics: bool,
}

pub fn run(args: TrainArgs) -> Result<i32> {
    let mut cfg = resolve::load_base(&args.config)?;
    cfg.set_opt("dataset", args.dataset.as_ref().map(|p| p.display()))?;
    cfg.set_opt("out", args.out.as_ref().map(|p| p.display()))?;
    cfg.set_opt("n", args.n)?;
    cfg.set_opt("epochs", args.epochs)?;
    cfg.set_opt("lr", args.lr)?;
    cfg.set_opt("n_critic", args.n_critic)?;
    cfg.set_opt("mode", args.mode)?;
    cfg.set_opt("clip", args.clip)?;
    cfg.set_opt("lambda_gp", args.lambda_gp)?;
    cfg.set_opt("lambda_u", args.lambda_u)?;
    cfg.set_opt("lambda_v", args.lambda_v)?;
    cfg.set_opt("workers", args.workers)?;
    cfg.set_opt("checkpoint_interval", args.checkpoint_interval)?;
    cfg.set_opt("log", args.log.as_ref().map(|p| p.display()))?;
    if args.log_diagnostics {
        cfg.set("log_diagnostics", true)?;
    }
    let seed = resolve::resolve_seed(&mut cfg, args.seed)?;

    let dataset_path = PathBuf::from(cfg.require("dataset")?);
    let dataset = Dataset::read(&dataset_path)?;
    if let Some(expect_n) = cfg.get_parsed::<usize>("n")? {
        if expect_n != dataset.manifest.n {
            return Err(Error::ShapeMismatch {
                op: "train --n",
                lhs: vec![expect_n],
                rhs: vec![dataset.manifest.n],
            });
        }
    }
    cfg.set("n", dataset.manifest.n)?;

    let loss = LossConfig {
        lambda_u: cfg.get_or("lambda_u", 1000.0)?,
        lambda_v: cfg.get_or("lambda_v", 1000.0)?,
        mode: cfg.get("mode").unwrap_or("clip").to_string(),
        clip_c: cfg.get_or("clip", 0.05)?,
        lambda_gp: cfg.get_or("lambda_gp", 10.0)?,
    };
    for warning in loss.lambda_warnings() {
        eprintln!("warning: {warning}");
    }
    let out = PathBuf::from(cfg.require("out")?);
    let train_cfg = TrainConfig {
        n_critic: cfg.get_or("n_critic", 3)?,
        learning_rate: cfg.get_or("lr", 5e-5)?,
        rho: cfg.get_or("rho", 0.9)?,
        epsilon: cfg.get_or("eps", 1e-8)?,
        batch_size: cfg.get_or("batch", 1usize)?,
        epochs: cfg.get_or("epochs", 2000usize)?,
        loss,
        base_seed: seed,
        checkpoint_interval: cfg.get_or("checkpoint_interval", 0usize)?,
        checkpoint_path: Some(out.clone()),
        workers: cfg.get_or("workers", 1usize)?,
        log_diagnostics: cfg.get_bool("log_diagnostics")?,
    };
    train_cfg.validate()?;

    // Freeze everything that shaped the run.
    cfg.set("epochs", train_cfg.epochs)?;
    cfg.set("lr", train_cfg.learning_rate)?;
    cfg.set("n_critic", train_cfg.n_critic)?;
    cfg.set("rho", train_cfg.rho)?;
    cfg.set("eps", train_cfg.epsilon)?;
    cfg.set("batch", train_cfg.batch_size)?;
    cfg.set("mode", &train_cfg.loss.mode)?;
    cfg.set("clip", train_cfg.loss.clip_c)?;
    cfg.set("lambda_gp", train_cfg.loss.lambda_gp)?;
    cfg.set("lambda_u", train_cfg.loss.lambda_u)?;
    cfg.set("lambda_v", train_cfg.loss.lambda_v)?;
    cfg.set("workers", train_cfg.workers)?;
    cfg.set("checkpoint_interval", train_cfg.checkpoint_interval)?;
    cfg.set("log_diagnostics", train_cfg.log_diagnostics)?;

    let desc = commands::arch_from_config(&cfg, &dataset.manifest.shape)?;
    commands::arch_to_config(&mut cfg, &desc)?;
    cfg.write(&resolve::sidecar(&out))?;

    let mut model = PDualGanModel::init(desc, dataset.manifest.n, seed)?;
    let log = train(&mut model, &dataset, &train_cfg)?;
    // train() wrote the final checkpoint; persist the log if requested.
    if let Some(log_path) = cfg.get("log") {
        log.write_csv(&PathBuf::from(log_path))?;
    }
    println!(
        "trained {} sub-models for {} epochs x {} records ({} log rows); checkpoint: {}",
        model.n(),
        train_cfg.epochs,
        dataset.len(),
        log.len(),
        out.display()
    );
    Ok(0)
}
