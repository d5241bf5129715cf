//! Times one desk-scale train step (N=2, T=256) and projects a full run.
//!
//!     cargo run --release -p pdsep-core --example bench_train_step

use pdsep_core::mixing::{synth_dataset, MixKind};
use pdsep_core::nets::ArchDescriptor;
use pdsep_core::sources;
use pdsep_core::trainer::{noise_streams, train_step, PDualGanModel, TrainConfig, TrainLog};
use std::time::Instant;

fn main() {
    let desc = ArchDescriptor::desk_1d(256);
    let bank = sources::bank(&["sinusoid", "sawtooth"], &[256], 3).unwrap();
    let ds = synth_dataset(&bank, &[256], 8, MixKind::Instantaneous, 2, 1, 42).unwrap();
    let cfg = TrainConfig::default();
    let mut model = PDualGanModel::init(desc, 2, 1).unwrap();
    let mut rngs = noise_streams(2, cfg.base_seed);
    let mut log = TrainLog::new();

    // Warm up.
    for rec in &ds.records {
        train_step(&mut model, rec, &cfg, &mut rngs, &mut log).unwrap();
    }
    let iters = 50;
    let start = Instant::now();
    for k in 0..iters {
        let rec = &ds.records[k % ds.len()];
        train_step(&mut model, rec, &cfg, &mut rngs, &mut log).unwrap();
    }
    let elapsed = start.elapsed();
    let per_step = elapsed / iters as u32;
    let run_steps = 2000u64 * 200;
    eprintln!("per train_step (N=2, sequential): {per_step:?}");
    eprintln!(
        "projected 2000 epochs x 200 records, sequential: {:.1} min",
        per_step.as_secs_f64() * run_steps as f64 / 60.0
    );
}
