//! Wall-clock of a short real training run, sequential vs two workers.

use pdsep_core::mixing::{synth_dataset, MixKind};
use pdsep_core::nets::ArchDescriptor;
use pdsep_core::sources;
use pdsep_core::trainer::{train, PDualGanModel, TrainConfig};
use std::time::Instant;

fn main() {
    let bank = sources::bank(&["sinusoid", "sawtooth"], &[256], 3).unwrap();
    let ds = synth_dataset(&bank, &[256], 20, MixKind::Instantaneous, 2, 1, 42).unwrap();
    for workers in [1usize, 2] {
        let cfg = TrainConfig {
            epochs: 10,
            base_seed: 5,
            workers,
            ..TrainConfig::default()
        };
        let mut model = PDualGanModel::init(ArchDescriptor::desk_1d(256), 2, 5).unwrap();
        let start = Instant::now();
        let log = train(&mut model, &ds, &cfg).unwrap();
        let dt = start.elapsed();
        let steps = 10 * 20;
        eprintln!(
            "workers={workers}: {steps} steps in {dt:?} -> {:.2} ms/step, 400k steps ~ {:.1} min  (log {} rows)",
            dt.as_secs_f64() * 1e3 / steps as f64,
            dt.as_secs_f64() / steps as f64 * 400_000.0 / 60.0,
            log.len()
        );
    }
}
