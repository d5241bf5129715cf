//! Micro-benchmarks: raw generator inference vs full train step, to see
//! where the time goes.

use pdsep_core::nets::{generator_infer, init_generator, ArchDescriptor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let desc = ArchDescriptor::desk_1d(256);
    let p = init_generator(&desc, 1);
    let input: Vec<f32> = (0..256).map(|i| (i as f32 / 128.0) - 1.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // ~2.28M MACs per forward.
    let iters = 500;
    let mut sink = 0.0f32;
    let start = Instant::now();
    for _ in 0..iters {
        let out = generator_infer(&desc, &p, &input, &mut rng, true).unwrap();
        sink += out[0];
    }
    let dt = start.elapsed();
    let per = dt.as_secs_f64() / iters as f64;
    eprintln!(
        "generator_infer: {:.3} ms  (~{:.2} GMAC/s)  sink={sink}",
        per * 1e3,
        2.28e6 / per / 1e9
    );
}
