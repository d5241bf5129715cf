//! Times the pieces of one training step separately.

use pdsep_core::loss::{critic_loss_taped, generator_loss_taped, LossConfig};
use pdsep_core::nets::*;
use pdsep_core::tape::Tape;
use pdsep_core::trainer::{noise_streams, PDualGanModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let desc = ArchDescriptor::desk_1d(256);
    let model = PDualGanModel::init(desc.clone(), 1, 1).unwrap();
    let sub = &model.subs[0];
    let u: Vec<f32> = (0..256).map(|i| (i as f32 / 128.0) - 1.0).collect();
    let v: Vec<f32> = (0..256).map(|i| ((i % 64) as f32 / 32.0) - 1.0).collect();
    let cfg = LossConfig::default();
    let reg = cfg.regularizer().unwrap();
    let shape = desc.tensor_shape();
    let mut rng = noise_streams(1, 0).remove(0);
    let iters = 200;

    // Untaped generator forward.
    let mut t = Instant::now();
    for _ in 0..iters {
        let _ = generator_infer(&desc, &sub.g_a, &u, &mut rng, true).unwrap();
    }
    eprintln!("gen infer:               {:>8.3} ms", t.elapsed().as_secs_f64() * 1e3 / iters as f64);

    // Taped generator forward only.
    t = Instant::now();
    for _ in 0..iters {
        let mut tape = Tape::new();
        let x = tape.constant(&u, &shape);
        let ids = intern_generator(&mut tape, &sub.g_a, true);
        let _ = generator_forward_ids(&mut tape, &desc, &ids, x, &mut rng, true).unwrap();
    }
    eprintln!("gen fwd taped:           {:>8.3} ms", t.elapsed().as_secs_f64() * 1e3 / iters as f64);

    // Taped generator forward + backward through a mean-abs loss.
    t = Instant::now();
    for _ in 0..iters {
        let mut tape = Tape::new();
        let x = tape.constant(&u, &shape);
        let ids = intern_generator(&mut tape, &sub.g_a, true);
        let out = generator_forward_ids(&mut tape, &desc, &ids, x, &mut rng, true).unwrap();
        let l1 = tape.sum_abs(out).unwrap();
        tape.backward(l1).unwrap();
    }
    eprintln!("gen fwd+bwd taped:       {:>8.3} ms", t.elapsed().as_secs_f64() * 1e3 / iters as f64);

    // One critic update loss (fake computed inline) + backward.
    t = Instant::now();
    for _ in 0..iters {
        let mut tape = Tape::new();
        let u_id = tape.constant(&u, &shape);
        let v_id = tape.constant(&v, &shape);
        let ga = intern_generator(&mut tape, &sub.g_a, false);
        let fake = generator_forward_ids(&mut tape, &desc, &ga, u_id, &mut rng, true).unwrap();
        let da = intern_critic(&mut tape, &sub.d_a, true);
        let (loss, _) =
            critic_loss_taped(&mut tape, &desc, &da, fake, v_id, reg.as_ref(), &mut rng)
                .unwrap();
        tape.backward(loss).unwrap();
    }
    eprintln!("critic update loss+bwd:  {:>8.3} ms", t.elapsed().as_secs_f64() * 1e3 / iters as f64);

    // Full generator loss + backward.
    t = Instant::now();
    for _ in 0..iters {
        let mut tape = Tape::new();
        let u_id = tape.constant(&u, &shape);
        let v_id = tape.constant(&v, &shape);
        let ga = intern_generator(&mut tape, &sub.g_a, true);
        let gb = intern_generator(&mut tape, &sub.g_b, true);
        let da = intern_critic(&mut tape, &sub.d_a, false);
        let db = intern_critic(&mut tape, &sub.d_b, false);
        let (loss, _) = generator_loss_taped(
            &mut tape, &desc, &ga, &gb, &da, &db, u_id, v_id, &cfg, &mut rng,
        )
        .unwrap();
        tape.backward(loss).unwrap();
    }
    eprintln!("gen loss fwd+bwd:        {:>8.3} ms", t.elapsed().as_secs_f64() * 1e3 / iters as f64);
}
