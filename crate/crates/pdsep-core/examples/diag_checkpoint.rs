//! Diagnoses a trained checkpoint against a labeled dataset: identity-ness
//! of G_A, critic margins, and cycle reconstruction quality.
//!
//!     cargo run --release -p pdsep-core --example diag_checkpoint -- model.pdgm test.pdg

use pdsep_core::checkpoint::load_checkpoint;
use pdsep_core::dataset::Dataset;
use pdsep_core::metrics::correlation;
use pdsep_core::nets::{
    critic_forward_ids, critic_score, generator_forward_ids, generator_infer,
    intern_critic, intern_generator,
};
use pdsep_core::tape::Tape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn f64s(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let model = load_checkpoint(Path::new(&args[1])).unwrap();
    let ds = Dataset::read(Path::new(&args[2])).unwrap();
    for i in 0..model.n() {
        let rec = &ds.records[0];
        let (rec_norm, adv_norm) = grad_split(&model, i, &rec.mixture, &rec.sources[i], 99);
        println!(
            "sub {}: |grad recon| {rec_norm:.4}  |grad adversarial| {adv_norm:.4}  ratio {:.2}",
            i + 1,
            rec_norm / adv_norm.max(1e-12)
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(123);

    for (i, sub) in model.subs.iter().enumerate() {
        let mut c_est_src = 0.0;
        let mut c_est_mix = 0.0;
        let mut c_mix_src = 0.0;
        let mut rec_err = 0.0;
        let mut d_real = 0.0;
        let mut d_fake = 0.0;
        for rec in &ds.records {
            let u = &rec.mixture;
            let s = &rec.sources[i];
            let est = generator_infer(&model.desc, &sub.g_a, u, &mut rng, true).unwrap();
            let back = generator_infer(&model.desc, &sub.g_b, &est, &mut rng, true).unwrap();
            c_est_src += correlation(&f64s(&est), &f64s(s)).unwrap();
            c_est_mix += correlation(&f64s(&est), &f64s(u)).unwrap();
            c_mix_src += correlation(&f64s(u), &f64s(s)).unwrap();
            rec_err += u
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs() as f64)
                .sum::<f64>()
                / u.len() as f64;
            d_real += critic_score(&model.desc, &sub.d_a, s).unwrap() as f64;
            d_fake += critic_score(&model.desc, &sub.d_a, &est).unwrap() as f64;
        }
        let n = ds.len() as f64;
        println!(
            "sub {}: corr(est,src) {:+.3} | corr(est,mix) {:+.3} | baseline {:+.3} | cycle L1 {:.4} | D(real) {:+.4} D(fake) {:+.4}",
            i + 1,
            c_est_src / n,
            c_est_mix / n,
            c_mix_src / n,
            rec_err / n,
            d_real / n,
            d_fake / n
        );
    }
}

/// Gradient decomposition on one record: L2 norms over G_A parameters of
/// the reconstruction pull vs the adversarial pull.
fn grad_split(
    model: &pdsep_core::trainer::PDualGanModel,
    sub_idx: usize,
    u: &[f32],
    v: &[f32],
    seed: u64,
) -> (f64, f64) {
    let desc = &model.desc;
    let sub = &model.subs[sub_idx];
    let shape = desc.tensor_shape();
    let norm_of = |loss_kind: u8| -> f64 {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u_id = tape.constant(u, &shape);
        let v_id = tape.constant(v, &shape);
        let ga = intern_generator(&mut tape, &sub.g_a, true);
        let gb = intern_generator(&mut tape, &sub.g_b, true);
        let da = intern_critic(&mut tape, &sub.d_a, false);
        let db = intern_critic(&mut tape, &sub.d_b, false);
        let fake_v = generator_forward_ids(&mut tape, desc, &ga, u_id, &mut rng, true).unwrap();
        let rec_u = generator_forward_ids(&mut tape, desc, &gb, fake_v, &mut rng, true).unwrap();
        let fake_u = generator_forward_ids(&mut tape, desc, &gb, v_id, &mut rng, true).unwrap();
        let rec_v = generator_forward_ids(&mut tape, desc, &ga, fake_u, &mut rng, true).unwrap();
        let loss = if loss_kind == 0 {
            // lambda-weighted mean-L1 cycle terms
            let d1 = tape.sub(u_id, rec_u).unwrap();
            let l1 = tape.sum_abs(d1).unwrap();
            let t1 = tape.mul_scalar(l1, 1000.0 / u.len() as f32).unwrap();
            let d2 = tape.sub(v_id, rec_v).unwrap();
            let l2 = tape.sum_abs(d2).unwrap();
            let t2 = tape.mul_scalar(l2, 1000.0 / v.len() as f32).unwrap();
            tape.add(t1, t2).unwrap()
        } else {
            let sa = critic_forward_ids(&mut tape, desc, &da, fake_v).unwrap();
            let sb = critic_forward_ids(&mut tape, desc, &db, fake_u).unwrap();
            let s = tape.add(sa, sb).unwrap();
            tape.mul_scalar(s, -1.0).unwrap()
        };
        tape.backward(loss).unwrap();
        let mut total = 0.0f64;
        for id in ga.all_ids() {
            if let Some(g) = tape.grad(id) {
                total += g.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>();
            }
        }
        total.sqrt()
    };
    (norm_of(0), norm_of(1))
}
