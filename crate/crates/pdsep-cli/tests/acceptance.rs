//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measurements. Criterion 5 trains full desk-scale models and takes by
//! far the longest; run with `--nocapture` to watch per-seed progress.

use pdsep_core::checkpoint::{checkpoint_bytes, checkpoint_from_bytes};
use pdsep_core::gradcheck;
use pdsep_core::loss::{critic_loss_from_parts, generator_loss_from_parts, LossConfig};
use pdsep_core::metrics::{correlation, evaluate_model, mse, psnr, PSNR_SENTINEL_DB};
use pdsep_core::mixing::{
    mix_convolutive, mix_instantaneous, spec_from_seed, synth_dataset, MixKind, MixParams,
};
use pdsep_core::nets::ArchDescriptor;
use pdsep_core::sources;
use pdsep_core::trainer::{
    noise_streams, separate, train, train_step, LossKind, PDualGanModel, SeparateOptions,
    TrainConfig, TrainLog,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

fn bank_1d(t: usize) -> Vec<Vec<f64>> {
    sources::bank(&["sinusoid", "sawtooth"], &[t], 3).unwrap()
}

#[test]
fn criterion_1_gradient_suite() {
    let start = Instant::now();
    let report = gradcheck::run_suite(1e-3, 100, 20260810, None).unwrap();
    let elapsed = start.elapsed();
    let worst = report
        .ops
        .iter()
        .map(|o| o.max_rel_err)
        .fold(0.0f64, f64::max);
    assert!(
        report.all_passed(),
        "failed ops: {:?}",
        report.failed_ops()
    );
    assert!(
        elapsed.as_secs() < 120,
        "gradient suite took {elapsed:?}, budget 2 min"
    );
    println!(
        "ACCEPTANCE 1 gradient-suite: PASS ({} ops x 100 cases, worst rel err {worst:.2e}, {elapsed:.2?})",
        report.ops.len()
    );
}

/// Independent double-loop convolution oracle: y[t] = sum_v a[t-v] s[v].
fn conv_oracle_1d(kernel: &[f64], s: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; s.len()];
    for (t, yt) in y.iter_mut().enumerate() {
        for (v, &sv) in s.iter().enumerate().take(t + 1) {
            if t - v < kernel.len() {
                *yt += kernel[t - v] * sv;
            }
        }
    }
    y
}

#[test]
fn criterion_2_mixing_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut max_err = 0.0f64;
    for case in 0..1000 {
        let n = 2 + (case % 3);
        let t = 32 + rng.random_range(0..225);
        let k = 1 + rng.random_range(0..8);
        let sources: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..t).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let spec = spec_from_seed(MixKind::Convolutive, n, k, rng.random());
        let MixParams::Kernels(kernels) = &spec.params else {
            unreachable!()
        };
        let (mixed, info) = mix_convolutive(&sources, &[t], kernels).unwrap();
        // Oracle: superpose per-source double-loop convolutions, then apply
        // the same normalization factor (division by the peak).
        let mut expect = vec![0.0f64; t];
        for (kern, src) in kernels.iter().zip(&sources) {
            for (e, y) in expect.iter_mut().zip(conv_oracle_1d(kern, src)) {
                *e += y;
            }
        }
        let peak = 1.0 / info.peak_scale.unwrap();
        for e in expect.iter_mut() {
            *e /= peak;
        }
        for (a, b) in mixed.iter().zip(&expect) {
            max_err = max_err.max((a - b).abs());
        }
    }
    assert!(max_err < 1e-12, "max deviation {max_err:e}");

    // Impulse-kernel degeneracy to the instantaneous model holds exactly.
    let srcs = bank_1d(128);
    let weights = [1.25, -0.5];
    let kernels: Vec<Vec<f64>> = weights.iter().map(|&w| vec![w]).collect();
    let (xc, _) = mix_convolutive(&srcs, &[128], &kernels).unwrap();
    let (xi, _) = mix_instantaneous(&srcs, &[128], &weights).unwrap();
    assert_eq!(xc, xi, "impulse degeneracy must be exact");
    println!("ACCEPTANCE 2 mixing-oracle: PASS (1000 cases, max err {max_err:.2e}; impulse degeneracy exact)");
}

#[test]
fn criterion_3_metric_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..50 {
        let x: Vec<f64> = (0..64).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((correlation(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((correlation(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        // scale/shift invariance at 1e-9
        let y: Vec<f64> = (0..64).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let r = correlation(&x, &y).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| 3.7 * v + 0.9).collect();
        assert!((correlation(&scaled, &y).unwrap() - r).abs() < 1e-9);
    }
    // PSNR rises by 10*log10(2) ~ 3.0103 dB when MSE halves.
    let zeros = vec![0.0f64; 32];
    let h1: Vec<f64> = (0..32).map(|i| 0.2 * ((i % 5) as f64 - 2.0)).collect();
    let h2: Vec<f64> = h1.iter().map(|v| v / 2f64.sqrt()).collect();
    let m1 = mse(&zeros, &h1).unwrap();
    let m2 = mse(&zeros, &h2).unwrap();
    assert!((m2 - m1 / 2.0).abs() < 1e-15);
    let delta = psnr(&zeros, &h2, 1.0).unwrap() - psnr(&zeros, &h1, 1.0).unwrap();
    assert!((delta - 10.0 * 2f64.log10()).abs() < 1e-6, "delta {delta}");
    assert!((delta - 3.0103).abs() < 1e-4);
    // Zero-MSE sentinel.
    assert_eq!(psnr(&h1, &h1, 1.0).unwrap(), PSNR_SENTINEL_DB);
    assert_eq!(PSNR_SENTINEL_DB, 99.0);
    println!("ACCEPTANCE 3 metric-identities: PASS (r identities at 1e-12, invariance 1e-9, +3.0103 dB at 1e-6, sentinel 99 dB)");
}

#[test]
fn criterion_4_loss_algebra() {
    let cfg = LossConfig::default();
    // Perfect cycle reconstruction reduces Eq. 8 to -D_B - D_A (32-bit, 1e-6).
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u: Vec<f32> = (0..128).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
    let v: Vec<f32> = (0..128).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
    for _ in 0..20 {
        let da = rng.random::<f32>() * 4.0 - 2.0;
        let db = rng.random::<f32>() * 4.0 - 2.0;
        let loss = generator_loss_from_parts(&cfg, &u, &u, &v, &v, da, db);
        assert!((loss - (-db - da)).abs() < 1e-6, "{loss} vs {}", -db - da);
    }
    // Critic losses are antisymmetric under real/fake exchange, exactly.
    for _ in 0..20 {
        let a = rng.random::<f32>() * 4.0 - 2.0;
        let b = rng.random::<f32>() * 4.0 - 2.0;
        assert_eq!(
            critic_loss_from_parts(a, b),
            -critic_loss_from_parts(b, a)
        );
    }
    // Hand-substitution example: e_u=0.1, e_v=0.2, lambdas 1000, critic
    // outputs 0.3 and 0.4 -> 299.3. Short arrays keep the f32 mean within
    // the stated 1e-4 of the exact values.
    let u1 = vec![0.1f32; 8];
    let z = vec![0.0f32; 8];
    let v1 = vec![0.2f32; 8];
    let loss = generator_loss_from_parts(&cfg, &u1, &z, &v1, &z, 0.4, 0.3);
    assert!((loss - 299.3).abs() < 1e-4, "{loss}");
    println!("ACCEPTANCE 4 loss-algebra: PASS (perfect-cycle reduction 1e-6, exact antisymmetry, 299.3 within 1e-4)");
}

/// One full desk-scale experiment for criterion 5. Stops early once the
/// ">= 4 of 5 seeds" requirement is mathematically unreachable.
fn desk_scale_kind(kind: MixKind, corr_bar: f64, k_len: usize) -> (usize, f64) {
    let t = 256;
    let bank = bank_1d(t);
    let mut passes = 0;
    let mut max_minutes = 0.0f64;
    for seed in 1..=5u64 {
        if passes + (5 - seed as usize + 1) < 4 {
            eprintln!(
                "[criterion 5 {}] stopping early: 4/5 no longer reachable",
                kind.name()
            );
            break;
        }
        let train_ds =
            synth_dataset(&bank, &[t], 200, kind, 2, k_len, 10_000 + seed).unwrap();
        let test_ds =
            synth_dataset(&bank, &[t], 20, kind, 2, k_len, 20_000 + seed).unwrap();
        let mut model = PDualGanModel::init(ArchDescriptor::desk_1d(t), 2, seed).unwrap();
        let cfg = TrainConfig {
            base_seed: seed,
            workers: 2,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.epochs, 2000, "criterion trains with the default epochs");
        let start = Instant::now();
        train(&mut model, &train_ds, &cfg).unwrap();
        let minutes = start.elapsed().as_secs_f64() / 60.0;
        max_minutes = max_minutes.max(minutes);

        let report = evaluate_model(
            &model,
            &test_ds,
            &SeparateOptions {
                seed: 777,
                passes: 1,
                noise: true,
            },
            false,
        )
        .unwrap();
        let ok = report
            .per_source
            .iter()
            .all(|s| s.corr_mean >= corr_bar && s.corr_mean > s.baseline_mean);
        if ok {
            passes += 1;
        }
        eprintln!(
            "[criterion 5 {} seed {seed}] corr {:?} baseline {:?} ({:.1} min) -> {}",
            kind.name(),
            report
                .per_source
                .iter()
                .map(|s| (s.corr_mean * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            report
                .per_source
                .iter()
                .map(|s| (s.baseline_mean * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            minutes,
            if ok { "pass" } else { "fail" }
        );
    }
    (passes, max_minutes)
}

#[test]
fn criterion_5_desk_scale_separation() {
    // The 30-minute bound presumes a 4-core CPU; scale it linearly when the
    // host has fewer cores.
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let bound_minutes = 30.0 * 4.0 / cores.min(4) as f64;
    eprintln!(
        "[criterion 5] host has {cores} cpu(s); per-run bound {bound_minutes:.0} min"
    );

    let (inst_passes, inst_minutes) = desk_scale_kind(MixKind::Instantaneous, 0.8, 1);
    assert!(
        inst_passes >= 4,
        "instantaneous separation passed in only {inst_passes}/5 seeds"
    );
    let (conv_passes, conv_minutes) = desk_scale_kind(MixKind::Convolutive, 0.6, 8);
    assert!(
        conv_passes >= 4,
        "convolutive separation passed in only {conv_passes}/5 seeds"
    );
    let slowest = inst_minutes.max(conv_minutes);
    assert!(
        slowest < bound_minutes,
        "slowest training run took {slowest:.1} min, bound {bound_minutes:.0} min"
    );
    println!(
        "ACCEPTANCE 5 desk-scale-separation: PASS (instantaneous {inst_passes}/5, convolutive {conv_passes}/5, slowest run {slowest:.1} min < {bound_minutes:.0} min)"
    );
}

#[test]
fn criterion_6_training_mechanics() {
    let mut desc = ArchDescriptor::desk_1d(64);
    desc.gen_channels = vec![4, 8];
    desc.critic_channels = vec![4, 8];
    let bank = bank_1d(64);
    let ds = synth_dataset(&bank, &[64], 3, MixKind::Instantaneous, 2, 1, 5).unwrap();

    // Schedule: exactly n_critic critic pairs then one generator step.
    let mut model = PDualGanModel::init(desc.clone(), 2, 1).unwrap();
    let cfg = TrainConfig {
        n_critic: 3,
        epochs: 2,
        base_seed: 9,
        ..TrainConfig::default()
    };
    let log = train(&mut model, &ds, &cfg).unwrap();
    assert_eq!(log.len(), 2 * 3 * 2 * (2 * 3 + 1), "log-count formula");
    let first: Vec<LossKind> = log
        .entries()
        .iter()
        .filter(|e| e.submodel == 1 && e.step == 0)
        .map(|e| e.kind)
        .collect();
    assert_eq!(
        first,
        vec![
            LossKind::CriticA,
            LossKind::CriticB,
            LossKind::CriticA,
            LossKind::CriticB,
            LossKind::CriticA,
            LossKind::CriticB,
            LossKind::Generator
        ]
    );

    // Clip mode: every critic weight within [-c, c] after every step.
    let c = cfg.loss.clip_c;
    let mut model2 = PDualGanModel::init(desc.clone(), 2, 2).unwrap();
    let mut rngs = noise_streams(2, 7);
    let mut log2 = TrainLog::new();
    for rec in &ds.records {
        train_step(&mut model2, rec, &cfg, &mut rngs, &mut log2).unwrap();
        for sub in &model2.subs {
            for params in [&sub.d_a, &sub.d_b] {
                for (name, t) in params.named_tensors() {
                    assert!(
                        t.data().iter().all(|v| v.abs() <= c),
                        "critic weight {name} outside [-{c}, {c}]"
                    );
                }
            }
        }
    }

    // Zero learning rate: parameters bit-identical (from a feasible state,
    // i.e. critics already inside the clip region).
    let mut model3 = PDualGanModel::init(desc, 2, 3).unwrap();
    for sub in &mut model3.subs {
        pdsep_core::optim::clip_weights(sub.d_a.tensors_mut(), c).unwrap();
        pdsep_core::optim::clip_weights(sub.d_b.tensors_mut(), c).unwrap();
    }
    let before = model3.clone();
    let frozen = TrainConfig {
        learning_rate: 0.0,
        epochs: 1,
        base_seed: 4,
        ..TrainConfig::default()
    };
    train(&mut model3, &ds, &frozen).unwrap();
    for (a, b) in model3.subs.iter().zip(&before.subs) {
        for (nets_a, nets_b) in [
            (a.g_a.named_tensors(), b.g_a.named_tensors()),
            (a.g_b.named_tensors(), b.g_b.named_tensors()),
            (a.d_a.named_tensors(), b.d_a.named_tensors()),
            (a.d_b.named_tensors(), b.d_b.named_tensors()),
        ] {
            for ((_, ta), (_, tb)) in nets_a.iter().zip(&nets_b) {
                assert!(
                    ta.data()
                        .iter()
                        .zip(tb.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits()),
                    "zero-lr changed a parameter"
                );
            }
        }
    }
    println!("ACCEPTANCE 6 training-mechanics: PASS (schedule D^3 G, clip range enforced, zero-lr bit-identical)");
}

#[test]
fn criterion_7_determinism_and_persistence() {
    let mut desc = ArchDescriptor::desk_1d(64);
    desc.gen_channels = vec![4, 8];
    desc.critic_channels = vec![4, 8];
    let bank = bank_1d(64);
    let ds = synth_dataset(&bank, &[64], 4, MixKind::Instantaneous, 2, 1, 5).unwrap();

    // Parallel vs sequential training: bit-identical checkpoints.
    let run = |workers: usize| {
        let mut model = PDualGanModel::init(desc.clone(), 2, 11).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            base_seed: 11,
            workers,
            ..TrainConfig::default()
        };
        train(&mut model, &ds, &cfg).unwrap();
        checkpoint_bytes(&model)
    };
    let seq = run(1);
    let par = run(2);
    assert_eq!(seq, par, "parallel and sequential checkpoints differ");

    // Checkpoint round trip is bit-exact.
    let model = checkpoint_from_bytes(&seq, Path::new("mem")).unwrap();
    assert_eq!(checkpoint_bytes(&model), seq);
    // And separation is identical before/after the round trip.
    let mixture = ds.records[0].mixture.clone();
    let opts = SeparateOptions {
        seed: 3,
        passes: 2,
        noise: true,
    };
    let m2 = checkpoint_from_bytes(&seq, Path::new("mem")).unwrap();
    assert_eq!(
        separate(&model, &mixture, &opts).unwrap(),
        separate(&m2, &mixture, &opts).unwrap()
    );

    // Dataset synthesis is byte-identical across reruns.
    let a = synth_dataset(&bank, &[64], 10, MixKind::Convolutive, 2, 8, 99)
        .unwrap()
        .to_bytes();
    let b = synth_dataset(&bank, &[64], 10, MixKind::Convolutive, 2, 8, 99)
        .unwrap()
        .to_bytes();
    assert_eq!(a, b);
    println!("ACCEPTANCE 7 determinism-persistence: PASS (parallel==sequential, round-trip bit-exact, datasets byte-identical)");
}

#[test]
fn criterion_8_cli_end_to_end() {
    let bin = env!("CARGO_BIN_EXE_pdsep");
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    let run = |args: &[&str]| {
        let out = Command::new(bin)
            .args(args)
            .current_dir(dir.path())
            .output()
            .unwrap();
        (
            out.status.code().unwrap_or(-1),
            String::from_utf8_lossy(&out.stdout).to_string(),
            String::from_utf8_lossy(&out.stderr).to_string(),
        )
    };

    let (code, _, err) = run(&[
        "synth", "--kind", "inst", "--n", "2", "--count", "4", "--t", "64", "--seed", "7",
        "--out", &p("d.pdg"),
    ]);
    assert_eq!(code, 0, "synth failed: {err}");
    let (code, _, err) = run(&[
        "train", "--dataset", &p("d.pdg"), "--out", &p("m.pdgm"), "--epochs", "1", "--seed",
        "3", "--log", &p("log.csv"),
    ]);
    assert_eq!(code, 0, "train failed: {err}");
    let (code, _, err) = run(&[
        "separate", "--checkpoint", &p("m.pdgm"), "--dataset", &p("d.pdg"), "--record", "0",
        "--out-prefix", &p("est"),
    ]);
    assert_eq!(code, 0, "separate failed: {err}");
    assert!(dir.path().join("est_s1.raw").exists());
    assert!(dir.path().join("est_s2.raw").exists());
    let (code, _, err) = run(&[
        "eval", "--checkpoint", &p("m.pdgm"), "--dataset", &p("d.pdg"), "--out",
        &p("metrics.csv"),
    ]);
    assert_eq!(code, 0, "eval failed: {err}");

    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "record,source,psnr_db,corr,baseline_corr"
    );
    // 4 records x 2 sources + 2 per-source means + 1 grand mean
    assert_eq!(csv.trim_end().lines().count(), 1 + 8 + 2 + 1);

    // Oracle mode: every correlation is exactly 1.
    let (code, _, err) = run(&[
        "eval", "--dataset", &p("d.pdg"), "--out", &p("oracle.csv"), "--oracle",
    ]);
    assert_eq!(code, 0, "oracle eval failed: {err}");
    let oracle = std::fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    for line in oracle.lines().skip(1) {
        let corr: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((corr - 1.0).abs() < 1e-9, "oracle row not 1.0: {line}");
    }
    println!("ACCEPTANCE 8 cli-end-to-end: PASS (synth -> train -> separate -> eval, oracle all r=1)");
}
