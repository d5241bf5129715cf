//! Property-based invariants of the backbone, mixing engine, and metrics.

use pdsep_core::config::RunConfig;
use pdsep_core::dataset::Dataset;
use pdsep_core::metrics::{correlation, psnr};
use pdsep_core::mixing::{
    mix_convolutive, mix_instantaneous, peak_normalize, synth_dataset, MixKind,
};
use pdsep_core::optim::clip_weights;
use pdsep_core::sources;
use pdsep_core::tape::Tape;
use pdsep_core::tensor::Tensor;
use proptest::prelude::*;

fn small_signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len..=len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_is_linear_in_its_input(
        x in prop::collection::vec(-1.0f32..1.0, 24),
        y in prop::collection::vec(-1.0f32..1.0, 24),
        w in prop::collection::vec(-0.5f32..0.5, 2 * 2 * 3),
        a in -2.0f32..2.0,
        b in -2.0f32..2.0,
    ) {
        let xs = Tensor::new(vec![2, 12], x.clone()).unwrap();
        let ys = Tensor::new(vec![2, 12], y.clone()).unwrap();
        let combo_data: Vec<f32> = x.iter().zip(&y).map(|(&xv, &yv)| a * xv + b * yv).collect();
        let combo = Tensor::new(vec![2, 12], combo_data).unwrap();
        let wt = Tensor::new(vec![2, 2, 3], w).unwrap();

        let mut tape = Tape::new();
        let (xi, yi, ci, wi) = (
            tape.leaf(&xs),
            tape.leaf(&ys),
            tape.leaf(&combo),
            tape.leaf(&wt),
        );
        let cx = tape.conv1d(xi, wi, None, 1, 1).unwrap();
        let cy = tape.conv1d(yi, wi, None, 1, 1).unwrap();
        let cc = tape.conv1d(ci, wi, None, 1, 1).unwrap();
        for ((&cv, &xv), &yv) in tape
            .value(cc)
            .iter()
            .zip(tape.value(cx))
            .zip(tape.value(cy))
        {
            prop_assert!((cv - (a * xv + b * yv)).abs() < 1e-6 * (1.0 + cv.abs()));
        }
    }

    #[test]
    fn clip_is_idempotent(
        vals in prop::collection::vec(-2.0f32..2.0, 1..40),
        c in 0.001f32..1.0,
    ) {
        let mut t = Tensor::new(vec![vals.len()], vals).unwrap();
        clip_weights([&mut t], c).unwrap();
        prop_assert!(t.data().iter().all(|v| v.abs() <= c));
        let once = t.clone();
        clip_weights([&mut t], c).unwrap();
        prop_assert_eq!(t.data(), once.data());
    }

    #[test]
    fn mixing_is_linear_in_each_source(
        s1 in small_signal(16),
        s2 in small_signal(16),
        delta in small_signal(16),
        w1 in 0.1f64..2.0,
        w2 in 0.1f64..2.0,
    ) {
        // Pre-normalization mixing is linear: perturbing s2 by delta changes
        // the raw mixture by exactly w2 * delta.
        let spec = pdsep_core::mixing::MixingSpec {
            kind: MixKind::Instantaneous,
            params: pdsep_core::mixing::MixParams::Weights(vec![w1, w2]),
            seed: 0,
            peak_scale: None,
        };
        let model = pdsep_core::mixing::mixing_model(MixKind::Instantaneous);
        let base = model
            .mix_raw(&[s1.clone(), s2.clone()], &[16], &spec)
            .unwrap();
        let s2d: Vec<f64> = s2.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let moved = model.mix_raw(&[s1, s2d], &[16], &spec).unwrap();
        for ((&m, &b), &d) in moved.iter().zip(&base).zip(&delta) {
            prop_assert!((m - b - w2 * d).abs() < 1e-12);
        }
    }

    #[test]
    fn peak_normalization_reaches_exactly_one(
        mut x in prop::collection::vec(-3.0f64..3.0, 4..64),
    ) {
        prop_assume!(x.iter().any(|&v| v != 0.0));
        peak_normalize(&mut x).unwrap();
        let peak = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        prop_assert_eq!(peak, 1.0);
    }

    #[test]
    fn correlation_scale_and_shift_invariance(
        x in small_signal(32),
        y in small_signal(32),
        a in 0.01f64..10.0,
        b in -5.0f64..5.0,
    ) {
        prop_assume!(x.iter().any(|&v| (v - x[0]).abs() > 1e-6));
        prop_assume!(y.iter().any(|&v| (v - y[0]).abs() > 1e-6));
        let r = correlation(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|&v| a * v + b).collect();
        prop_assert!((correlation(&xs, &y).unwrap() - r).abs() < 1e-9);
        let xneg: Vec<f64> = x.iter().map(|&v| -a * v + b).collect();
        prop_assert!((correlation(&xneg, &y).unwrap() + r).abs() < 1e-9);
    }

    #[test]
    fn psnr_symmetry(
        x in small_signal(16),
        y in small_signal(16),
    ) {
        prop_assume!(x != y);
        let ab = psnr(&x, &y, 1.0).unwrap();
        let ba = psnr(&y, &x, 1.0).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn dataset_round_trip_bit_exact(
        count in 1usize..4,
        seed in 0u64..1000,
        conv in prop::bool::ANY,
    ) {
        let kind = if conv { MixKind::Convolutive } else { MixKind::Instantaneous };
        let bank = sources::bank(&["sinusoid", "sawtooth", "square"], &[32], seed).unwrap();
        let ds = synth_dataset(&bank, &[32], count, kind, 3, 4, seed).unwrap();
        let bytes = ds.to_bytes();
        let back = Dataset::from_bytes(&bytes, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        for (a, b) in back.records.iter().zip(&ds.records) {
            prop_assert_eq!(&a.mixture, &b.mixture);
            prop_assert_eq!(&a.sources, &b.sources);
        }
    }

    #[test]
    fn run_config_render_parse_identity(
        seed in 0u64..u64::MAX,
        epochs in 1usize..100000,
        lr in 1e-6f32..1.0,
    ) {
        let mut cfg = RunConfig::new();
        cfg.set("seed", seed).unwrap();
        cfg.set("epochs", epochs).unwrap();
        cfg.set("lr", lr).unwrap();
        let rendered = cfg.render();
        let back = RunConfig::parse_str(&rendered).unwrap();
        prop_assert_eq!(back.render(), rendered);
        prop_assert_eq!(back.get_or::<u64>("seed", 0).unwrap(), seed);
        prop_assert_eq!(back.get_or::<f32>("lr", 0.0).unwrap(), lr);
    }
}

#[test]
fn convolutive_impulse_degeneracy_exact() {
    // mix_convolutive with single-tap kernels w equals mix_instantaneous(w).
    let bank = sources::bank(&["sinusoid", "noise"], &[64], 9).unwrap();
    let weights = [0.83, -0.41];
    let kernels: Vec<Vec<f64>> = weights.iter().map(|&w| vec![w]).collect();
    let (xc, _) = mix_convolutive(&bank, &[64], &kernels).unwrap();
    let (xi, _) = mix_instantaneous(&bank, &[64], &weights).unwrap();
    for (a, b) in xc.iter().zip(&xi) {
        assert!((a - b).abs() < 1e-12);
    }
}
