//! Adversarial and cycle losses for the parallel dual pairs, with two
//! interchangeable critic-regularization strategies: weight clipping and
//! gradient penalty, selected by name.
//!
//! Reconstruction distance is the mean absolute deviation, so the lambda
//! weights are resolution-independent.

use crate::error::{Error, Result};
use crate::nets::{
    critic_forward_ids, critic_input_grad_norm, generator_forward_ids, intern_critic,
    intern_generator, ArchDescriptor, CriticIds, CriticParams, GenIds, GeneratorParams,
};
use crate::optim::clip_weights;
use crate::tape::{Tape, TensorId};
use crate::tensor::Real;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const LAMBDA_MIN: Real = 100.0;
pub const LAMBDA_MAX: Real = 1000.0;

/// Loss hyperparameters; `mode` names the critic-regularization strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda_u: Real,
    pub lambda_v: Real,
    pub mode: String,
    pub clip_c: Real,
    pub lambda_gp: Real,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_u: 1000.0,
            lambda_v: 1000.0,
            mode: "clip".to_string(),
            clip_c: 0.05,
            lambda_gp: 10.0,
        }
    }
}

impl LossConfig {
    /// Default validation: lambdas within [100, 1000]. Out-of-range values
    /// are usable via `lambda_warnings` + explicit caller acknowledgement.
    pub fn validate(&self) -> Result<()> {
        if !self.lambdas_in_range() {
            return Err(Error::InvalidArgument(format!(
                "lambda_u={} lambda_v={} outside [{LAMBDA_MIN}, {LAMBDA_MAX}]",
                self.lambda_u, self.lambda_v
            )));
        }
        self.validate_mode()
    }

    pub fn validate_mode(&self) -> Result<()> {
        if self.lambda_u <= 0.0 || self.lambda_v <= 0.0 {
            return Err(Error::InvalidArgument("lambdas must be positive".into()));
        }
        self.regularizer().map(|_| ())
    }

    pub fn lambdas_in_range(&self) -> bool {
        (LAMBDA_MIN..=LAMBDA_MAX).contains(&self.lambda_u)
            && (LAMBDA_MIN..=LAMBDA_MAX).contains(&self.lambda_v)
    }

    pub fn lambda_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        for (name, v) in [("lambda_u", self.lambda_u), ("lambda_v", self.lambda_v)] {
            if !(LAMBDA_MIN..=LAMBDA_MAX).contains(&v) {
                w.push(format!(
                    "{name}={v} is outside the recommended [{LAMBDA_MIN}, {LAMBDA_MAX}]"
                ));
            }
        }
        w
    }

    /// Resolve the named critic-regularization strategy.
    pub fn regularizer(&self) -> Result<Box<dyn CriticRegularizer>> {
        make_regularizer(&self.mode, self.clip_c, self.lambda_gp)
    }
}

// ── Critic regularization strategies ─────────────────────────────────

/// A critic-side Lipschitz enforcement strategy. Clipping constrains the
/// parameters after each optimizer step; gradient penalty adds a loss term.
pub trait CriticRegularizer: Sync + Send {
    fn name(&self) -> &'static str;

    /// Extra loss term for one critic update, if this strategy has one.
    /// `real` and `fake` are the critic's inputs for this update.
    fn penalty<'p>(
        &self,
        tape: &mut Tape<'p, Real>,
        desc: &ArchDescriptor,
        critic: &CriticIds,
        real: TensorId,
        fake: TensorId,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<TensorId>>;

    /// Parameter constraint applied after each critic optimizer step.
    fn after_step(&self, critic: &mut CriticParams) -> Result<()>;
}

/// Weight clipping: every critic parameter clamped to `[-c, c]`.
pub struct WeightClip {
    pub c: Real,
}

impl CriticRegularizer for WeightClip {
    fn name(&self) -> &'static str {
        "clip"
    }

    fn penalty<'p>(
        &self,
        _tape: &mut Tape<'p, Real>,
        _desc: &ArchDescriptor,
        _critic: &CriticIds,
        _real: TensorId,
        _fake: TensorId,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Option<TensorId>> {
        Ok(None)
    }

    fn after_step(&self, critic: &mut CriticParams) -> Result<()> {
        clip_weights(critic.tensors_mut(), self.c)
    }
}

/// Gradient penalty: `lambda_gp * (||grad_x D(x_hat)|| - 1)^2` on a random
/// interpolate `x_hat` of the real and fake samples.
pub struct GradientPenalty {
    pub lambda_gp: Real,
}

impl CriticRegularizer for GradientPenalty {
    fn name(&self) -> &'static str {
        "gp"
    }

    fn penalty<'p>(
        &self,
        tape: &mut Tape<'p, Real>,
        desc: &ArchDescriptor,
        critic: &CriticIds,
        real: TensorId,
        fake: TensorId,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<TensorId>> {
        let eps: Real = rng.random::<f64>() as Real;
        let a = tape.mul_scalar(real, eps)?;
        let b = tape.mul_scalar(fake, 1.0 - eps)?;
        let x_hat = tape.add(a, b)?;
        let norm = critic_input_grad_norm(tape, desc, critic, x_hat)?;
        let excess = tape.add_scalar(norm, -1.0)?;
        let sq = tape.mul(excess, excess)?;
        Ok(Some(tape.mul_scalar(sq, self.lambda_gp)?))
    }

    fn after_step(&self, _critic: &mut CriticParams) -> Result<()> {
        Ok(())
    }
}

pub const REGULARIZER_NAMES: &[&str] = &["clip", "gp"];

/// Build the named strategy with its parameters.
pub fn make_regularizer(
    name: &str,
    clip_c: Real,
    lambda_gp: Real,
) -> Result<Box<dyn CriticRegularizer>> {
    match name {
        "clip" => {
            if clip_c <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "clip bound must be positive, got {clip_c}"
                )));
            }
            Ok(Box::new(WeightClip { c: clip_c }))
        }
        "gp" => {
            if lambda_gp <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "lambda_gp must be positive, got {lambda_gp}"
                )));
            }
            Ok(Box::new(GradientPenalty { lambda_gp }))
        }
        other => Err(Error::UnknownStrategy {
            family: "critic regularizer",
            name: other.to_string(),
            known: REGULARIZER_NAMES.join(", "),
        }),
    }
}

// ── Loss algebra (pure) ──────────────────────────────────────────────

fn mean_abs_diff(a: &[Real], b: &[Real]) -> Real {
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += (x - y).abs();
    }
    acc * (1.0 / a.len() as Real)
}

/// Generator objective from precomputed parts:
/// `lambda_u*||u - rec_u||_1 + lambda_v*||v - rec_v||_1 - D_B(fake_u) - D_A(fake_v)`
/// with mean-L1 norms.
pub fn generator_loss_from_parts(
    cfg: &LossConfig,
    u: &[Real],
    rec_u: &[Real],
    v: &[Real],
    rec_v: &[Real],
    d_a_fake: Real,
    d_b_fake: Real,
) -> Real {
    cfg.lambda_u * mean_abs_diff(u, rec_u) + cfg.lambda_v * mean_abs_diff(v, rec_v)
        - d_b_fake
        - d_a_fake
}

/// Critic objective from precomputed scores: `D(fake) - D(real)`.
pub fn critic_loss_from_parts(d_fake: Real, d_real: Real) -> Real {
    d_fake - d_real
}

// ── Taped builders ───────────────────────────────────────────────────

/// Component values of one generator-loss evaluation, for logging.
#[derive(Clone, Copy, Debug)]
pub struct GenLossBreakdown {
    pub total: Real,
    /// Mean-L1 mixture reconstruction error (before lambda scaling).
    pub recon_u: Real,
    /// Mean-L1 source reconstruction error (before lambda scaling).
    pub recon_v: Real,
    pub d_a_fake: Real,
    pub d_b_fake: Real,
}

/// Mean absolute deviation as a taped scalar.
fn mean_abs_taped<'p>(
    tape: &mut Tape<'p, Real>,
    a: TensorId,
    b: TensorId,
) -> Result<TensorId> {
    let diff = tape.sub(a, b)?;
    let l1 = tape.sum_abs(diff)?;
    let n = tape.numel(diff) as Real;
    tape.mul_scalar(l1, 1.0 / n)
}

/// Build the full generator loss on the tape. Fresh dropout per forward
/// realizes the noise inputs.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss_taped<'p>(
    tape: &mut Tape<'p, Real>,
    desc: &ArchDescriptor,
    g_a: &GenIds,
    g_b: &GenIds,
    d_a: &CriticIds,
    d_b: &CriticIds,
    u: TensorId,
    v: TensorId,
    cfg: &LossConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(TensorId, GenLossBreakdown)> {
    let fake_v = generator_forward_ids(tape, desc, g_a, u, rng, true)?;
    let rec_u = generator_forward_ids(tape, desc, g_b, fake_v, rng, true)?;
    let fake_u = generator_forward_ids(tape, desc, g_b, v, rng, true)?;
    let rec_v = generator_forward_ids(tape, desc, g_a, fake_u, rng, true)?;

    let ma_u = mean_abs_taped(tape, u, rec_u)?;
    let ma_v = mean_abs_taped(tape, v, rec_v)?;
    let term_u = tape.mul_scalar(ma_u, cfg.lambda_u)?;
    let term_v = tape.mul_scalar(ma_v, cfg.lambda_v)?;

    let score_a = critic_forward_ids(tape, desc, d_a, fake_v)?;
    let score_b = critic_forward_ids(tape, desc, d_b, fake_u)?;

    let recon = tape.add(term_u, term_v)?;
    let adv = tape.add(score_b, score_a)?;
    let loss = tape.sub(recon, adv)?;

    let breakdown = GenLossBreakdown {
        total: tape.scalar(loss),
        recon_u: tape.scalar(ma_u),
        recon_v: tape.scalar(ma_v),
        d_a_fake: tape.scalar(score_a),
        d_b_fake: tape.scalar(score_b),
    };
    Ok((loss, breakdown))
}

/// Component values of one critic-loss evaluation.
#[derive(Clone, Copy, Debug)]
pub struct CriticLossBreakdown {
    pub total: Real,
    pub base: Real,
    pub penalty: Real,
}

/// Build one critic's loss on the tape: `D(fake) - D(real)` plus the
/// strategy's penalty term, if any. `fake` must already be detached.
pub fn critic_loss_taped<'p>(
    tape: &mut Tape<'p, Real>,
    desc: &ArchDescriptor,
    critic: &CriticIds,
    fake: TensorId,
    real: TensorId,
    reg: &dyn CriticRegularizer,
    rng: &mut ChaCha8Rng,
) -> Result<(TensorId, CriticLossBreakdown)> {
    let d_fake = critic_forward_ids(tape, desc, critic, fake)?;
    let d_real = critic_forward_ids(tape, desc, critic, real)?;
    let base = tape.sub(d_fake, d_real)?;
    let (loss, penalty) = match reg.penalty(tape, desc, critic, real, fake, rng)? {
        Some(p) => (tape.add(base, p)?, tape.scalar(p)),
        None => (base, 0.0),
    };
    Ok((
        loss,
        CriticLossBreakdown {
            total: tape.scalar(loss),
            base: tape.scalar(base),
            penalty,
        },
    ))
}

// ── Convenience evaluators (tests, diagnostics) ──────────────────────

/// Value of the generator loss for full parameter sets on raw arrays.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss(
    desc: &ArchDescriptor,
    g_a: &GeneratorParams,
    g_b: &GeneratorParams,
    d_a: &CriticParams,
    d_b: &CriticParams,
    u: &[Real],
    v: &[Real],
    cfg: &LossConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Real> {
    let shape = desc.tensor_shape();
    let mut tape = Tape::new();
    let u_id = tape.constant(u, &shape);
    let v_id = tape.constant(v, &shape);
    let ga = intern_generator(&mut tape, g_a, true);
    let gb = intern_generator(&mut tape, g_b, true);
    let da = intern_critic(&mut tape, d_a, false);
    let db = intern_critic(&mut tape, d_b, false);
    let (loss, _) =
        generator_loss_taped(&mut tape, desc, &ga, &gb, &da, &db, u_id, v_id, cfg, rng)?;
    Ok(tape.scalar(loss))
}

/// Value of the first critic's loss `D_A(G_A(u)) - D_A(v)` (+ penalty).
pub fn critic_loss_a(
    desc: &ArchDescriptor,
    g_a: &GeneratorParams,
    d_a: &CriticParams,
    u: &[Real],
    v: &[Real],
    cfg: &LossConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Real> {
    let reg = cfg.regularizer()?;
    let shape = desc.tensor_shape();
    let mut tape = Tape::new();
    let u_id = tape.constant(u, &shape);
    let v_id = tape.constant(v, &shape);
    let ga = intern_generator(&mut tape, g_a, false);
    let fake = generator_forward_ids(&mut tape, desc, &ga, u_id, rng, true)?;
    let da = intern_critic(&mut tape, d_a, true);
    let (loss, _) = critic_loss_taped(&mut tape, desc, &da, fake, v_id, reg.as_ref(), rng)?;
    Ok(tape.scalar(loss))
}

/// Value of the second critic's loss `D_B(G_B(v)) - D_B(u)` (+ penalty):
/// the mirror of `critic_loss_a` with the real/fake roles swapped.
pub fn critic_loss_b(
    desc: &ArchDescriptor,
    g_b: &GeneratorParams,
    d_b: &CriticParams,
    u: &[Real],
    v: &[Real],
    cfg: &LossConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Real> {
    let reg = cfg.regularizer()?;
    let shape = desc.tensor_shape();
    let mut tape = Tape::new();
    let u_id = tape.constant(u, &shape);
    let v_id = tape.constant(v, &shape);
    let gb = intern_generator(&mut tape, g_b, false);
    let fake = generator_forward_ids(&mut tape, desc, &gb, v_id, rng, true)?;
    let db = intern_critic(&mut tape, d_b, true);
    let (loss, _) = critic_loss_taped(&mut tape, desc, &db, fake, u_id, reg.as_ref(), rng)?;
    Ok(tape.scalar(loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{init_critic, init_generator};
    use crate::tensor::Tensor;
    use rand::SeedableRng;

    #[test]
    fn identity_generators_zero_critics_give_zero() {
        let cfg = LossConfig::default();
        let u = [0.3f32, -0.4, 0.9];
        let v = [0.5f32, 0.5, -0.5];
        let loss = generator_loss_from_parts(&cfg, &u, &u, &v, &v, 0.0, 0.0);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn hand_substitution_example() {
        // e_u=0.1, e_v=0.2 (mean-L1), lambdas 1000, critic outputs 0.3, 0.4
        // -> 100 + 200 - 0.3 - 0.4 = 299.3
        let cfg = LossConfig::default();
        let u = [0.1f32; 8];
        let rec_u = [0.0f32; 8];
        let v = [0.2f32; 8];
        let rec_v = [0.0f32; 8];
        let loss = generator_loss_from_parts(&cfg, &u, &rec_u, &v, &rec_v, 0.4, 0.3);
        assert!((loss - 299.3).abs() < 1e-4, "{loss}");
    }

    #[test]
    fn lambda_scaling_touches_only_reconstruction() {
        let mut cfg = LossConfig::default();
        cfg.lambda_u = 100.0;
        cfg.lambda_v = 100.0;
        let u = [0.5f32, -0.5];
        let rec_u = [0.25f32, -0.25];
        let v = [1.0f32, 0.0];
        let rec_v = [0.5f32, 0.5];
        let base = generator_loss_from_parts(&cfg, &u, &rec_u, &v, &rec_v, 0.7, -0.2);
        let mut scaled_cfg = cfg.clone();
        scaled_cfg.lambda_u *= 3.0;
        scaled_cfg.lambda_v *= 3.0;
        let scaled = generator_loss_from_parts(&scaled_cfg, &u, &rec_u, &v, &rec_v, 0.7, -0.2);
        let recon_part = base + 0.7 + (-0.2);
        let scaled_recon = scaled + 0.7 + (-0.2);
        assert!((scaled_recon - 3.0 * recon_part).abs() < 1e-5);
    }

    #[test]
    fn critic_loss_examples_and_antisymmetry() {
        assert_eq!(critic_loss_from_parts(0.3, 0.8), -0.5);
        assert_eq!(critic_loss_from_parts(-0.2, 0.5), -0.7);
        assert_eq!(critic_loss_from_parts(0.3, 0.3), 0.0);
        let (a, b) = (0.62f32, -1.7f32);
        assert_eq!(
            critic_loss_from_parts(a, b),
            -critic_loss_from_parts(b, a)
        );
    }

    #[test]
    fn lambda_validation_and_warnings() {
        let cfg = LossConfig::default();
        assert!(cfg.validate().is_ok());
        let mut low = cfg.clone();
        low.lambda_u = 10.0;
        assert!(low.validate().is_err());
        assert_eq!(low.lambda_warnings().len(), 1);
        assert!(low.validate_mode().is_ok());
    }

    #[test]
    fn unknown_regularizer_rejected() {
        assert!(make_regularizer("spectral", 0.05, 10.0).is_err());
        assert!(make_regularizer("clip", 0.0, 10.0).is_err());
        assert!(make_regularizer("gp", 0.05, -1.0).is_err());
    }

    #[test]
    fn taped_generator_loss_matches_parts_algebra() {
        let desc = ArchDescriptor::desk_1d(32);
        let g_a = init_generator(&desc, 1);
        let g_b = init_generator(&desc, 2);
        let d_a = init_critic(&desc, 3);
        let d_b = init_critic(&desc, 4);
        let cfg = LossConfig::default();
        let u: Vec<Real> = (0..32).map(|i| ((i as Real) / 16.0 - 1.0) * 0.8).collect();
        let v: Vec<Real> = (0..32).map(|i| ((i % 7) as Real / 3.5 - 1.0) * 0.6).collect();

        let shape = desc.tensor_shape();
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u_id = tape.constant(&u, &shape);
        let v_id = tape.constant(&v, &shape);
        let ga = intern_generator(&mut tape, &g_a, true);
        let gb = intern_generator(&mut tape, &g_b, true);
        let da = intern_critic(&mut tape, &d_a, false);
        let db = intern_critic(&mut tape, &d_b, false);
        let (loss, parts) = generator_loss_taped(
            &mut tape, &desc, &ga, &gb, &da, &db, u_id, v_id, &cfg, &mut rng,
        )
        .unwrap();
        let expected = cfg.lambda_u * parts.recon_u + cfg.lambda_v * parts.recon_v
            - parts.d_b_fake
            - parts.d_a_fake;
        assert!((tape.scalar(loss) - expected).abs() < 1e-3);
    }

    #[test]
    fn gp_penalty_zero_for_unit_lipschitz_linear_critic() {
        // One k=1 stride-2 layer (weight 1, bias 10 keeps the rectifier in
        // its linear region), head weight sqrt(2): ||grad_x D|| = 1 exactly.
        let desc = ArchDescriptor {
            input_shape: vec![4],
            in_channels: 1,
            gen_channels: vec![1, 1],
            gen_kernel: 1,
            critic_channels: vec![1],
            critic_kernel: 1,
            dropout_rate: 0.0,
            dropout_levels: 0,
            leaky_slope: 0.2,
        };
        desc.validate().unwrap();
        let mut d = init_critic(&desc, 0);
        d.stack[0].w = Tensor::param(vec![1, 1, 1], vec![1.0]).unwrap();
        d.stack[0].b = {
            let mut b = Tensor::new(vec![1], vec![10.0]).unwrap();
            b.requires_grad = true;
            b
        };
        d.head.w = Tensor::param(vec![1, 1, 1], vec![2.0f32.sqrt()]).unwrap();

        let u = [0.25f32, -0.5, 0.75, -0.25];
        let v = [0.5f32, 0.5, -0.5, -0.5];
        let mut tape = Tape::new();
        let fake = tape.constant(&u, &[1, 4]);
        let real = tape.constant(&v, &[1, 4]);
        let ids = intern_critic(&mut tape, &d, true);
        let reg = GradientPenalty { lambda_gp: 10.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pen = reg
            .penalty(&mut tape, &desc, &ids, real, fake, &mut rng)
            .unwrap()
            .unwrap();
        assert!(tape.scalar(pen).abs() < 1e-6, "{}", tape.scalar(pen));
    }

    #[test]
    fn gp_input_grad_graph_matches_backward_input_grad() {
        let desc = ArchDescriptor::desk_1d(32);
        let d = init_critic(&desc, 17);
        let x: Vec<Real> = (0..32).map(|i| ((i * 11 % 17) as Real / 8.5) - 1.0).collect();
        let x_t = Tensor::param(vec![1, 32], x.clone()).unwrap();

        // Route 1: input gradient via tape backward of the critic score.
        let mut tape1 = Tape::new();
        let x1 = tape1.leaf(&x_t);
        let ids1 = intern_critic(&mut tape1, &d, false);
        let score = critic_forward_ids(&mut tape1, &desc, &ids1, x1).unwrap();
        tape1.backward(score).unwrap();
        let g1 = tape1.take_grad(x1).unwrap();

        // Route 2: the explicit taped gradient graph used by the penalty.
        let mut tape2 = Tape::new();
        let x2 = tape2.constant(&x, &[1, 32]);
        let ids2 = intern_critic(&mut tape2, &d, false);
        let norm = critic_input_grad_norm(&mut tape2, &desc, &ids2, x2).unwrap();
        let expected = (g1.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>()).sqrt();
        assert!(
            ((tape2.scalar(norm) as f64) - expected).abs() < 1e-6 * expected.max(1.0),
            "{} vs {expected}",
            tape2.scalar(norm)
        );
    }

    #[test]
    fn losses_backpropagate_finite_gradients_in_both_modes() {
        let desc = ArchDescriptor::desk_1d(32);
        let g_a = init_generator(&desc, 1);
        let d_a = init_critic(&desc, 3);
        let u: Vec<Real> = (0..32).map(|i| (i as Real / 16.0) - 1.0).collect();
        let v: Vec<Real> = (0..32).map(|i| ((31 - i) as Real / 16.0) - 1.0).collect();
        for mode in ["clip", "gp"] {
            let cfg = LossConfig {
                mode: mode.to_string(),
                ..LossConfig::default()
            };
            let reg = cfg.regularizer().unwrap();
            let shape = desc.tensor_shape();
            let mut tape = Tape::new();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let u_id = tape.constant(&u, &shape);
            let v_id = tape.constant(&v, &shape);
            let ga = intern_generator(&mut tape, &g_a, false);
            let fake = generator_forward_ids(&mut tape, &desc, &ga, u_id, &mut rng, true)
                .unwrap();
            let da = intern_critic(&mut tape, &d_a, true);
            let (loss, _) =
                critic_loss_taped(&mut tape, &desc, &da, fake, v_id, reg.as_ref(), &mut rng)
                    .unwrap();
            tape.backward(loss).unwrap();
            for id in da.all_ids() {
                let g = tape.grad(id).expect("critic params receive gradients");
                assert!(g.iter().all(|v| v.is_finite()));
            }
        }
    }
}
