//! Training loop for the parallel bank: per record and sub-model, n_critic
//! critic-pair updates followed by one joint generator update, RMSProp
//! throughout. Sub-models share no mutable state and draw from per-index
//! RNG streams, so parallel and sequential execution are bit-identical.

use crate::dataset::{Dataset, SampleRecord};
use crate::error::{Error, Result};
use crate::loss::{
    critic_loss_taped, generator_loss_taped, CriticRegularizer, LossConfig,
};
use crate::nets::{
    generator_forward_ids, intern_critic, intern_generator, ArchDescriptor, CriticParams,
    GeneratorParams,
};
use crate::optim::{rmsprop_step, OptimizerState, RmsProp};
use crate::tape::Tape;
use crate::tensor::{Real, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

// ── Seed derivation ──────────────────────────────────────────────────

pub(crate) mod seeds {
    fn splitmix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9E3779B97F4A7C15);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
        x ^ (x >> 31)
    }

    /// Training noise stream for sub-model i (1-based): `base ^ i`.
    pub fn submodel_stream(base: u64, i: usize) -> u64 {
        base ^ i as u64
    }

    /// Weight-init stream for sub-model i, disjoint from the noise stream.
    pub fn submodel_init(base: u64, i: usize) -> u64 {
        splitmix(base ^ i as u64)
    }

    /// Per-epoch record shuffle stream, shared by all sub-models.
    pub fn epoch_shuffle(base: u64, epoch: usize) -> u64 {
        splitmix(splitmix(base).wrapping_add(epoch as u64))
    }

    /// Per-source inference stream for separation.
    pub fn separation(seed: u64, i: usize) -> u64 {
        splitmix(seed).wrapping_add(i as u64)
    }
}

// ── Configuration ────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct TrainConfig {
    /// Critic update steps per generator step.
    pub n_critic: usize,
    pub learning_rate: Real,
    pub rho: Real,
    pub epsilon: Real,
    /// Records per step; only 1 is supported.
    pub batch_size: usize,
    /// Passes over the dataset. Desk-scale default 2000 (paper scale: 20000).
    pub epochs: usize,
    pub loss: LossConfig,
    pub base_seed: u64,
    /// Epochs between checkpoint writes; 0 writes only the final one.
    pub checkpoint_interval: usize,
    pub checkpoint_path: Option<PathBuf>,
    /// Sub-model training threads (clamped to N).
    pub workers: usize,
    /// Also log reconstruction and penalty components per step.
    pub log_diagnostics: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_critic: 3,
            learning_rate: 5e-5,
            rho: 0.9,
            epsilon: 1e-8,
            batch_size: 1,
            epochs: 2000,
            loss: LossConfig::default(),
            base_seed: 0,
            checkpoint_interval: 0,
            checkpoint_path: None,
            workers: 1,
            log_diagnostics: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_critic < 1 {
            return Err(Error::InvalidArgument("n_critic must be >= 1".into()));
        }
        if self.batch_size != 1 {
            return Err(Error::InvalidArgument(
                "only batch size 1 is supported".into(),
            ));
        }
        // learning_rate 0 is allowed: it freezes parameters, which the
        // determinism checks rely on.
        if self.learning_rate < 0.0 || self.rho <= 0.0 || self.rho >= 1.0 || self.epsilon <= 0.0
        {
            return Err(Error::InvalidArgument(
                "learning rate must be >= 0; rho in (0,1); epsilon > 0".into(),
            ));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        self.loss.validate_mode()
    }

    fn hyper(&self) -> RmsProp<Real> {
        RmsProp {
            lr: self.learning_rate,
            rho: self.rho,
            eps: self.epsilon,
        }
    }
}

// ── Logging ──────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    CriticA,
    CriticB,
    Generator,
    ReconU,
    ReconV,
    PenaltyA,
    PenaltyB,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::CriticA => "critic_a",
            LossKind::CriticB => "critic_b",
            LossKind::Generator => "generator",
            LossKind::ReconU => "recon_u",
            LossKind::ReconV => "recon_v",
            LossKind::PenaltyA => "penalty_a",
            LossKind::PenaltyB => "penalty_b",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LogEntry {
    pub step: u64,
    /// 1-based sub-model index.
    pub submodel: usize,
    pub kind: LossKind,
    pub value: Real,
}

/// Append-only per-step loss records.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    entries: Vec<LogEntry>,
}

impl TrainLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: LogEntry) {
        self.entries.push(e);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn count_kind(&self, kind: LossKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 + self.entries.len() * 24);
        out.push_str("step,submodel,loss_name,value\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.step,
                e.submodel,
                e.kind.name(),
                e.value
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

// ── Model ────────────────────────────────────────────────────────────

/// One dual pair: both generators, both critics, their optimizer states,
/// and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct SubModel {
    /// 1-based position in the bank.
    pub index: usize,
    pub g_a: GeneratorParams,
    pub g_b: GeneratorParams,
    pub d_a: CriticParams,
    pub d_b: CriticParams,
    pub opt_g_a: Vec<OptimizerState<Real>>,
    pub opt_g_b: Vec<OptimizerState<Real>>,
    pub opt_d_a: Vec<OptimizerState<Real>>,
    pub opt_d_b: Vec<OptimizerState<Real>>,
    pub step: u64,
}

fn opt_bank_gen(p: &GeneratorParams) -> Vec<OptimizerState<Real>> {
    p.named_tensors()
        .iter()
        .map(|(_, t)| OptimizerState::zeros(t.numel()))
        .collect()
}

fn opt_bank_critic(p: &CriticParams) -> Vec<OptimizerState<Real>> {
    p.named_tensors()
        .iter()
        .map(|(_, t)| OptimizerState::zeros(t.numel()))
        .collect()
}

/// N independent dual pairs sharing one architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct PDualGanModel {
    pub desc: ArchDescriptor,
    pub subs: Vec<SubModel>,
}

impl PDualGanModel {
    pub fn init(desc: ArchDescriptor, n: usize, base_seed: u64) -> Result<Self> {
        desc.validate()?;
        if n < 1 {
            return Err(Error::InvalidArgument("model needs N >= 1".into()));
        }
        let subs = (1..=n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seeds::submodel_init(base_seed, i));
                let g_a = GeneratorParams::init(&desc, &mut rng);
                let g_b = GeneratorParams::init(&desc, &mut rng);
                let d_a = CriticParams::init(&desc, &mut rng);
                let d_b = CriticParams::init(&desc, &mut rng);
                SubModel {
                    index: i,
                    opt_g_a: opt_bank_gen(&g_a),
                    opt_g_b: opt_bank_gen(&g_b),
                    opt_d_a: opt_bank_critic(&d_a),
                    opt_d_b: opt_bank_critic(&d_b),
                    g_a,
                    g_b,
                    d_a,
                    d_b,
                    step: 0,
                }
            })
            .collect();
        Ok(PDualGanModel { desc, subs })
    }

    pub fn n(&self) -> usize {
        self.subs.len()
    }
}

// ── Updates ──────────────────────────────────────────────────────────

fn apply_updates(
    tensors: Vec<&mut Tensor<Real>>,
    states: &mut [OptimizerState<Real>],
    grads: Vec<Option<Vec<Real>>>,
    hyper: &RmsProp<Real>,
) -> Result<()> {
    debug_assert_eq!(tensors.len(), states.len());
    debug_assert_eq!(tensors.len(), grads.len());
    for ((t, st), g) in tensors.into_iter().zip(states.iter_mut()).zip(grads) {
        t.grad = Some(g.unwrap_or_else(|| vec![0.0; t.numel()]));
        rmsprop_step(t, st, hyper)?;
        t.grad = None;
    }
    Ok(())
}

fn check_finite(value: Real, submodel: usize, step: u64, loss: &'static str) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NanLoss {
            submodel,
            step,
            loss,
        });
    }
    Ok(())
}

/// One full record-step for a single sub-model: n_critic critic pairs,
/// then a joint generator update.
fn submodel_step(
    desc: &ArchDescriptor,
    sub: &mut SubModel,
    u: &[Real],
    v: &[Real],
    cfg: &TrainConfig,
    reg: &dyn CriticRegularizer,
    rng: &mut ChaCha8Rng,
    entries: &mut Vec<LogEntry>,
) -> Result<()> {
    let shape = desc.tensor_shape();
    let hyper = cfg.hyper();
    let step = sub.step;
    let i = sub.index;

    for _ in 0..cfg.n_critic {
        // Critic A: real = source v_i, fake = G_A(u) (detached).
        {
            let g_a = &sub.g_a;
            let d_a = &sub.d_a;
            let mut tape = Tape::new();
            let u_id = tape.constant(u, &shape);
            let v_id = tape.constant(v, &shape);
            let ga = intern_generator(&mut tape, g_a, false);
            let fake = generator_forward_ids(&mut tape, desc, &ga, u_id, rng, true)?;
            let da = intern_critic(&mut tape, d_a, true);
            let (loss, parts) = critic_loss_taped(&mut tape, desc, &da, fake, v_id, reg, rng)?;
            check_finite(parts.total, i, step, "critic_a")?;
            tape.backward(loss)?;
            let grads: Vec<_> = da.all_ids().iter().map(|&id| tape.take_grad(id)).collect();
            drop(tape);
            apply_updates(sub.d_a.tensors_mut(), &mut sub.opt_d_a, grads, &hyper)?;
            reg.after_step(&mut sub.d_a)?;
            entries.push(LogEntry {
                step,
                submodel: i,
                kind: LossKind::CriticA,
                value: parts.total,
            });
            if cfg.log_diagnostics && parts.penalty != 0.0 {
                entries.push(LogEntry {
                    step,
                    submodel: i,
                    kind: LossKind::PenaltyA,
                    value: parts.penalty,
                });
            }
        }
        // Critic B: real = mixture u, fake = G_B(v) (detached).
        {
            let g_b = &sub.g_b;
            let d_b = &sub.d_b;
            let mut tape = Tape::new();
            let u_id = tape.constant(u, &shape);
            let v_id = tape.constant(v, &shape);
            let gb = intern_generator(&mut tape, g_b, false);
            let fake = generator_forward_ids(&mut tape, desc, &gb, v_id, rng, true)?;
            let db = intern_critic(&mut tape, d_b, true);
            let (loss, parts) = critic_loss_taped(&mut tape, desc, &db, fake, u_id, reg, rng)?;
            check_finite(parts.total, i, step, "critic_b")?;
            tape.backward(loss)?;
            let grads: Vec<_> = db.all_ids().iter().map(|&id| tape.take_grad(id)).collect();
            drop(tape);
            apply_updates(sub.d_b.tensors_mut(), &mut sub.opt_d_b, grads, &hyper)?;
            reg.after_step(&mut sub.d_b)?;
            entries.push(LogEntry {
                step,
                submodel: i,
                kind: LossKind::CriticB,
                value: parts.total,
            });
            if cfg.log_diagnostics && parts.penalty != 0.0 {
                entries.push(LogEntry {
                    step,
                    submodel: i,
                    kind: LossKind::PenaltyB,
                    value: parts.penalty,
                });
            }
        }
    }

    // Joint generator update.
    {
        let g_a = &sub.g_a;
        let g_b = &sub.g_b;
        let d_a = &sub.d_a;
        let d_b = &sub.d_b;
        let mut tape = Tape::new();
        let u_id = tape.constant(u, &shape);
        let v_id = tape.constant(v, &shape);
        let ga = intern_generator(&mut tape, g_a, true);
        let gb = intern_generator(&mut tape, g_b, true);
        let da = intern_critic(&mut tape, d_a, false);
        let db = intern_critic(&mut tape, d_b, false);
        let (loss, parts) = generator_loss_taped(
            &mut tape, desc, &ga, &gb, &da, &db, u_id, v_id, &cfg.loss, rng,
        )?;
        check_finite(parts.total, i, step, "generator")?;
        tape.backward(loss)?;
        let ga_grads: Vec<_> = ga.all_ids().iter().map(|&id| tape.take_grad(id)).collect();
        let gb_grads: Vec<_> = gb.all_ids().iter().map(|&id| tape.take_grad(id)).collect();
        drop(tape);
        apply_updates(sub.g_a.tensors_mut(), &mut sub.opt_g_a, ga_grads, &hyper)?;
        apply_updates(sub.g_b.tensors_mut(), &mut sub.opt_g_b, gb_grads, &hyper)?;
        entries.push(LogEntry {
            step,
            submodel: i,
            kind: LossKind::Generator,
            value: parts.total,
        });
        if cfg.log_diagnostics {
            entries.push(LogEntry {
                step,
                submodel: i,
                kind: LossKind::ReconU,
                value: parts.recon_u,
            });
            entries.push(LogEntry {
                step,
                submodel: i,
                kind: LossKind::ReconV,
                value: parts.recon_v,
            });
        }
    }

    sub.step += 1;
    Ok(())
}

fn check_record(desc: &ArchDescriptor, n: usize, record: &SampleRecord) -> Result<()> {
    if record.n_sources() != n {
        return Err(Error::ShapeMismatch {
            op: "train record",
            lhs: vec![record.n_sources()],
            rhs: vec![n],
        });
    }
    if record.mixture.len() != desc.numel() {
        return Err(Error::ShapeMismatch {
            op: "train record",
            lhs: vec![record.mixture.len()],
            rhs: desc.tensor_shape(),
        });
    }
    Ok(())
}

/// Train every sub-model on one record. `rngs` are the persistent per-index
/// noise streams (one per sub-model).
pub fn train_step(
    model: &mut PDualGanModel,
    record: &SampleRecord,
    cfg: &TrainConfig,
    rngs: &mut [ChaCha8Rng],
    log: &mut TrainLog,
) -> Result<()> {
    cfg.validate()?;
    check_record(&model.desc, model.n(), record)?;
    let reg = cfg.loss.regularizer()?;
    let desc = model.desc.clone();
    for (idx, (sub, rng)) in model.subs.iter_mut().zip(rngs.iter_mut()).enumerate() {
        submodel_step(
            &desc,
            sub,
            &record.mixture,
            &record.sources[idx],
            cfg,
            reg.as_ref(),
            rng,
            &mut log.entries,
        )?;
    }
    Ok(())
}

/// Fresh per-index noise streams for a training run.
pub fn noise_streams(n: usize, base_seed: u64) -> Vec<ChaCha8Rng> {
    (1..=n)
        .map(|i| ChaCha8Rng::seed_from_u64(seeds::submodel_stream(base_seed, i)))
        .collect()
}

/// Full training run: `epochs` shuffled passes over the dataset, with the
/// per-record schedule from `train_step`, checkpointing at the configured
/// interval and always at the end.
pub fn train(model: &mut PDualGanModel, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    if dataset.manifest.n != model.n() {
        return Err(Error::ShapeMismatch {
            op: "train dataset",
            lhs: vec![dataset.manifest.n],
            rhs: vec![model.n()],
        });
    }
    for r in &dataset.records {
        check_record(&model.desc, model.n(), r)?;
    }
    let reg = cfg.loss.regularizer()?;
    let n = model.n();
    let workers = cfg.workers.clamp(1, n);
    let mut rngs = noise_streams(n, cfg.base_seed);
    let mut log = TrainLog::new();
    let desc = model.desc.clone();

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(seeds::epoch_shuffle(cfg.base_seed, epoch));
        order.shuffle(&mut shuffle_rng);

        if workers <= 1 {
            for &r in &order {
                let record = &dataset.records[r];
                for (idx, (sub, rng)) in
                    model.subs.iter_mut().zip(rngs.iter_mut()).enumerate()
                {
                    submodel_step(
                        &desc,
                        sub,
                        &record.mixture,
                        &record.sources[idx],
                        cfg,
                        reg.as_ref(),
                        rng,
                        &mut log.entries,
                    )?;
                }
            }
        } else {
            // Each worker owns a disjoint slice of sub-models and processes
            // the whole epoch; per-record entry groups are merged afterwards
            // in the exact order the sequential path would produce.
            let chunk = n.div_ceil(workers);
            let sub_chunks: Vec<&mut [SubModel]> = model.subs.chunks_mut(chunk).collect();
            let rng_chunks: Vec<&mut [ChaCha8Rng]> = rngs.chunks_mut(chunk).collect();
            let order_ref = &order;
            let reg_ref = reg.as_ref();
            let desc_ref = &desc;
            let results: Vec<Result<Vec<Vec<Vec<LogEntry>>>>> = std::thread::scope(|scope| {
                let mut handles = Vec::new();
                let mut base_idx = 0usize;
                for (subs, rs) in sub_chunks.into_iter().zip(rng_chunks) {
                    let start = base_idx;
                    base_idx += subs.len();
                    handles.push(scope.spawn(move || {
                        let mut per_sub: Vec<Vec<Vec<LogEntry>>> =
                            vec![Vec::with_capacity(order_ref.len()); subs.len()];
                        for &r in order_ref {
                            let record = &dataset.records[r];
                            for (k, (sub, rng)) in
                                subs.iter_mut().zip(rs.iter_mut()).enumerate()
                            {
                                let mut entries = Vec::with_capacity(2 * cfg.n_critic + 3);
                                submodel_step(
                                    desc_ref,
                                    sub,
                                    &record.mixture,
                                    &record.sources[start + k],
                                    cfg,
                                    reg_ref,
                                    rng,
                                    &mut entries,
                                )?;
                                per_sub[k].push(entries);
                            }
                        }
                        Ok(per_sub)
                    }));
                }
                handles.into_iter().map(|h| h.join().expect("no panics")).collect()
            });
            let mut merged: Vec<Vec<Vec<LogEntry>>> = Vec::with_capacity(n);
            for res in results {
                merged.extend(res?);
            }
            for rec_pos in 0..order.len() {
                for sub_entries in &mut merged {
                    log.entries
                        .extend(std::mem::take(&mut sub_entries[rec_pos]));
                }
            }
        }

        let is_last = epoch + 1 == cfg.epochs;
        let interval_hit =
            cfg.checkpoint_interval > 0 && (epoch + 1) % cfg.checkpoint_interval == 0;
        if let Some(path) = &cfg.checkpoint_path {
            if interval_hit || is_last {
                crate::checkpoint::save_checkpoint(model, path)?;
            }
        }
    }
    Ok(log)
}

// ── Separation ───────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug)]
pub struct SeparateOptions {
    pub seed: u64,
    /// Stochastic passes to average (dropout stays active per the
    /// test-time protocol).
    pub passes: usize,
    /// `false` disables dropout entirely (deterministic debugging mode).
    pub noise: bool,
}

impl Default for SeparateOptions {
    fn default() -> Self {
        SeparateOptions {
            seed: 0,
            passes: 1,
            noise: true,
        }
    }
}

/// Estimate all N sources from one mixture: `s_i = G_Ai(mixture)`.
pub fn separate(
    model: &PDualGanModel,
    mixture: &[Real],
    opts: &SeparateOptions,
) -> Result<Vec<Vec<Real>>> {
    if opts.passes < 1 {
        return Err(Error::InvalidArgument("passes must be >= 1".into()));
    }
    if mixture.len() != model.desc.numel() {
        return Err(Error::ShapeMismatch {
            op: "separate",
            lhs: vec![mixture.len()],
            rhs: model.desc.tensor_shape(),
        });
    }
    let mut out = Vec::with_capacity(model.n());
    for (idx, sub) in model.subs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::separation(opts.seed, idx + 1));
        let mut acc = vec![0.0f32; mixture.len()];
        for _ in 0..opts.passes {
            let est = crate::nets::generator_infer(
                &model.desc,
                &sub.g_a,
                mixture,
                &mut rng,
                opts.noise,
            )?;
            for (a, e) in acc.iter_mut().zip(&est) {
                *a += e;
            }
        }
        let inv = 1.0 / opts.passes as Real;
        for a in &mut acc {
            *a *= inv;
        }
        out.push(acc);
    }
    Ok(out)
}
