//! Mixture synthesis: instantaneous and convolutive mixing models behind a
//! common trait, random mixing-spec generation, and dataset construction.
//!
//! All mixing math runs in f64; records are stored as f32 by the container.

use crate::dataset::{Dataset, Manifest, SampleRecord};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FORMAT_VERSION: u16 = 1;

/// Mixing model kind, as stored in dataset files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixKind {
    Instantaneous,
    Convolutive,
}

impl MixKind {
    pub fn code(self) -> u32 {
        match self {
            MixKind::Instantaneous => 0,
            MixKind::Convolutive => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(MixKind::Instantaneous),
            1 => Ok(MixKind::Convolutive),
            other => Err(Error::InvalidArgument(format!(
                "unknown mixing kind code {other}"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MixKind::Instantaneous => "instantaneous",
            MixKind::Convolutive => "convolutive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "inst" | "instantaneous" => Ok(MixKind::Instantaneous),
            "conv" | "convolutive" => Ok(MixKind::Convolutive),
            other => Err(Error::UnknownStrategy {
                family: "mixing model",
                name: other.to_string(),
                known: "inst(antaneous), conv(olutive)".to_string(),
            }),
        }
    }
}

/// Per-source mixing coefficients: scalar weights or convolution kernels.
#[derive(Clone, Debug, PartialEq)]
pub enum MixParams {
    Weights(Vec<f64>),
    Kernels(Vec<Vec<f64>>),
}

impl MixParams {
    pub fn n_sources(&self) -> usize {
        match self {
            MixParams::Weights(w) => w.len(),
            MixParams::Kernels(k) => k.len(),
        }
    }
}

/// Full provenance of one mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingSpec {
    pub kind: MixKind,
    pub params: MixParams,
    /// Seed the coefficients were drawn from (0 when loaded from a file,
    /// which stores only the coefficients).
    pub seed: u64,
    /// Peak-normalization factor applied to the raw mixture, recorded
    /// after mixing.
    pub peak_scale: Option<f64>,
}

impl MixingSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.params.n_sources();
        if n < 1 {
            return Err(Error::InvalidArgument("empty mixing spec".into()));
        }
        match &self.params {
            MixParams::Weights(w) => {
                if self.kind != MixKind::Instantaneous {
                    return Err(Error::InvalidArgument(
                        "scalar weights require the instantaneous kind".into(),
                    ));
                }
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite mixing weight".into()));
                }
                if w.iter().all(|&v| v == 0.0) {
                    return Err(Error::InvalidArgument("all-zero mixing weights".into()));
                }
            }
            MixParams::Kernels(ks) => {
                if self.kind != MixKind::Convolutive {
                    return Err(Error::InvalidArgument(
                        "kernels require the convolutive kind".into(),
                    ));
                }
                let k_len = ks[0].len();
                if k_len == 0 {
                    return Err(Error::InvalidArgument("empty mixing kernel".into()));
                }
                if ks.iter().any(|k| k.len() != k_len) {
                    return Err(Error::InvalidArgument(
                        "mixing kernels must share one length".into(),
                    ));
                }
                if ks.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite kernel entry".into()));
                }
                if ks.iter().flatten().all(|&v| v == 0.0) {
                    return Err(Error::InvalidArgument("all-zero mixing kernels".into()));
                }
            }
        }
        Ok(())
    }
}

/// A mixing model: combines N same-shape sources into one mixture.
/// Returned mixtures are pre-normalization; callers peak-normalize.
pub trait MixingModel: Sync {
    fn name(&self) -> &'static str;
    fn kind(&self) -> MixKind;
    fn mix_raw(&self, sources: &[Vec<f64>], shape: &[usize], spec: &MixingSpec)
        -> Result<Vec<f64>>;
}

fn check_sources(sources: &[Vec<f64>], shape: &[usize], n_coeff: usize) -> Result<usize> {
    let numel: usize = shape.iter().product();
    if sources.is_empty() || sources.len() != n_coeff {
        return Err(Error::ShapeMismatch {
            op: "mix",
            lhs: vec![sources.len()],
            rhs: vec![n_coeff],
        });
    }
    for s in sources {
        if s.len() != numel {
            return Err(Error::ShapeMismatch {
                op: "mix",
                lhs: vec![s.len()],
                rhs: shape.to_vec(),
            });
        }
    }
    Ok(numel)
}

struct InstantaneousModel;

impl MixingModel for InstantaneousModel {
    fn name(&self) -> &'static str {
        "instantaneous"
    }
    fn kind(&self) -> MixKind {
        MixKind::Instantaneous
    }
    fn mix_raw(
        &self,
        sources: &[Vec<f64>],
        shape: &[usize],
        spec: &MixingSpec,
    ) -> Result<Vec<f64>> {
        spec.validate()?;
        let MixParams::Weights(weights) = &spec.params else {
            return Err(Error::InvalidArgument(
                "instantaneous model needs scalar weights".into(),
            ));
        };
        let numel = check_sources(sources, shape, weights.len())?;
        let mut x = vec![0.0f64; numel];
        for (s, &a) in sources.iter().zip(weights) {
            for (xv, &sv) in x.iter_mut().zip(s) {
                *xv += a * sv;
            }
        }
        Ok(x)
    }
}

struct ConvolutiveModel;

impl ConvolutiveModel {
    /// Causal zero-padded linear convolution truncated to the source length:
    /// `y[t] = sum_v a[t-v] * s[v]` with `0 <= t-v < K`.
    fn convolve_1d(kernel: &[f64], s: &[f64], out: &mut [f64]) {
        let k_len = kernel.len();
        for (t, o) in out.iter_mut().enumerate() {
            let v_lo = (t + 1).saturating_sub(k_len);
            let mut acc = 0.0;
            for v in v_lo..=t {
                acc += kernel[t - v] * s[v];
            }
            *o += acc;
        }
    }

    /// 2-D analogue with the kernel anchored at the origin:
    /// `y[i,j] = sum_{p,q} a[p,q] * s[i-p, j-q]`, zero outside bounds,
    /// output truncated to the source extent. Kernels are row-major square.
    fn convolve_2d(kernel: &[f64], k_side: usize, s: &[f64], h: usize, w: usize, out: &mut [f64]) {
        for i in 0..h {
            let p_hi = k_side.min(i + 1);
            for j in 0..w {
                let q_hi = k_side.min(j + 1);
                let mut acc = 0.0;
                for p in 0..p_hi {
                    for q in 0..q_hi {
                        acc += kernel[p * k_side + q] * s[(i - p) * w + (j - q)];
                    }
                }
                out[i * w + j] += acc;
            }
        }
    }
}

impl MixingModel for ConvolutiveModel {
    fn name(&self) -> &'static str {
        "convolutive"
    }
    fn kind(&self) -> MixKind {
        MixKind::Convolutive
    }
    fn mix_raw(
        &self,
        sources: &[Vec<f64>],
        shape: &[usize],
        spec: &MixingSpec,
    ) -> Result<Vec<f64>> {
        spec.validate()?;
        let MixParams::Kernels(kernels) = &spec.params else {
            return Err(Error::InvalidArgument(
                "convolutive model needs kernels".into(),
            ));
        };
        let numel = check_sources(sources, shape, kernels.len())?;
        let mut x = vec![0.0f64; numel];
        match shape.len() {
            1 => {
                for (s, k) in sources.iter().zip(kernels) {
                    Self::convolve_1d(k, s, &mut x);
                }
            }
            2 => {
                for (s, k) in sources.iter().zip(kernels) {
                    let side = (k.len() as f64).sqrt().round() as usize;
                    if side * side != k.len() {
                        return Err(Error::InvalidArgument(format!(
                            "2-D kernels must be square, got {} entries",
                            k.len()
                        )));
                    }
                    Self::convolve_2d(k, side, s, shape[0], shape[1], &mut x);
                }
            }
            r => {
                return Err(Error::InvalidArgument(format!(
                    "unsupported source rank {r}"
                )))
            }
        }
        Ok(x)
    }
}

static INSTANTANEOUS: InstantaneousModel = InstantaneousModel;
static CONVOLUTIVE: ConvolutiveModel = ConvolutiveModel;
static MODELS: &[&dyn MixingModel] = &[&INSTANTANEOUS, &CONVOLUTIVE];

/// Look up a mixing model by kind.
pub fn mixing_model(kind: MixKind) -> &'static dyn MixingModel {
    MODELS
        .iter()
        .find(|m| m.kind() == kind)
        .copied()
        .expect("both kinds registered")
}

/// Look up a mixing model by registered name ("instantaneous"/"inst", ...).
pub fn mixing_model_by_name(name: &str) -> Result<&'static dyn MixingModel> {
    Ok(mixing_model(MixKind::parse(name)?))
}

/// Peak-normalize to [-1, 1]; returns the applied scale (1/peak).
/// Division (not reciprocal multiplication) makes the peak land on
/// exactly +-1.
pub fn peak_normalize(x: &mut [f64]) -> Result<f64> {
    let peak = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::InvalidArgument(
            "cannot normalize an all-zero mixture".into(),
        ));
    }
    for v in x.iter_mut() {
        *v /= peak;
    }
    Ok(1.0 / peak)
}

/// Instantaneous mixture `x = sum_i a_i s_i`, peak-normalized; the scale is
/// recorded in the returned spec.
pub fn mix_instantaneous(
    sources: &[Vec<f64>],
    shape: &[usize],
    weights: &[f64],
) -> Result<(Vec<f64>, MixingSpec)> {
    let mut spec = MixingSpec {
        kind: MixKind::Instantaneous,
        params: MixParams::Weights(weights.to_vec()),
        seed: 0,
        peak_scale: None,
    };
    let mut x = INSTANTANEOUS.mix_raw(sources, shape, &spec)?;
    spec.peak_scale = Some(peak_normalize(&mut x)?);
    Ok((x, spec))
}

/// Convolutive mixture `x = sum_i a_i * s_i`, peak-normalized.
pub fn mix_convolutive(
    sources: &[Vec<f64>],
    shape: &[usize],
    kernels: &[Vec<f64>],
) -> Result<(Vec<f64>, MixingSpec)> {
    let mut spec = MixingSpec {
        kind: MixKind::Convolutive,
        params: MixParams::Kernels(kernels.to_vec()),
        seed: 0,
        peak_scale: None,
    };
    let mut x = CONVOLUTIVE.mix_raw(sources, shape, &spec)?;
    spec.peak_scale = Some(peak_normalize(&mut x)?);
    Ok((x, spec))
}

/// Draw a random mixing spec: coefficients i.i.d. standard normal, fully
/// reproducible from the spec's own seed.
pub fn random_spec(
    kind: MixKind,
    n: usize,
    k_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MixingSpec> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "random specs need N >= 2 sources, got {n}"
        )));
    }
    if kind == MixKind::Convolutive && k_len < 1 {
        return Err(Error::InvalidArgument("kernel length must be >= 1".into()));
    }
    let seed: u64 = rng.random();
    Ok(spec_from_seed(kind, n, k_len, seed))
}

/// Deterministically expand a spec seed into coefficients.
pub fn spec_from_seed(kind: MixKind, n: usize, k_len: usize, seed: u64) -> MixingSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |count: usize| -> Vec<f64> {
        (0..count)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    };
    let params = match kind {
        MixKind::Instantaneous => MixParams::Weights(draw(n)),
        MixKind::Convolutive => {
            MixParams::Kernels((0..n).map(|_| draw(k_len)).collect())
        }
    };
    MixingSpec {
        kind,
        params,
        seed,
        peak_scale: None,
    }
}

/// Synthesize `count` records: the same `n` bank sources in every record,
/// mixed under freshly drawn random coefficients.
pub fn synth_dataset(
    source_bank: &[Vec<f64>],
    shape: &[usize],
    count: usize,
    kind: MixKind,
    n: usize,
    k_len: usize,
    seed: u64,
) -> Result<Dataset> {
    if source_bank.len() < n {
        return Err(Error::InvalidArgument(format!(
            "source bank has {} sources, need at least {n}",
            source_bank.len()
        )));
    }
    if count < 1 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }
    let sources = &source_bank[..n];
    let model = mixing_model(kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        // Rejection on the (measure-zero) all-zero draw keeps the stream
        // deterministic: rejected draws consume rng state like accepted ones.
        let (x, spec) = loop {
            let mut spec = random_spec(kind, n, k_len, &mut rng)?;
            let mut x = model.mix_raw(sources, shape, &spec)?;
            match peak_normalize(&mut x) {
                Ok(scale) => {
                    spec.peak_scale = Some(scale);
                    break (x, spec);
                }
                Err(_) => continue,
            }
        };
        records.push(SampleRecord::from_f64(&x, sources, spec)?);
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        n,
        shape: shape.to_vec(),
        kind,
        count,
        seed,
        k_len: if kind == MixKind::Convolutive { k_len } else { 1 },
    };
    Dataset::new(manifest, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape1(t: usize) -> Vec<usize> {
        vec![t]
    }

    #[test]
    fn identity_mixing_single_source() {
        let s = vec![vec![0.25, -0.5, 1.0]];
        let (x, spec) = mix_instantaneous(&s, &shape1(3), &[1.0]).unwrap();
        assert_eq!(x, s[0]);
        assert_eq!(spec.peak_scale, Some(1.0));
    }

    #[test]
    fn weighted_sum_pre_normalization() {
        // a=[0.5,0.5], s1=[2,2], s2=[4,0] -> pre-normalization x=[3,1]
        let s = vec![vec![2.0, 2.0], vec![4.0, 0.0]];
        let spec = MixingSpec {
            kind: MixKind::Instantaneous,
            params: MixParams::Weights(vec![0.5, 0.5]),
            seed: 0,
            peak_scale: None,
        };
        let x = mixing_model(MixKind::Instantaneous)
            .mix_raw(&s, &shape1(2), &spec)
            .unwrap();
        assert_eq!(x, vec![3.0, 1.0]);
        let (xn, spec) = mix_instantaneous(&s, &shape1(2), &[0.5, 0.5]).unwrap();
        assert_eq!(xn, vec![1.0, 1.0 / 3.0]);
        assert!((spec.peak_scale.unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn convolution_double_loop_example() {
        // a=[1,2], s=[3,4,5] -> y[t] = sum_v a[t-v] s[v] = [3,10,13]
        let mut out = vec![0.0; 3];
        ConvolutiveModel::convolve_1d(&[1.0, 2.0], &[3.0, 4.0, 5.0], &mut out);
        assert_eq!(out, vec![3.0, 10.0, 13.0]);
    }

    #[test]
    fn impulse_kernel_reduces_to_weighted_copy() {
        let s = vec![vec![0.1, -0.4, 0.9], vec![0.5, 0.5, -0.5]];
        let w = [0.7, -1.3];
        let kernels: Vec<Vec<f64>> = w.iter().map(|&v| vec![v]).collect();
        let (xc, _) = mix_convolutive(&s, &shape1(3), &kernels).unwrap();
        let (xi, _) = mix_instantaneous(&s, &shape1(3), &w).unwrap();
        for (a, b) in xc.iter().zip(&xi) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_weights_rejected() {
        let s = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert!(mix_instantaneous(&s, &shape1(2), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let s = vec![vec![1.0, 2.0], vec![3.0]];
        assert!(mix_instantaneous(&s, &shape1(2), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn random_spec_reproducible_and_seed_expandable() {
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        let sa = random_spec(MixKind::Convolutive, 4, 8, &mut a).unwrap();
        let sb = random_spec(MixKind::Convolutive, 4, 8, &mut b).unwrap();
        assert_eq!(sa, sb);
        let re = spec_from_seed(MixKind::Convolutive, 4, 8, sa.seed);
        assert_eq!(re.params, sa.params);
    }

    #[test]
    fn random_spec_moments() {
        // 10,000 draws: mean within +-0.05, variance within [0.9, 1.1]
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut vals = Vec::with_capacity(10_000);
        while vals.len() < 10_000 {
            let spec = random_spec(MixKind::Instantaneous, 4, 1, &mut rng).unwrap();
            if let MixParams::Weights(w) = spec.params {
                vals.extend(w);
            }
        }
        vals.truncate(10_000);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((0.9..=1.1).contains(&var), "var {var}");
    }

    #[test]
    fn peak_normalized_mixture_has_unit_peak() {
        let s = vec![vec![0.3, -0.8, 0.2], vec![0.1, 0.4, -0.9]];
        let (x, _) = mix_instantaneous(&s, &shape1(3), &[0.34, -1.2]).unwrap();
        let peak = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-15);
    }
}
