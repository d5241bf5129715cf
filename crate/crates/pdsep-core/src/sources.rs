//! Built-in base-source generators, registered by name.
//!
//! 1-D bank: sinusoid, sawtooth, square, band-limited noise. 2-D bank:
//! ramp, checkerboard, blob, stripes. All outputs are peak-normalized to
//! [-1, 1] and fully determined by (shape, seed).

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

/// A named, deterministic base-source generator.
pub trait Waveform: Sync {
    fn name(&self) -> &'static str;
    /// 1 for signals, 2 for images.
    fn rank(&self) -> usize;
    fn generate(&self, shape: &[usize], seed: u64) -> Vec<f64>;
}

struct Sinusoid {
    cycles: f64,
}

impl Waveform for Sinusoid {
    fn name(&self) -> &'static str {
        "sinusoid"
    }
    fn rank(&self) -> usize {
        1
    }
    fn generate(&self, shape: &[usize], _seed: u64) -> Vec<f64> {
        let t_len = shape[0];
        (0..t_len)
            .map(|t| (TAU * self.cycles * t as f64 / t_len as f64).sin())
            .collect()
    }
}

struct Sawtooth {
    cycles: f64,
}

impl Waveform for Sawtooth {
    fn name(&self) -> &'static str {
        "sawtooth"
    }
    fn rank(&self) -> usize {
        1
    }
    fn generate(&self, shape: &[usize], _seed: u64) -> Vec<f64> {
        let t_len = shape[0];
        (0..t_len)
            .map(|t| 2.0 * (self.cycles * t as f64 / t_len as f64).fract() - 1.0)
            .collect()
    }
}

struct Square {
    cycles: f64,
}

impl Waveform for Square {
    fn name(&self) -> &'static str {
        "square"
    }
    fn rank(&self) -> usize {
        1
    }
    fn generate(&self, shape: &[usize], _seed: u64) -> Vec<f64> {
        let t_len = shape[0];
        (0..t_len)
            .map(|t| {
                let phase = (self.cycles * t as f64 / t_len as f64).fract();
                if phase < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect()
    }
}

/// Sum of random-phase harmonics in a fixed band, peak-normalized.
struct BandNoise {
    lo: usize,
    hi: usize,
}

impl Waveform for BandNoise {
    fn name(&self) -> &'static str {
        "noise"
    }
    fn rank(&self) -> usize {
        1
    }
    fn generate(&self, shape: &[usize], seed: u64) -> Vec<f64> {
        let t_len = shape[0];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases: Vec<f64> = (self.lo..=self.hi)
            .map(|_| rng.random::<f64>() * TAU)
            .collect();
        let raw: Vec<f64> = (0..t_len)
            .map(|t| {
                phases
                    .iter()
                    .enumerate()
                    .map(|(i, &ph)| {
                        let h = (self.lo + i) as f64;
                        (TAU * h * t as f64 / t_len as f64 + ph).cos()
                    })
                    .sum()
            })
            .collect();
        peak_normalize(raw)
    }
}

struct Ramp2d;

impl Waveform for Ramp2d {
    fn name(&self) -> &'static str {
        "ramp"
    }
    fn rank(&self) -> usize {
        2
    }
    fn generate(&self, shape: &[usize], _seed: u64) -> Vec<f64> {
        let (h, w) = (shape[0], shape[1]);
        let mut out = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                let v = (i as f64 / (h - 1).max(1) as f64 + j as f64 / (w - 1).max(1) as f64)
                    - 1.0;
                out.push(v);
            }
        }
        out
    }
}

struct Checkerboard2d {
    cell: usize,
}

impl Waveform for Checkerboard2d {
    fn name(&self) -> &'static str {
        "checkerboard"
    }
    fn rank(&self) -> usize {
        2
    }
    fn generate(&self, shape: &[usize], _seed: u64) -> Vec<f64> {
        let (h, w) = (shape[0], shape[1]);
        let mut out = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                let v = if (i / self.cell + j / self.cell) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                out.push(v);
            }
        }
        out
    }
}

struct Blob2d;

impl Waveform for Blob2d {
    fn name(&self) -> &'static str {
        "blob"
    }
    fn rank(&self) -> usize {
        2
    }
    fn generate(&self, shape: &[usize], _seed: u64) -> Vec<f64> {
        let (h, w) = (shape[0], shape[1]);
        let (ch, cw) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
        let sigma2 = (h.min(w) as f64 / 4.0).powi(2);
        let mut out = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                let d2 = (i as f64 - ch).powi(2) + (j as f64 - cw).powi(2);
                out.push(2.0 * (-d2 / (2.0 * sigma2)).exp() - 1.0);
            }
        }
        out
    }
}

struct Stripes2d {
    period: usize,
}

impl Waveform for Stripes2d {
    fn name(&self) -> &'static str {
        "stripes"
    }
    fn rank(&self) -> usize {
        2
    }
    fn generate(&self, shape: &[usize], _seed: u64) -> Vec<f64> {
        let (h, w) = (shape[0], shape[1]);
        let mut out = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                out.push((TAU * ((i + j) % self.period) as f64 / self.period as f64).sin());
            }
        }
        peak_normalize(out)
    }
}

fn peak_normalize(mut v: Vec<f64>) -> Vec<f64> {
    let peak = v.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if peak > 0.0 {
        for x in &mut v {
            *x /= peak;
        }
    }
    v
}

static SINUSOID: Sinusoid = Sinusoid { cycles: 4.0 };
static SAWTOOTH: Sawtooth = Sawtooth { cycles: 2.0 };
static SQUARE: Square = Square { cycles: 3.0 };
static NOISE: BandNoise = BandNoise { lo: 8, hi: 24 };
static RAMP: Ramp2d = Ramp2d;
static CHECKERBOARD: Checkerboard2d = Checkerboard2d { cell: 4 };
static BLOB: Blob2d = Blob2d;
static STRIPES: Stripes2d = Stripes2d { period: 8 };

static REGISTRY: &[&dyn Waveform] = &[
    &SINUSOID,
    &SAWTOOTH,
    &SQUARE,
    &NOISE,
    &RAMP,
    &CHECKERBOARD,
    &BLOB,
    &STRIPES,
];

/// Look up a waveform by its registered name.
pub fn waveform(name: &str) -> Result<&'static dyn Waveform> {
    REGISTRY
        .iter()
        .find(|w| w.name() == name)
        .copied()
        .ok_or_else(|| Error::UnknownStrategy {
            family: "waveform",
            name: name.to_string(),
            known: REGISTRY
                .iter()
                .map(|w| w.name())
                .collect::<Vec<_>>()
                .join(", "),
        })
}

/// Default bank ordering for the given rank.
pub fn default_bank_names(rank: usize) -> &'static [&'static str] {
    if rank == 1 {
        &["sinusoid", "sawtooth", "square", "noise"]
    } else {
        &["ramp", "checkerboard", "blob", "stripes"]
    }
}

/// Generate the named sources at the given shape. Seeded generators derive
/// per-source seeds from `seed` and their position in the list.
pub fn bank(names: &[&str], shape: &[usize], seed: u64) -> Result<Vec<Vec<f64>>> {
    let rank = shape.len();
    let mut out = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let w = waveform(name)?;
        if w.rank() != rank {
            return Err(Error::InvalidArgument(format!(
                "waveform '{name}' is {}-D, requested shape is {rank}-D",
                w.rank()
            )));
        }
        out.push(w.generate(shape, seed.wrapping_add(i as u64)));
    }
    Ok(out)
}
