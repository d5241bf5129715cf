//! Single-channel blind source separation at desk scale: synthesize
//! instantaneous and convolutive mixtures, train a bank of parallel dual
//! adversarial pairs that map one mixture to its N sources, and score
//! separations with PSNR and Pearson correlation.
//!
//! Modules:
//! - [`tensor`], [`tape`], [`kernels`]: dense tensors and reverse-mode AD
//! - [`optim`]: RMSProp and critic weight clipping
//! - [`gradcheck`]: finite-difference verification of every op
//! - [`sources`], [`mixing`], [`dataset`]: base sources, mixing models, and
//!   the PDG1 container
//! - [`nets`], [`loss`]: U-shaped generators, patch critics, and the
//!   adversarial/cycle losses with clip or gradient-penalty regularization
//! - [`trainer`], [`checkpoint`]: the training schedule and persistence
//! - [`metrics`]: MSE, PSNR, correlation, and report CSVs
//! - [`config`]: key=value run configuration

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gradcheck;
mod kernels;
pub mod loss;
pub mod metrics;
pub mod mixing;
pub mod nets;
pub mod optim;
pub mod sources;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Real, Scalar, Tensor};

/// Timing hooks for the in-repo benchmark examples. Not part of the API.
#[doc(hidden)]
pub mod bench_internal {
    use crate::kernels::{conv1d_dw, conv1d_dx, conv1d_fwd, Conv1dGeom};
    use std::time::Instant;

    pub struct ConvCase {
        pub c_in: usize,
        pub t_in: usize,
        pub c_out: usize,
        pub k: usize,
        pub stride: usize,
    }

    pub struct ConvTiming {
        pub macs: usize,
        pub fwd_us: f64,
        pub dx_us: f64,
        pub dw_us: f64,
    }

    pub fn time_conv1d(case: &ConvCase, iters: usize) -> ConvTiming {
        let pad = case.k / 2;
        let t_out = Conv1dGeom::out_len(case.t_in, case.k, case.stride, pad).unwrap();
        let g = Conv1dGeom {
            c_in: case.c_in,
            t_in: case.t_in,
            c_out: case.c_out,
            t_out,
            k: case.k,
            stride: case.stride,
            pad,
        };
        let x: Vec<f32> = (0..g.c_in * g.t_in).map(|i| (i % 23) as f32 / 11.5 - 1.0).collect();
        let w: Vec<f32> = (0..g.c_out * g.c_in * g.k).map(|i| (i % 7) as f32 / 70.0).collect();
        let b = vec![0.01f32; g.c_out];
        let mut out = vec![0.0f32; g.c_out * g.t_out];
        let dy: Vec<f32> = (0..out.len()).map(|i| (i % 13) as f32 / 13.0 - 0.5).collect();
        let mut dx = vec![0.0f32; x.len()];
        let mut dw = vec![0.0f32; w.len()];

        let t = Instant::now();
        for _ in 0..iters {
            conv1d_fwd(&x, &w, Some(&b), &g, &mut out);
        }
        let fwd_us = t.elapsed().as_secs_f64() * 1e6 / iters as f64;
        let t = Instant::now();
        for _ in 0..iters {
            conv1d_dx(&dy, &w, &g, &mut dx);
        }
        let dx_us = t.elapsed().as_secs_f64() * 1e6 / iters as f64;
        let t = Instant::now();
        for _ in 0..iters {
            conv1d_dw(&dy, &x, &g, &mut dw);
        }
        let dw_us = t.elapsed().as_secs_f64() * 1e6 / iters as f64;
        ConvTiming {
            macs: g.c_out * g.t_out * g.c_in * g.k,
            fwd_us,
            dx_us,
            dw_us,
        }
    }
}
