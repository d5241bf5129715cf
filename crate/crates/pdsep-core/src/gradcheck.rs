//! Central finite-difference verification of every tape op, in 64-bit mode.
//!
//! Each case builds a random instance of one op, reduces it to a scalar with
//! a fixed random weighting, and compares the tape's gradients against
//! `(f(x+h) - f(x-h)) / 2h` for every input entry.

use crate::error::{Error, Result};
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_CASES: usize = 100;

/// Every op in the backbone catalogue.
pub const OP_NAMES: &[&str] = &[
    "add",
    "sub",
    "mul",
    "add_scalar",
    "mul_scalar",
    "matmul",
    "conv1d",
    "conv1d_transpose",
    "conv2d",
    "conv2d_transpose",
    "upsample1d",
    "upsample2d",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "dropout",
    "sum",
    "mean",
    "sum_abs",
    "sqrt",
];

#[derive(Debug, Clone)]
pub struct OpReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub tol: f64,
    pub ops: Vec<OpReport>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.ops.iter().all(|o| o.passed)
    }

    pub fn failed_ops(&self) -> Vec<&'static str> {
        self.ops
            .iter()
            .filter(|o| !o.passed)
            .map(|o| o.name)
            .collect()
    }
}

type BuildFn = Box<dyn Fn(&mut Tape<'_, f64>, &[TensorId]) -> Result<TensorId>>;

struct Case {
    inputs: Vec<Tensor<f64>>,
    build: BuildFn,
}

fn rand_vals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Magnitudes in [0.5, 1.5], signs random: keeps abs/leaky away from the
    // kink at zero so the finite difference is valid.
    (0..n)
        .map(|_| {
            let m = 0.5 + rng.random::<f64>();
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

fn rand_pos(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| 0.5 + rng.random::<f64>()).collect()
}

fn param(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::param(shape, rand_vals(rng, n)).expect("valid test tensor")
}

/// Weighted-sum readout so any output shape reduces to a scalar.
fn readout(tape: &mut Tape<'_, f64>, out: TensorId, weights: &[f64]) -> Result<TensorId> {
    let w = tape.constant_owned(weights.to_vec(), tape.shape(out).to_vec().as_slice());
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn make_case(op: &'static str, rng: &mut ChaCha8Rng) -> Case {
    match op {
        "add" | "sub" | "mul" => {
            let n = 2 + rng.random_range(0..6);
            let a = param(rng, vec![n]);
            let b = param(rng, vec![n]);
            let w = rand_vals(rng, n);
            Case {
                inputs: vec![a, b],
                build: Box::new(move |tape, ids| {
                    let out = match op {
                        "add" => tape.add(ids[0], ids[1])?,
                        "sub" => tape.sub(ids[0], ids[1])?,
                        _ => tape.mul(ids[0], ids[1])?,
                    };
                    readout(tape, out, &w)
                }),
            }
        }
        "add_scalar" | "mul_scalar" => {
            let n = 2 + rng.random_range(0..6);
            let a = param(rng, vec![n]);
            let s = rand_vals(rng, 1)[0];
            let w = rand_vals(rng, n);
            Case {
                inputs: vec![a],
                build: Box::new(move |tape, ids| {
                    let out = if op == "add_scalar" {
                        tape.add_scalar(ids[0], s)?
                    } else {
                        tape.mul_scalar(ids[0], s)?
                    };
                    readout(tape, out, &w)
                }),
            }
        }
        "matmul" => {
            let (m, k, n) = (
                1 + rng.random_range(0..3),
                1 + rng.random_range(0..3),
                1 + rng.random_range(0..3),
            );
            let a = param(rng, vec![m, k]);
            let b = param(rng, vec![k, n]);
            let w = rand_vals(rng, m * n);
            Case {
                inputs: vec![a, b],
                build: Box::new(move |tape, ids| {
                    let out = tape.matmul(ids[0], ids[1])?;
                    readout(tape, out, &w)
                }),
            }
        }
        "conv1d" | "conv1d_transpose" => {
            let c_in = 1 + rng.random_range(0..3);
            let c_out = 1 + rng.random_range(0..3);
            let k = 1 + rng.random_range(0..4);
            let stride = 1 + rng.random_range(0..2);
            let pad = rng.random_range(0..=k / 2 + 1);
            let t_in = k.max(4) + rng.random_range(0..8);
            let t_s = (t_in + 2 * pad - k) / stride + 1;
            if op == "conv1d" {
                let x = param(rng, vec![c_in, t_in]);
                let wt = param(rng, vec![c_out, c_in, k]);
                let b = param(rng, vec![c_out]);
                let w = rand_vals(rng, c_out * t_s);
                Case {
                    inputs: vec![x, wt, b],
                    build: Box::new(move |tape, ids| {
                        let out = tape.conv1d(ids[0], ids[1], Some(ids[2]), stride, pad)?;
                        readout(tape, out, &w)
                    }),
                }
            } else {
                let d = param(rng, vec![c_out, t_s]);
                let wt = param(rng, vec![c_out, c_in, k]);
                let w = rand_vals(rng, c_in * t_in);
                Case {
                    inputs: vec![d, wt],
                    build: Box::new(move |tape, ids| {
                        let out = tape.conv1d_transpose(ids[0], ids[1], t_in, stride, pad)?;
                        readout(tape, out, &w)
                    }),
                }
            }
        }
        "conv2d" | "conv2d_transpose" => {
            let c_in = 1 + rng.random_range(0..2);
            let c_out = 1 + rng.random_range(0..2);
            let k = 1 + rng.random_range(0..3);
            let stride = 1 + rng.random_range(0..2);
            let pad = rng.random_range(0..=k / 2);
            let h_in = k.max(4) + rng.random_range(0..4);
            let w_in = k.max(4) + rng.random_range(0..4);
            let h_s = (h_in + 2 * pad - k) / stride + 1;
            let w_s = (w_in + 2 * pad - k) / stride + 1;
            if op == "conv2d" {
                let x = param(rng, vec![c_in, h_in, w_in]);
                let wt = param(rng, vec![c_out, c_in, k, k]);
                let b = param(rng, vec![c_out]);
                let w = rand_vals(rng, c_out * h_s * w_s);
                Case {
                    inputs: vec![x, wt, b],
                    build: Box::new(move |tape, ids| {
                        let out = tape.conv2d(ids[0], ids[1], Some(ids[2]), stride, pad)?;
                        readout(tape, out, &w)
                    }),
                }
            } else {
                let d = param(rng, vec![c_out, h_s, w_s]);
                let wt = param(rng, vec![c_out, c_in, k, k]);
                let w = rand_vals(rng, c_in * h_in * w_in);
                Case {
                    inputs: vec![d, wt],
                    build: Box::new(move |tape, ids| {
                        let out =
                            tape.conv2d_transpose(ids[0], ids[1], h_in, w_in, stride, pad)?;
                        readout(tape, out, &w)
                    }),
                }
            }
        }
        "upsample1d" => {
            let c = 1 + rng.random_range(0..3);
            let t = 2 + rng.random_range(0..6);
            let x = param(rng, vec![c, t]);
            let w = rand_vals(rng, c * 2 * t);
            Case {
                inputs: vec![x],
                build: Box::new(move |tape, ids| {
                    let out = tape.upsample1d(ids[0])?;
                    readout(tape, out, &w)
                }),
            }
        }
        "upsample2d" => {
            let c = 1 + rng.random_range(0..2);
            let h = 2 + rng.random_range(0..4);
            let wd = 2 + rng.random_range(0..4);
            let x = param(rng, vec![c, h, wd]);
            let w = rand_vals(rng, c * 4 * h * wd);
            Case {
                inputs: vec![x],
                build: Box::new(move |tape, ids| {
                    let out = tape.upsample2d(ids[0])?;
                    readout(tape, out, &w)
                }),
            }
        }
        "leaky_relu" | "tanh" | "sigmoid" | "sum_abs" => {
            let n = 2 + rng.random_range(0..8);
            let x = param(rng, vec![n]);
            let w = rand_vals(rng, n);
            Case {
                inputs: vec![x],
                build: Box::new(move |tape, ids| match op {
                    "leaky_relu" => {
                        let out = tape.leaky_relu(ids[0], 0.2)?;
                        readout(tape, out, &w)
                    }
                    "tanh" => {
                        let out = tape.tanh_act(ids[0])?;
                        readout(tape, out, &w)
                    }
                    "sigmoid" => {
                        let out = tape.sigmoid(ids[0])?;
                        readout(tape, out, &w)
                    }
                    _ => tape.sum_abs(ids[0]),
                }),
            }
        }
        "dropout" => {
            let n = 4 + rng.random_range(0..8);
            let x = param(rng, vec![n]);
            let w = rand_vals(rng, n);
            let mask_seed: u64 = rng.random();
            Case {
                inputs: vec![x],
                build: Box::new(move |tape, ids| {
                    // Same seed per evaluation: the mask is part of f, not noise.
                    let mut mask_rng = ChaCha8Rng::seed_from_u64(mask_seed);
                    let out = tape.dropout(ids[0], 0.3, &mut mask_rng)?;
                    readout(tape, out, &w)
                }),
            }
        }
        "sum" | "mean" => {
            let n = 2 + rng.random_range(0..8);
            let x = param(rng, vec![n]);
            Case {
                inputs: vec![x],
                build: Box::new(move |tape, ids| {
                    if op == "sum" {
                        tape.sum(ids[0])
                    } else {
                        tape.mean(ids[0])
                    }
                }),
            }
        }
        "sqrt" => {
            let n = 2 + rng.random_range(0..6);
            let x = Tensor::param(vec![n], rand_pos(rng, n)).unwrap();
            let w = rand_vals(rng, n);
            Case {
                inputs: vec![x],
                build: Box::new(move |tape, ids| {
                    let out = tape.sqrt_elem(ids[0])?;
                    readout(tape, out, &w)
                }),
            }
        }
        other => unreachable!("unknown op {other}"),
    }
}

fn eval_loss(inputs: &[Tensor<f64>], build: &BuildFn) -> Result<f64> {
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = build(&mut tape, &ids)?;
    Ok(tape.scalar(loss))
}

fn eval_grads(inputs: &[Tensor<f64>], build: &BuildFn) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let loss = build(&mut tape, &ids)?;
    tape.backward(loss)?;
    Ok(ids
        .iter()
        .zip(inputs)
        .map(|(&id, t)| {
            tape.take_grad(id)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect())
}

/// Max relative error of one case; `negate_analytic` injects a sign fault.
fn check_case(case: &mut Case, h: f64, negate_analytic: bool) -> Result<f64> {
    let analytic = eval_grads(&case.inputs, &case.build)?;
    let mut max_err = 0.0f64;
    for i in 0..case.inputs.len() {
        for j in 0..case.inputs[i].numel() {
            let orig = case.inputs[i].data()[j];
            case.inputs[i].data_mut()[j] = orig + h;
            let up = eval_loss(&case.inputs, &case.build)?;
            case.inputs[i].data_mut()[j] = orig - h;
            let dn = eval_loss(&case.inputs, &case.build)?;
            case.inputs[i].data_mut()[j] = orig;
            let fd = (up - dn) / (2.0 * h);
            let mut a = analytic[i][j];
            if negate_analytic {
                a = -a;
            }
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}

/// Run the finite-difference suite over every catalogue op.
///
/// `fault` names an op whose analytic gradient is negated before comparison,
/// emulating a sign bug in that backward rule (test fixture for the harness).
pub fn run_suite(
    tol: f64,
    cases_per_op: usize,
    seed: u64,
    fault: Option<&str>,
) -> Result<SuiteReport> {
    if let Some(f) = fault {
        if !OP_NAMES.contains(&f) {
            return Err(Error::UnknownStrategy {
                family: "gradcheck op",
                name: f.to_string(),
                known: OP_NAMES.join(", "),
            });
        }
    }
    let mut ops = Vec::with_capacity(OP_NAMES.len());
    for (oi, &name) in OP_NAMES.iter().enumerate() {
        let mut max_err = 0.0f64;
        for ci in 0..cases_per_op {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ ((oi as u64) << 32) ^ ci as u64);
            let mut case = make_case(name, &mut rng);
            let err = check_case(&mut case, DEFAULT_STEP, fault == Some(name))?;
            if err > max_err {
                max_err = err;
            }
        }
        ops.push(OpReport {
            name,
            cases: cases_per_op,
            max_rel_err: max_err,
            passed: max_err <= tol,
        });
    }
    Ok(SuiteReport { tol, ops })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoke_few_cases_all_ops() {
        let report = run_suite(DEFAULT_TOL, 3, 42, None).unwrap();
        assert!(
            report.all_passed(),
            "failed ops: {:?}",
            report
                .ops
                .iter()
                .filter(|o| !o.passed)
                .map(|o| (o.name, o.max_rel_err))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn injected_sign_fault_is_caught_and_named() {
        let report = run_suite(DEFAULT_TOL, 2, 42, Some("tanh")).unwrap();
        assert!(!report.all_passed());
        assert_eq!(report.failed_ops(), vec!["tanh"]);
    }
}
