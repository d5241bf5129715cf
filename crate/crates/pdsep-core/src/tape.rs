//! Wengert tape: records forward operations, replays them in reverse for
//! gradients. One tape per loss evaluation; parameters are borrowed leaves,
//! activations are owned nodes. Ops are recorded only while some input on
//! the path requires a gradient, so inference-only forwards stay cheap.

use crate::error::{Error, Result};
use crate::kernels::*;
use crate::tensor::{Dims, Scalar, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorId(usize);

enum Data<'p, F> {
    Owned(Vec<F>),
    Borrowed(&'p [F]),
}

impl<'p, F> Data<'p, F> {
    #[inline(always)]
    fn as_slice(&self) -> &[F] {
        match self {
            Data::Owned(v) => v,
            Data::Borrowed(s) => s,
        }
    }
}

struct Node<'p, F> {
    data: Data<'p, F>,
    dims: Dims,
    requires_grad: bool,
}

enum Op<F> {
    Add { a: usize, b: usize, out: usize },
    Sub { a: usize, b: usize, out: usize },
    Mul { a: usize, b: usize, out: usize },
    AddScalar { a: usize, out: usize },
    MulScalar { a: usize, s: F, out: usize },
    Matmul { a: usize, b: usize, out: usize, m: usize, k: usize, n: usize },
    Conv1d { x: usize, w: usize, bias: Option<usize>, out: usize, g: Conv1dGeom },
    ConvT1d { d: usize, w: usize, out: usize, g: Conv1dGeom },
    Conv2d { x: usize, w: usize, bias: Option<usize>, out: usize, g: Conv2dGeom },
    ConvT2d { d: usize, w: usize, out: usize, g: Conv2dGeom },
    Upsample1d { x: usize, out: usize, c: usize, t: usize },
    Upsample2d { x: usize, out: usize, c: usize, h: usize, w: usize },
    LeakyRelu { x: usize, out: usize, slope: F },
    Tanh { x: usize, out: usize },
    Sigmoid { x: usize, out: usize },
    Dropout { x: usize, out: usize, mask: Vec<F> },
    Sum { x: usize, out: usize },
    Mean { x: usize, out: usize },
    SumAbs { x: usize, out: usize },
    Sqrt { x: usize, out: usize },
}

pub struct Tape<'p, F: Scalar> {
    nodes: Vec<Node<'p, F>>,
    ops: Vec<Op<F>>,
    grads: Vec<Option<Vec<F>>>,
}

impl<'p, F: Scalar> Default for Tape<'p, F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, F: Scalar> Tape<'p, F> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::with_capacity(128),
            ops: Vec::with_capacity(128),
            grads: Vec::new(),
        }
    }

    // ── Leaves ───────────────────────────────────────────────────────

    /// Register a tensor as a leaf; its `requires_grad` flag decides
    /// whether gradients flow to it. The data is borrowed, not copied.
    pub fn leaf(&mut self, t: &'p Tensor<F>) -> TensorId {
        self.push(
            Data::Borrowed(t.data()),
            Dims::from_slice(t.shape()),
            t.requires_grad,
        )
    }

    /// Register a tensor as a leaf with gradients forced off, regardless of
    /// its `requires_grad` flag. Used for detached forwards.
    pub fn leaf_detached(&mut self, t: &'p Tensor<F>) -> TensorId {
        self.push(Data::Borrowed(t.data()), Dims::from_slice(t.shape()), false)
    }

    /// Borrowed constant leaf (no gradient).
    pub fn constant(&mut self, data: &'p [F], shape: &[usize]) -> TensorId {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        self.push(Data::Borrowed(data), Dims::from_slice(shape), false)
    }

    /// Owned constant leaf (no gradient).
    pub fn constant_owned(&mut self, data: Vec<F>, shape: &[usize]) -> TensorId {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        self.push(Data::Owned(data), Dims::from_slice(shape), false)
    }

    fn push(&mut self, data: Data<'p, F>, dims: Dims, requires_grad: bool) -> TensorId {
        self.nodes.push(Node {
            data,
            dims,
            requires_grad,
        });
        TensorId(self.nodes.len() - 1)
    }

    // ── Accessors ────────────────────────────────────────────────────

    pub fn value(&self, id: TensorId) -> &[F] {
        self.nodes[id.0].data.as_slice()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.nodes[id.0].dims.as_slice()
    }

    pub fn numel(&self, id: TensorId) -> usize {
        self.nodes[id.0].dims.numel()
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, id: TensorId) -> F {
        debug_assert_eq!(self.numel(id), 1);
        self.value(id)[0]
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    // ── Elementwise ops ──────────────────────────────────────────────

    fn check_same(&self, op: &'static str, a: TensorId, b: TensorId) -> Result<()> {
        if self.nodes[a.0].dims != self.nodes[b.0].dims {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.nodes[a.0].dims.to_vec(),
                rhs: self.nodes[b.0].dims.to_vec(),
            });
        }
        Ok(())
    }

    fn out_like(&mut self, src: TensorId, data: Vec<F>, rg: bool) -> TensorId {
        let dims = self.nodes[src.0].dims;
        self.push(Data::Owned(data), dims, rg)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check_same("add", a, b)?;
        let data: Vec<F> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        let out = self.out_like(a, data, rg);
        if rg {
            self.ops.push(Op::Add { a: a.0, b: b.0, out: out.0 });
        }
        Ok(out)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check_same("sub", a, b)?;
        let data: Vec<F> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x - y)
            .collect();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        let out = self.out_like(a, data, rg);
        if rg {
            self.ops.push(Op::Sub { a: a.0, b: b.0, out: out.0 });
        }
        Ok(out)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check_same("mul", a, b)?;
        let data: Vec<F> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        let out = self.out_like(a, data, rg);
        if rg {
            self.ops.push(Op::Mul { a: a.0, b: b.0, out: out.0 });
        }
        Ok(out)
    }

    pub fn add_scalar(&mut self, a: TensorId, s: F) -> Result<TensorId> {
        let data: Vec<F> = self.value(a).iter().map(|&x| x + s).collect();
        let rg = self.requires_grad(a);
        let out = self.out_like(a, data, rg);
        if rg {
            self.ops.push(Op::AddScalar { a: a.0, out: out.0 });
        }
        Ok(out)
    }

    pub fn mul_scalar(&mut self, a: TensorId, s: F) -> Result<TensorId> {
        let data: Vec<F> = self.value(a).iter().map(|&x| x * s).collect();
        let rg = self.requires_grad(a);
        let out = self.out_like(a, data, rg);
        if rg {
            self.ops.push(Op::MulScalar { a: a.0, s, out: out.0 });
        }
        Ok(out)
    }

    // ── Linear algebra ───────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut data = vec![F::zero(); m * n];
        matmul_nn(self.value(a), self.value(b), m, k, n, &mut data);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        let out = self.push(Data::Owned(data), Dims::from_slice(&[m, n]), rg);
        if rg {
            self.ops.push(Op::Matmul { a: a.0, b: b.0, out: out.0, m, k, n });
        }
        Ok(out)
    }

    // ── Convolutions ─────────────────────────────────────────────────

    /// 1-D cross-correlation with zero padding. `x: [C_in, T]`,
    /// `w: [C_out, C_in, K]`, optional `bias: [C_out]`.
    pub fn conv1d(
        &mut self,
        x: TensorId,
        w: TensorId,
        bias: Option<TensorId>,
        stride: usize,
        pad: usize,
    ) -> Result<TensorId> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        let mismatch = || Error::ShapeMismatch {
            op: "conv1d",
            lhs: sx.to_vec(),
            rhs: sw.to_vec(),
        };
        if sx.len() != 2 || sw.len() != 3 || sx[0] != sw[1] {
            return Err(mismatch());
        }
        let t_out = Conv1dGeom::out_len(sx[1], sw[2], stride, pad).ok_or_else(mismatch)?;
        let g = Conv1dGeom {
            c_in: sx[0],
            t_in: sx[1],
            c_out: sw[0],
            t_out,
            k: sw[2],
            stride,
            pad,
        };
        if let Some(b) = bias {
            if self.shape(b) != [g.c_out] {
                return Err(Error::ShapeMismatch {
                    op: "conv1d bias",
                    lhs: self.shape(b).to_vec(),
                    rhs: vec![g.c_out],
                });
            }
        }
        let mut data = vec![F::zero(); g.c_out * g.t_out];
        conv1d_fwd(
            self.value(x),
            self.value(w),
            bias.map(|b| self.value(b)),
            &g,
            &mut data,
        );
        let rg = self.requires_grad(x)
            || self.requires_grad(w)
            || bias.is_some_and(|b| self.requires_grad(b));
        let out = self.push(Data::Owned(data), Dims::from_slice(&[g.c_out, g.t_out]), rg);
        if rg {
            self.ops.push(Op::Conv1d {
                x: x.0,
                w: w.0,
                bias: bias.map(|b| b.0),
                out: out.0,
                g,
            });
        }
        Ok(out)
    }

    /// Transposed 1-D convolution (adjoint of `conv1d` for the same
    /// geometry): scatters `d: [C_out, T_s]` through `w` into `[C_in, t_out]`.
    pub fn conv1d_transpose(
        &mut self,
        d: TensorId,
        w: TensorId,
        t_out: usize,
        stride: usize,
        pad: usize,
    ) -> Result<TensorId> {
        let (sd, sw) = (self.shape(d), self.shape(w));
        let mismatch = || Error::ShapeMismatch {
            op: "conv1d_transpose",
            lhs: sd.to_vec(),
            rhs: sw.to_vec(),
        };
        if sd.len() != 2 || sw.len() != 3 || sd[0] != sw[0] {
            return Err(mismatch());
        }
        // The adjoint geometry treats t_out as the conv's input length.
        if Conv1dGeom::out_len(t_out, sw[2], stride, pad) != Some(sd[1]) {
            return Err(mismatch());
        }
        let g = Conv1dGeom {
            c_in: sw[1],
            t_in: t_out,
            c_out: sw[0],
            t_out: sd[1],
            k: sw[2],
            stride,
            pad,
        };
        let mut data = vec![F::zero(); g.c_in * g.t_in];
        conv1d_dx(self.value(d), self.value(w), &g, &mut data);
        let rg = self.requires_grad(d) || self.requires_grad(w);
        let out = self.push(Data::Owned(data), Dims::from_slice(&[g.c_in, g.t_in]), rg);
        if rg {
            self.ops.push(Op::ConvT1d { d: d.0, w: w.0, out: out.0, g });
        }
        Ok(out)
    }

    /// 2-D cross-correlation with zero padding. `x: [C_in, H, W]`,
    /// `w: [C_out, C_in, K, K]`, optional `bias: [C_out]`.
    pub fn conv2d(
        &mut self,
        x: TensorId,
        w: TensorId,
        bias: Option<TensorId>,
        stride: usize,
        pad: usize,
    ) -> Result<TensorId> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        let mismatch = || Error::ShapeMismatch {
            op: "conv2d",
            lhs: sx.to_vec(),
            rhs: sw.to_vec(),
        };
        if sx.len() != 3 || sw.len() != 4 || sx[0] != sw[1] || sw[2] != sw[3] {
            return Err(mismatch());
        }
        let h_out = Conv1dGeom::out_len(sx[1], sw[2], stride, pad).ok_or_else(mismatch)?;
        let w_out = Conv1dGeom::out_len(sx[2], sw[3], stride, pad).ok_or_else(mismatch)?;
        let g = Conv2dGeom {
            c_in: sx[0],
            h_in: sx[1],
            w_in: sx[2],
            c_out: sw[0],
            h_out,
            w_out,
            k: sw[2],
            stride,
            pad,
        };
        if let Some(b) = bias {
            if self.shape(b) != [g.c_out] {
                return Err(Error::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: self.shape(b).to_vec(),
                    rhs: vec![g.c_out],
                });
            }
        }
        let mut data = vec![F::zero(); g.c_out * g.h_out * g.w_out];
        conv2d_fwd(
            self.value(x),
            self.value(w),
            bias.map(|b| self.value(b)),
            &g,
            &mut data,
        );
        let rg = self.requires_grad(x)
            || self.requires_grad(w)
            || bias.is_some_and(|b| self.requires_grad(b));
        let out = self.push(
            Data::Owned(data),
            Dims::from_slice(&[g.c_out, g.h_out, g.w_out]),
            rg,
        );
        if rg {
            self.ops.push(Op::Conv2d {
                x: x.0,
                w: w.0,
                bias: bias.map(|b| b.0),
                out: out.0,
                g,
            });
        }
        Ok(out)
    }

    /// Transposed 2-D convolution (adjoint of `conv2d`).
    pub fn conv2d_transpose(
        &mut self,
        d: TensorId,
        w: TensorId,
        h_out: usize,
        w_out: usize,
        stride: usize,
        pad: usize,
    ) -> Result<TensorId> {
        let (sd, sw) = (self.shape(d), self.shape(w));
        let mismatch = || Error::ShapeMismatch {
            op: "conv2d_transpose",
            lhs: sd.to_vec(),
            rhs: sw.to_vec(),
        };
        if sd.len() != 3 || sw.len() != 4 || sd[0] != sw[0] || sw[2] != sw[3] {
            return Err(mismatch());
        }
        if Conv1dGeom::out_len(h_out, sw[2], stride, pad) != Some(sd[1])
            || Conv1dGeom::out_len(w_out, sw[3], stride, pad) != Some(sd[2])
        {
            return Err(mismatch());
        }
        let g = Conv2dGeom {
            c_in: sw[1],
            h_in: h_out,
            w_in: w_out,
            c_out: sw[0],
            h_out: sd[1],
            w_out: sd[2],
            k: sw[2],
            stride,
            pad,
        };
        let mut data = vec![F::zero(); g.c_in * g.h_in * g.w_in];
        conv2d_dx(self.value(d), self.value(w), &g, &mut data);
        let rg = self.requires_grad(d) || self.requires_grad(w);
        let out = self.push(
            Data::Owned(data),
            Dims::from_slice(&[g.c_in, g.h_in, g.w_in]),
            rg,
        );
        if rg {
            self.ops.push(Op::ConvT2d { d: d.0, w: w.0, out: out.0, g });
        }
        Ok(out)
    }

    // ── Resampling ───────────────────────────────────────────────────

    pub fn upsample1d(&mut self, x: TensorId) -> Result<TensorId> {
        let sx = self.shape(x);
        if sx.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "upsample1d",
                lhs: sx.to_vec(),
                rhs: vec![0, 0],
            });
        }
        let (c, t) = (sx[0], sx[1]);
        let mut data = vec![F::zero(); c * 2 * t];
        upsample1d_fwd(self.value(x), c, t, &mut data);
        let rg = self.requires_grad(x);
        let out = self.push(Data::Owned(data), Dims::from_slice(&[c, 2 * t]), rg);
        if rg {
            self.ops.push(Op::Upsample1d { x: x.0, out: out.0, c, t });
        }
        Ok(out)
    }

    pub fn upsample2d(&mut self, x: TensorId) -> Result<TensorId> {
        let sx = self.shape(x);
        if sx.len() != 3 {
            return Err(Error::ShapeMismatch {
                op: "upsample2d",
                lhs: sx.to_vec(),
                rhs: vec![0, 0, 0],
            });
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        let mut data = vec![F::zero(); c * 4 * h * w];
        upsample2d_fwd(self.value(x), c, h, w, &mut data);
        let rg = self.requires_grad(x);
        let out = self.push(Data::Owned(data), Dims::from_slice(&[c, 2 * h, 2 * w]), rg);
        if rg {
            self.ops.push(Op::Upsample2d { x: x.0, out: out.0, c, h, w });
        }
        Ok(out)
    }

    // ── Activations & noise ──────────────────────────────────────────

    pub fn leaky_relu(&mut self, x: TensorId, slope: F) -> Result<TensorId> {
        let data: Vec<F> = self
            .value(x)
            .iter()
            .map(|&v| if v > F::zero() { v } else { v * slope })
            .collect();
        let rg = self.requires_grad(x);
        let out = self.out_like(x, data, rg);
        if rg {
            self.ops.push(Op::LeakyRelu { x: x.0, out: out.0, slope });
        }
        Ok(out)
    }

    pub fn tanh_act(&mut self, x: TensorId) -> Result<TensorId> {
        let data: Vec<F> = self.value(x).iter().map(|&v| v.tanh()).collect();
        let rg = self.requires_grad(x);
        let out = self.out_like(x, data, rg);
        if rg {
            self.ops.push(Op::Tanh { x: x.0, out: out.0 });
        }
        Ok(out)
    }

    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId> {
        let one = F::one();
        let data: Vec<F> = self
            .value(x)
            .iter()
            .map(|&v| one / (one + (-v).exp()))
            .collect();
        let rg = self.requires_grad(x);
        let out = self.out_like(x, data, rg);
        if rg {
            self.ops.push(Op::Sigmoid { x: x.0, out: out.0 });
        }
        Ok(out)
    }

    /// Inverted dropout: keeps entries with probability `1 - rate`, scaling
    /// survivors by `1/(1-rate)`. The mask is sampled fresh per call.
    pub fn dropout(&mut self, x: TensorId, rate: f64, rng: &mut ChaCha8Rng) -> Result<TensorId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must be in [0,1), got {rate}"
            )));
        }
        let keep_scale = F::of_f64(1.0 / (1.0 - rate));
        // 32-bit threshold draw: one ChaCha word per element.
        let threshold = ((rate * 4294967296.0) as u64).min(u32::MAX as u64) as u32;
        let mask: Vec<F> = (0..self.numel(x))
            .map(|_| {
                if rng.random::<u32>() < threshold {
                    F::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let data: Vec<F> = self
            .value(x)
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let rg = self.requires_grad(x);
        let out = self.out_like(x, data, rg);
        if rg {
            self.ops.push(Op::Dropout { x: x.0, out: out.0, mask });
        }
        Ok(out)
    }

    // ── Reductions ───────────────────────────────────────────────────

    fn reduce(&mut self, x: TensorId, v: F, op: fn(usize, usize) -> Op<F>) -> TensorId {
        let rg = self.requires_grad(x);
        let out = self.push(Data::Owned(vec![v]), Dims::from_slice(&[1]), rg);
        if rg {
            self.ops.push(op(x.0, out.0));
        }
        out
    }

    pub fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        let mut acc = F::zero();
        for v in self.value(x) {
            acc += *v;
        }
        Ok(self.reduce(x, acc, |x, out| Op::Sum { x, out }))
    }

    pub fn mean(&mut self, x: TensorId) -> Result<TensorId> {
        let n = F::from_usize(self.numel(x)).unwrap();
        let mut acc = F::zero();
        for v in self.value(x) {
            acc += *v;
        }
        Ok(self.reduce(x, acc / n, |x, out| Op::Mean { x, out }))
    }

    /// L1: sum of absolute values.
    pub fn sum_abs(&mut self, x: TensorId) -> Result<TensorId> {
        let mut acc = F::zero();
        for v in self.value(x) {
            acc += v.abs();
        }
        Ok(self.reduce(x, acc, |x, out| Op::SumAbs { x, out }))
    }

    /// Elementwise square root (entries must be non-negative).
    pub fn sqrt_elem(&mut self, x: TensorId) -> Result<TensorId> {
        if self.value(x).iter().any(|v| *v < F::zero()) {
            return Err(Error::InvalidArgument(
                "sqrt of negative entry".to_string(),
            ));
        }
        let data: Vec<F> = self.value(x).iter().map(|&v| v.sqrt()).collect();
        let rg = self.requires_grad(x);
        let out = self.out_like(x, data, rg);
        if rg {
            self.ops.push(Op::Sqrt { x: x.0, out: out.0 });
        }
        Ok(out)
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Gradients are reset at entry, so
    /// repeated calls recompute rather than accumulate. After the pass,
    /// gradients are retained for leaves; interior buffers are recycled
    /// while the sweep consumes them.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.numel(loss) != 1 {
            return Err(Error::NonScalarLoss {
                shape: self.shape(loss).to_vec(),
            });
        }
        if !self.requires_grad(loss) {
            return Err(Error::UntapedBackward);
        }
        self.grads.clear();
        self.grads.resize_with(self.nodes.len(), || None);
        self.grads[loss.0] = Some(vec![F::one()]);

        for idx in (0..self.ops.len()).rev() {
            // Ops are recorded in forward order; each output is produced by
            // exactly one op, so a single reverse sweep visits every node once.
            self.backward_op(idx);
        }
        Ok(())
    }

    /// Gradient of a node after `backward`, if any reached it.
    pub fn grad(&self, id: TensorId) -> Option<&[F]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn take_grad(&mut self, id: TensorId) -> Option<Vec<F>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }

    /// Copy a leaf's gradient into the tensor it was created from.
    pub fn export_grad(&self, id: TensorId, t: &mut Tensor<F>) -> Result<()> {
        let g = self.grad(id).ok_or(Error::MissingGrad)?;
        t.grad = Some(g.to_vec());
        Ok(())
    }

    fn add_grad(&mut self, node: usize, contrib: &[F]) {
        if !self.nodes[node].requires_grad {
            return;
        }
        match &mut self.grads[node] {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += *ci;
                }
            }
            None => self.grads[node] = Some(contrib.to_vec()),
        }
    }

    /// Like `add_grad` but consumes the contribution, avoiding a copy when
    /// this is the first gradient reaching the node.
    fn add_grad_vec(&mut self, node: usize, contrib: Vec<F>) {
        if !self.nodes[node].requires_grad {
            return;
        }
        match &mut self.grads[node] {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += ci;
                }
            }
            None => self.grads[node] = Some(contrib),
        }
    }

    /// Consume the upstream gradient of `out`. Ops are replayed in reverse,
    /// so every consumer of `out` has already accumulated into it and the
    /// buffer is free to be reused by this op's rule.
    fn take_dy(&mut self, out: usize) -> Option<Vec<F>> {
        self.grads[out].take()
    }

    /// Take-or-zero gradient buffer for a node that needs accumulation in place.
    fn grad_buf(&mut self, node: usize) -> Vec<F> {
        match self.grads[node].take() {
            Some(g) => g,
            None => vec![F::zero(); self.nodes[node].dims.numel()],
        }
    }

    fn backward_op(&mut self, idx: usize) {
        let op = std::mem::replace(&mut self.ops[idx], Op::Sum { x: 0, out: 0 });
        // Rules consume the upstream gradient; where the contribution is an
        // elementwise transform of it, the buffer is mutated in place and
        // moved along instead of reallocated.
        match &op {
            Op::Add { a, b, out } => {
                if let Some(dy) = self.take_dy(*out) {
                    self.add_grad(*a, &dy);
                    self.add_grad_vec(*b, dy);
                }
            }
            Op::Sub { a, b, out } => {
                if let Some(mut dy) = self.take_dy(*out) {
                    self.add_grad(*a, &dy);
                    if self.nodes[*b].requires_grad {
                        for v in dy.iter_mut() {
                            *v = -*v;
                        }
                        self.add_grad_vec(*b, dy);
                    }
                }
            }
            Op::Mul { a, b, out } => {
                if let Some(mut dy) = self.take_dy(*out) {
                    if self.nodes[*a].requires_grad {
                        let da: Vec<F> = dy
                            .iter()
                            .zip(self.nodes[*b].data.as_slice())
                            .map(|(&d, &bv)| d * bv)
                            .collect();
                        self.add_grad_vec(*a, da);
                    }
                    if self.nodes[*b].requires_grad {
                        for (d, &av) in dy.iter_mut().zip(self.nodes[*a].data.as_slice()) {
                            *d *= av;
                        }
                        self.add_grad_vec(*b, dy);
                    }
                }
            }
            Op::AddScalar { a, out } => {
                if let Some(dy) = self.take_dy(*out) {
                    self.add_grad_vec(*a, dy);
                }
            }
            Op::MulScalar { a, s, out } => {
                if let Some(mut dy) = self.take_dy(*out) {
                    if self.nodes[*a].requires_grad {
                        for d in dy.iter_mut() {
                            *d *= *s;
                        }
                        self.add_grad_vec(*a, dy);
                    }
                }
            }
            Op::Matmul { a, b, out, m, k, n } => {
                if let Some(dy) = self.take_dy(*out) {
                    if self.nodes[*a].requires_grad {
                        let mut da = vec![F::zero(); m * k];
                        matmul_nt(&dy, self.nodes[*b].data.as_slice(), *m, *n, *k, &mut da);
                        self.add_grad_vec(*a, da);
                    }
                    if self.nodes[*b].requires_grad {
                        let mut db = vec![F::zero(); k * n];
                        matmul_tn(self.nodes[*a].data.as_slice(), &dy, *k, *m, *n, &mut db);
                        self.add_grad_vec(*b, db);
                    }
                }
            }
            Op::Conv1d { x, w, bias, out, g } => {
                if let Some(dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        let mut dx = self.grad_buf(*x);
                        conv1d_dx(&dy, self.nodes[*w].data.as_slice(), g, &mut dx);
                        self.grads[*x] = Some(dx);
                    }
                    if self.nodes[*w].requires_grad {
                        let mut dw = self.grad_buf(*w);
                        conv1d_dw(&dy, self.nodes[*x].data.as_slice(), g, &mut dw);
                        self.grads[*w] = Some(dw);
                    }
                    if let Some(b) = bias {
                        if self.nodes[*b].requires_grad {
                            let mut db = self.grad_buf(*b);
                            conv_db(&dy, g.c_out, g.t_out, &mut db);
                            self.grads[*b] = Some(db);
                        }
                    }
                }
            }
            Op::ConvT1d { d, w, out, g } => {
                // z = conv1d_dx(d, w); adjoint: dd = conv1d_fwd(dz, w),
                // dw accumulates conv1d_dw(d, dz).
                if let Some(dz) = self.take_dy(*out) {
                    if self.nodes[*d].requires_grad {
                        let mut dd = vec![F::zero(); g.c_out * g.t_out];
                        conv1d_fwd(&dz, self.nodes[*w].data.as_slice(), None, g, &mut dd);
                        self.add_grad_vec(*d, dd);
                    }
                    if self.nodes[*w].requires_grad {
                        let mut dw = self.grad_buf(*w);
                        conv1d_dw(self.nodes[*d].data.as_slice(), &dz, g, &mut dw);
                        self.grads[*w] = Some(dw);
                    }
                }
            }
            Op::Conv2d { x, w, bias, out, g } => {
                if let Some(dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        let mut dx = self.grad_buf(*x);
                        conv2d_dx(&dy, self.nodes[*w].data.as_slice(), g, &mut dx);
                        self.grads[*x] = Some(dx);
                    }
                    if self.nodes[*w].requires_grad {
                        let mut dw = self.grad_buf(*w);
                        conv2d_dw(&dy, self.nodes[*x].data.as_slice(), g, &mut dw);
                        self.grads[*w] = Some(dw);
                    }
                    if let Some(b) = bias {
                        if self.nodes[*b].requires_grad {
                            let mut db = self.grad_buf(*b);
                            conv_db(&dy, g.c_out, g.h_out * g.w_out, &mut db);
                            self.grads[*b] = Some(db);
                        }
                    }
                }
            }
            Op::ConvT2d { d, w, out, g } => {
                if let Some(dz) = self.take_dy(*out) {
                    if self.nodes[*d].requires_grad {
                        let mut dd = vec![F::zero(); g.c_out * g.h_out * g.w_out];
                        conv2d_fwd(&dz, self.nodes[*w].data.as_slice(), None, g, &mut dd);
                        self.add_grad_vec(*d, dd);
                    }
                    if self.nodes[*w].requires_grad {
                        let mut dw = self.grad_buf(*w);
                        conv2d_dw(self.nodes[*d].data.as_slice(), &dz, g, &mut dw);
                        self.grads[*w] = Some(dw);
                    }
                }
            }
            Op::Upsample1d { x, out, c, t } => {
                if let Some(dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        let mut dx = self.grad_buf(*x);
                        upsample1d_bwd(&dy, *c, *t, &mut dx);
                        self.grads[*x] = Some(dx);
                    }
                }
            }
            Op::Upsample2d { x, out, c, h, w } => {
                if let Some(dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        let mut dx = self.grad_buf(*x);
                        upsample2d_bwd(&dy, *c, *h, *w, &mut dx);
                        self.grads[*x] = Some(dx);
                    }
                }
            }
            Op::LeakyRelu { x, out, slope } => {
                if let Some(mut dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        for (d, &xv) in dy.iter_mut().zip(self.nodes[*x].data.as_slice()) {
                            if xv <= F::zero() {
                                *d *= *slope;
                            }
                        }
                        self.add_grad_vec(*x, dy);
                    }
                }
            }
            Op::Tanh { x, out } => {
                if let Some(mut dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        for (d, &y) in dy.iter_mut().zip(self.nodes[*out].data.as_slice()) {
                            *d *= F::one() - y * y;
                        }
                        self.add_grad_vec(*x, dy);
                    }
                }
            }
            Op::Sigmoid { x, out } => {
                if let Some(mut dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        for (d, &y) in dy.iter_mut().zip(self.nodes[*out].data.as_slice()) {
                            *d *= y * (F::one() - y);
                        }
                        self.add_grad_vec(*x, dy);
                    }
                }
            }
            Op::Dropout { x, out, mask } => {
                if let Some(mut dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        for (d, &m) in dy.iter_mut().zip(mask) {
                            *d *= m;
                        }
                        self.add_grad_vec(*x, dy);
                    }
                }
            }
            Op::Sum { x, out } => {
                if let Some(dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        let dx = vec![dy[0]; self.nodes[*x].dims.numel()];
                        self.add_grad_vec(*x, dx);
                    }
                }
            }
            Op::Mean { x, out } => {
                if let Some(dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        let n = self.nodes[*x].dims.numel();
                        let d = dy[0] / F::from_usize(n).unwrap();
                        self.add_grad_vec(*x, vec![d; n]);
                    }
                }
            }
            Op::SumAbs { x, out } => {
                if let Some(dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        let d = dy[0];
                        let dx: Vec<F> = self.nodes[*x]
                            .data
                            .as_slice()
                            .iter()
                            .map(|&v| {
                                if v > F::zero() {
                                    d
                                } else if v < F::zero() {
                                    -d
                                } else {
                                    F::zero()
                                }
                            })
                            .collect();
                        self.add_grad_vec(*x, dx);
                    }
                }
            }
            Op::Sqrt { x, out } => {
                if let Some(mut dy) = self.take_dy(*out) {
                    if self.nodes[*x].requires_grad {
                        let two = F::of_f64(2.0);
                        for (d, &y) in dy.iter_mut().zip(self.nodes[*out].data.as_slice()) {
                            *d = *d / (two * y);
                        }
                        self.add_grad_vec(*x, dy);
                    }
                }
            }
        }
        self.ops[idx] = op;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;

    #[test]
    fn linear_map_gradient() {
        // loss = sum(2*w), w shape [4] -> grad(w) = [2,2,2,2]
        let w = Tensor::param(vec![4], vec![1.0f64, -0.5, 3.0, 0.25]).unwrap();
        let mut tape = Tape::new();
        let wid = tape.leaf(&w);
        let scaled = tape.mul_scalar(wid, 2.0).unwrap();
        let loss = tape.sum(scaled).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(wid).unwrap(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn mean_square_gradient() {
        // loss = mean(w^2), w = [1,2] -> grad = 2w/n = [1,2]
        let w = Tensor::param(vec![2], vec![1.0f64, 2.0]).unwrap();
        let mut tape = Tape::new();
        let wid = tape.leaf(&w);
        let sq = tape.mul(wid, wid).unwrap();
        let loss = tape.mean(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(wid).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_requires_taped_scalar() {
        let x = Tensor::new(vec![2], vec![1.0f32, 2.0]).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(&x); // requires_grad = false
        assert!(matches!(
            tape.backward(xid),
            Err(Error::NonScalarLoss { .. })
        ));
        let s = tape.sum(xid).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::UntapedBackward)));
    }

    #[test]
    fn repeated_backward_resets() {
        let w = Tensor::param(vec![2], vec![1.0f64, 2.0]).unwrap();
        let mut tape = Tape::new();
        let wid = tape.leaf(&w);
        let loss = tape.sum(wid).unwrap();
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(wid).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn leaky_rectifier_piecewise() {
        let x = Tensor::new(vec![2], vec![-1.0f32, 1.0]).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(&x);
        let y = tape.leaky_relu(xid, 0.2).unwrap();
        assert_eq!(tape.value(y), &[-0.2, 1.0]);
    }

    #[test]
    fn dropout_rate_validation_and_scaling() {
        let x = Tensor::new(vec![64], vec![1.0f32; 64]).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(tape.dropout(xid, 1.0, &mut rng).is_err());
        let y = tape.dropout(xid, 0.5, &mut rng).unwrap();
        for &v in tape.value(y) {
            assert!(v == 0.0 || v == 2.0);
        }
        let z = tape.dropout(xid, 0.0, &mut rng).unwrap();
        assert_eq!(tape.value(z), tape.value(xid));
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = Tensor::new(vec![2], vec![1.0f32, 2.0]).unwrap();
        let b = Tensor::new(vec![3], vec![1.0f32, 2.0, 3.0]).unwrap();
        let mut tape = Tape::new();
        let aid = tape.leaf(&a);
        let bid = tape.leaf(&b);
        let err = tape.add(aid, bid).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn no_grad_forward_records_no_ops() {
        let x = Tensor::new(vec![4], vec![1.0f32; 4]).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(&x);
        let y = tape.mul_scalar(xid, 3.0).unwrap();
        let _ = tape.sum(y).unwrap();
        assert_eq!(tape.num_ops(), 0);
    }
}
