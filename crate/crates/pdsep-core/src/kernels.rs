//! Low-level array kernels shared by the tape's forward and backward passes.
//!
//! Layout conventions: 1-D activations are `[C, T]` row-major, 2-D are
//! `[C, H, W]`; conv weights are `[C_out, C_in, K]` / `[C_out, C_in, K, K]`.
//! Inner loops run over the fastest-varying axis so the stride-1 paths
//! vectorize; `mul_add` compiles to hardware FMA (see .cargo/config.toml).

use crate::tensor::Scalar;

/// Geometry of a 1-D cross-correlation style convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conv1dGeom {
    pub c_in: usize,
    pub t_in: usize,
    pub c_out: usize,
    pub t_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1dGeom {
    pub fn out_len(t_in: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
        let span = t_in + 2 * pad;
        if span < k || stride == 0 {
            return None;
        }
        Some((span - k) / stride + 1)
    }
}

/// Geometry of a 2-D convolution (square kernel, equal stride/pad per axis).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conv2dGeom {
    pub c_in: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub c_out: usize,
    pub h_out: usize,
    pub w_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

#[inline(always)]
fn saxpy<F: Scalar>(out: &mut [F], x: &[F], a: F) {
    for (o, xv) in out.iter_mut().zip(x.iter()) {
        *o = a.mul_add(*xv, *o);
    }
}

/// Valid output range `t_lo..t_hi` such that `0 <= t*stride + off < t_in`.
#[inline(always)]
fn valid_range(t_out: usize, t_in: usize, stride: usize, off: isize) -> (usize, usize) {
    let t_lo = if off >= 0 {
        0
    } else {
        ((-off) as usize + stride - 1) / stride
    };
    let last_in = t_in as isize - 1 - off;
    if last_in < 0 {
        return (0, 0);
    }
    let t_hi = (last_in as usize / stride + 1).min(t_out);
    (t_lo.min(t_hi), t_hi)
}

/// Register tile width of the 1-D conv kernels.
const TILE: usize = 16;

/// Zero-padded, stride-phase-split copy of a `[C, T]` activation.
///
/// `row(ci, q)[m] == x[ci, stride*m + q - pad]` (zero outside bounds), with
/// at least `TILE` trailing zeros per row so 16-wide tile loads never run
/// out of bounds. Splitting by phase turns strided taps into contiguous
/// ones: `x[stride*t + kk - pad] == row(ci, kk % stride)[t + kk/stride]`.
struct Phases<F> {
    buf: Vec<F>,
    row_len: usize,
    stride: usize,
}

impl<F: Scalar> Phases<F> {
    fn build(x: &[F], c: usize, t: usize, pad: usize, stride: usize, t_out: usize, k: usize) -> Self {
        let row_len = t_out + (k.max(1) - 1) / stride + TILE;
        let mut buf = vec![F::zero(); c * stride * row_len];
        for ci in 0..c {
            let x_row = &x[ci * t..(ci + 1) * t];
            if stride == 1 {
                let row = &mut buf[ci * row_len..][..row_len];
                let n = t.min(row_len - pad);
                row[pad..pad + n].copy_from_slice(&x_row[..n]);
            } else {
                for q in 0..stride {
                    let row = &mut buf[(ci * stride + q) * row_len..][..row_len];
                    for (m, slot) in row.iter_mut().enumerate() {
                        let xi = stride * m + q;
                        if xi < pad {
                            continue;
                        }
                        let xi = xi - pad;
                        if xi >= t {
                            break;
                        }
                        *slot = x_row[xi];
                    }
                }
            }
        }
        Phases {
            buf,
            row_len,
            stride,
        }
    }

    #[inline(always)]
    fn row(&self, ci: usize, q: usize) -> &[F] {
        &self.buf[(ci * self.stride + q) * self.row_len..][..self.row_len]
    }
}

/// How the tile core walks a weight buffer: index =
/// `row * row_stride + col * col_stride + tap_offsets[tap]`. The forward
/// pass walks `[C_out, C_in, K]` directly; the input-gradient pass walks the
/// same buffer transposed, with no copying.
struct WView<'a, F> {
    w: &'a [F],
    row_stride: usize,
    col_stride: usize,
    tap_offsets: &'a [usize],
}

/// Tiled accumulation core shared by the forward and input-gradient paths:
/// computes `acc[r][j] = init[r] + sum_{col,tap} w(row0+r, col, tap) * src`
/// for a block of `COB` output rows and one 16-sample tile.
#[inline(always)]
fn conv1d_tiles<F: Scalar, const COB: usize, const ACCUMULATE: bool>(
    phases: &Phases<F>,
    wv: &WView<'_, F>,
    bias: Option<&[F]>,
    cols: usize,
    row0: usize,
    t_out: usize,
    out: &mut [F],
    out_stride: usize,
    taps: &[(usize, usize)], // (phase q, src offset) per tap
) {
    let mut t0 = 0;
    while t0 < t_out {
        let rem = TILE.min(t_out - t0);
        let mut acc = [[F::zero(); TILE]; COB];
        if let Some(b) = bias {
            for (r, a) in acc.iter_mut().enumerate() {
                *a = [b[row0 + r]; TILE];
            }
        }
        for col in 0..cols {
            let col_base = col * wv.col_stride;
            for (tap, &(q, off)) in taps.iter().enumerate() {
                let row = phases.row(col, q);
                let src: [F; TILE] = row[t0 + off..t0 + off + TILE]
                    .try_into()
                    .expect("tile within padded row");
                let w_base = col_base + wv.tap_offsets[tap];
                for (r, a) in acc.iter_mut().enumerate() {
                    let weight = wv.w[(row0 + r) * wv.row_stride + w_base];
                    for j in 0..TILE {
                        a[j] = weight.mul_add(src[j], a[j]);
                    }
                }
            }
        }
        for (r, a) in acc.iter().enumerate() {
            let orow = &mut out[(row0 + r) * out_stride + t0..][..rem];
            if ACCUMULATE {
                for (o, v) in orow.iter_mut().zip(a) {
                    *o += *v;
                }
            } else {
                orow.copy_from_slice(&a[..rem]);
            }
        }
        t0 += TILE;
    }
}

#[allow(clippy::too_many_arguments)]
fn run_conv1d_tiles<F: Scalar, const ACCUMULATE: bool>(
    phases: &Phases<F>,
    wv: &WView<'_, F>,
    bias: Option<&[F]>,
    cols: usize,
    rows: usize,
    t_out: usize,
    out: &mut [F],
    out_stride: usize,
    taps: &[(usize, usize)],
) {
    let mut r0 = 0;
    while r0 + 4 <= rows {
        conv1d_tiles::<F, 4, ACCUMULATE>(
            phases, wv, bias, cols, r0, t_out, out, out_stride, taps,
        );
        r0 += 4;
    }
    while r0 < rows {
        conv1d_tiles::<F, 1, ACCUMULATE>(
            phases, wv, bias, cols, r0, t_out, out, out_stride, taps,
        );
        r0 += 1;
    }
}

/// `out[co,t] = bias[co] + sum_{ci,kk} w[co,ci,kk] * x[ci, t*stride + kk - pad]`.
pub(crate) fn conv1d_fwd<F: Scalar>(
    x: &[F],
    w: &[F],
    bias: Option<&[F]>,
    g: &Conv1dGeom,
    out: &mut [F],
) {
    debug_assert_eq!(out.len(), g.c_out * g.t_out);
    let phases = Phases::build(x, g.c_in, g.t_in, g.pad, g.stride, g.t_out, g.k);
    let taps: Vec<(usize, usize)> = (0..g.k).map(|kk| (kk % g.stride, kk / g.stride)).collect();
    let tap_offsets: Vec<usize> = (0..g.k).collect();
    let wv = WView {
        w,
        row_stride: g.c_in * g.k,
        col_stride: g.k,
        tap_offsets: &tap_offsets,
    };
    run_conv1d_tiles::<F, false>(
        &phases, &wv, bias, g.c_in, g.c_out, g.t_out, out, g.t_out, &taps,
    );
}

/// Adjoint of `conv1d_fwd` with respect to its input: routes `dy` back
/// through the weights. Also the forward map of the transposed convolution.
/// `dx` is accumulated into.
///
/// Derivation: `dx[ci, s*jh + q] = sum_{co, kk : (q+pad-kk) % s == 0}
/// w[co,ci,kk] * dy[co, jh + (q+pad-kk)/s]`, one stride-1 correlation per
/// output phase, which reuses the tile core with transposed weights.
pub(crate) fn conv1d_dx<F: Scalar>(dy: &[F], w: &[F], g: &Conv1dGeom, dx: &mut [F]) {
    debug_assert_eq!(dx.len(), g.c_in * g.t_in);
    let s = g.stride;
    // Padded dy: FRONT zeros absorb negative offsets; TILE slack at the end.
    let front = g.k;
    let dyp_phases = {
        let row_len = g.t_out + front + g.k + TILE;
        let mut buf = vec![F::zero(); g.c_out * row_len];
        for co in 0..g.c_out {
            buf[co * row_len + front..co * row_len + front + g.t_out]
                .copy_from_slice(&dy[co * g.t_out..(co + 1) * g.t_out]);
        }
        Phases {
            buf,
            row_len,
            stride: 1,
        }
    };

    let mut phase_out = vec![F::zero(); g.c_in * (g.t_in / s + 2)];
    for q in 0..s {
        let len_q = (g.t_in - q).div_ceil(s);
        // Kernel taps contributing to this output phase, with dy offsets
        // shifted by `front` to stay non-negative.
        let mut tile_taps: Vec<(usize, usize)> = Vec::with_capacity(g.k);
        let mut tap_offsets: Vec<usize> = Vec::with_capacity(g.k);
        for kk in 0..g.k {
            let num = q as isize + g.pad as isize - kk as isize;
            if num.rem_euclid(s as isize) == 0 {
                let off = front as isize + num.div_euclid(s as isize);
                debug_assert!(off >= 0);
                tile_taps.push((0, off as usize));
                tap_offsets.push(kk);
            }
        }
        if tile_taps.is_empty() {
            continue;
        }
        // Walk the original weights transposed: rows are dx channels,
        // columns are dy channels.
        let wv = WView {
            w,
            row_stride: g.k,
            col_stride: g.c_in * g.k,
            tap_offsets: &tap_offsets,
        };
        if s == 1 {
            run_conv1d_tiles::<F, true>(
                &dyp_phases, &wv, None, g.c_out, g.c_in, g.t_in, dx, g.t_in, &tile_taps,
            );
        } else {
            // Single pass per phase: overwrite scratch rows, then scatter-add
            // into the interleaved dx.
            let rows = &mut phase_out[..g.c_in * len_q];
            run_conv1d_tiles::<F, false>(
                &dyp_phases, &wv, None, g.c_out, g.c_in, len_q, rows, len_q, &tile_taps,
            );
            for ci in 0..g.c_in {
                let dx_row = &mut dx[ci * g.t_in..(ci + 1) * g.t_in];
                for (jh, &v) in rows[ci * len_q..(ci + 1) * len_q].iter().enumerate() {
                    dx_row[s * jh + q] += v;
                }
            }
        }
    }
}

/// Weight gradient: `dw[co,ci,kk] += sum_t dy[co,t] * x[ci, t*stride + kk - pad]`.
///
/// Runs over a transposed patch matrix `xt[t, (ci,kk)]` so each dw entry is
/// a plain sequential sum over t held in a register lane: no horizontal
/// reductions, and one 16-wide x load feeds a block of four output channels.
pub(crate) fn conv1d_dw<F: Scalar>(dy: &[F], x: &[F], g: &Conv1dGeom, dw: &mut [F]) {
    debug_assert_eq!(dw.len(), g.c_out * g.c_in * g.k);
    let fdim = g.c_in * g.k;
    let fw = fdim.div_ceil(TILE) * TILE;
    let phases = Phases::build(x, g.c_in, g.t_in, g.pad, g.stride, g.t_out, g.k);
    let mut xt = vec![F::zero(); g.t_out * fw];
    for ci in 0..g.c_in {
        for kk in 0..g.k {
            let row = phases.row(ci, kk % g.stride);
            let f = ci * g.k + kk;
            for t in 0..g.t_out {
                xt[t * fw + f] = row[t + kk / g.stride];
            }
        }
    }

    fn block<F: Scalar, const COB: usize>(
        dy: &[F],
        xt: &[F],
        dw: &mut [F],
        co0: usize,
        t_out: usize,
        fdim: usize,
        fw: usize,
    ) {
        let mut f0 = 0;
        while f0 < fdim {
            let rem = TILE.min(fdim - f0);
            let mut acc = [[F::zero(); TILE]; COB];
            for t in 0..t_out {
                let src: [F; TILE] = xt[t * fw + f0..t * fw + f0 + TILE]
                    .try_into()
                    .expect("padded row");
                for (r, a) in acc.iter_mut().enumerate() {
                    let d = dy[(co0 + r) * t_out + t];
                    for j in 0..TILE {
                        a[j] = d.mul_add(src[j], a[j]);
                    }
                }
            }
            for (r, a) in acc.iter().enumerate() {
                let dwr = &mut dw[(co0 + r) * fdim + f0..][..rem];
                for (o, v) in dwr.iter_mut().zip(a) {
                    *o += *v;
                }
            }
            f0 += TILE;
        }
    }

    let mut co = 0;
    while co + 4 <= g.c_out {
        block::<F, 4>(dy, &xt, dw, co, g.t_out, fdim, fw);
        co += 4;
    }
    while co < g.c_out {
        block::<F, 1>(dy, &xt, dw, co, g.t_out, fdim, fw);
        co += 1;
    }
}

/// Bias gradient: per-output-channel sum of `dy`.
pub(crate) fn conv_db<F: Scalar>(dy: &[F], c_out: usize, spatial: usize, db: &mut [F]) {
    for co in 0..c_out {
        let mut acc = F::zero();
        for v in &dy[co * spatial..(co + 1) * spatial] {
            acc += *v;
        }
        db[co] += acc;
    }
}

pub(crate) fn conv2d_fwd<F: Scalar>(
    x: &[F],
    w: &[F],
    bias: Option<&[F]>,
    g: &Conv2dGeom,
    out: &mut [F],
) {
    let plane_in = g.h_in * g.w_in;
    let plane_out = g.h_out * g.w_out;
    debug_assert_eq!(out.len(), g.c_out * plane_out);
    for co in 0..g.c_out {
        let out_plane = &mut out[co * plane_out..(co + 1) * plane_out];
        let b = bias.map_or(F::zero(), |b| b[co]);
        out_plane.fill(b);
        for ci in 0..g.c_in {
            let x_plane = &x[ci * plane_in..(ci + 1) * plane_in];
            let w_base = (co * g.c_in + ci) * g.k * g.k;
            for kh in 0..g.k {
                let roff = kh as isize - g.pad as isize;
                let (i_lo, i_hi) = valid_range(g.h_out, g.h_in, g.stride, roff);
                for kw in 0..g.k {
                    let wv = w[w_base + kh * g.k + kw];
                    let coff = kw as isize - g.pad as isize;
                    let (j_lo, j_hi) = valid_range(g.w_out, g.w_in, g.stride, coff);
                    if i_lo >= i_hi || j_lo >= j_hi {
                        continue;
                    }
                    for i in i_lo..i_hi {
                        let xr = ((i * g.stride) as isize + roff) as usize;
                        let orow = &mut out_plane[i * g.w_out..i * g.w_out + g.w_out];
                        let xrow = &x_plane[xr * g.w_in..xr * g.w_in + g.w_in];
                        if g.stride == 1 {
                            let xs = (j_lo as isize + coff) as usize;
                            saxpy(&mut orow[j_lo..j_hi], &xrow[xs..xs + (j_hi - j_lo)], wv);
                        } else {
                            for j in j_lo..j_hi {
                                let xj = ((j * g.stride) as isize + coff) as usize;
                                orow[j] = wv.mul_add(xrow[xj], orow[j]);
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_dx<F: Scalar>(dy: &[F], w: &[F], g: &Conv2dGeom, dx: &mut [F]) {
    let plane_in = g.h_in * g.w_in;
    let plane_out = g.h_out * g.w_out;
    debug_assert_eq!(dx.len(), g.c_in * plane_in);
    for co in 0..g.c_out {
        let dy_plane = &dy[co * plane_out..(co + 1) * plane_out];
        for ci in 0..g.c_in {
            let dx_plane = &mut dx[ci * plane_in..(ci + 1) * plane_in];
            let w_base = (co * g.c_in + ci) * g.k * g.k;
            for kh in 0..g.k {
                let roff = kh as isize - g.pad as isize;
                let (i_lo, i_hi) = valid_range(g.h_out, g.h_in, g.stride, roff);
                for kw in 0..g.k {
                    let wv = w[w_base + kh * g.k + kw];
                    let coff = kw as isize - g.pad as isize;
                    let (j_lo, j_hi) = valid_range(g.w_out, g.w_in, g.stride, coff);
                    if i_lo >= i_hi || j_lo >= j_hi {
                        continue;
                    }
                    for i in i_lo..i_hi {
                        let xr = ((i * g.stride) as isize + roff) as usize;
                        let dyrow = &dy_plane[i * g.w_out..i * g.w_out + g.w_out];
                        let dxrow = &mut dx_plane[xr * g.w_in..xr * g.w_in + g.w_in];
                        if g.stride == 1 {
                            let xs = (j_lo as isize + coff) as usize;
                            saxpy(&mut dxrow[xs..xs + (j_hi - j_lo)], &dyrow[j_lo..j_hi], wv);
                        } else {
                            for j in j_lo..j_hi {
                                let xj = ((j * g.stride) as isize + coff) as usize;
                                dxrow[xj] = wv.mul_add(dyrow[j], dxrow[xj]);
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_dw<F: Scalar>(dy: &[F], x: &[F], g: &Conv2dGeom, dw: &mut [F]) {
    let plane_in = g.h_in * g.w_in;
    let plane_out = g.h_out * g.w_out;
    for co in 0..g.c_out {
        let dy_plane = &dy[co * plane_out..(co + 1) * plane_out];
        for ci in 0..g.c_in {
            let x_plane = &x[ci * plane_in..(ci + 1) * plane_in];
            let w_base = (co * g.c_in + ci) * g.k * g.k;
            for kh in 0..g.k {
                let roff = kh as isize - g.pad as isize;
                let (i_lo, i_hi) = valid_range(g.h_out, g.h_in, g.stride, roff);
                for kw in 0..g.k {
                    let coff = kw as isize - g.pad as isize;
                    let (j_lo, j_hi) = valid_range(g.w_out, g.w_in, g.stride, coff);
                    if i_lo >= i_hi || j_lo >= j_hi {
                        continue;
                    }
                    let mut acc = F::zero();
                    for i in i_lo..i_hi {
                        let xr = ((i * g.stride) as isize + roff) as usize;
                        let dyrow = &dy_plane[i * g.w_out..i * g.w_out + g.w_out];
                        let xrow = &x_plane[xr * g.w_in..xr * g.w_in + g.w_in];
                        if g.stride == 1 {
                            let xs = (j_lo as isize + coff) as usize;
                            for (d, xv) in dyrow[j_lo..j_hi]
                                .iter()
                                .zip(&xrow[xs..xs + (j_hi - j_lo)])
                            {
                                acc = d.mul_add(*xv, acc);
                            }
                        } else {
                            for j in j_lo..j_hi {
                                let xj = ((j * g.stride) as isize + coff) as usize;
                                acc = dyrow[j].mul_add(xrow[xj], acc);
                            }
                        }
                    }
                    dw[w_base + kh * g.k + kw] += acc;
                }
            }
        }
    }
}

/// `out[i,j] = sum_k a[i,k] * b[k,j]` for row-major `a: [m,k]`, `b: [k,n]`.
pub(crate) fn matmul_nn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    out.fill(F::zero());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            saxpy(orow, &b[kk * n..(kk + 1) * n], av);
        }
    }
}

/// `out[i,j] = sum_k a[i,k] * b[j,k]` (`b` transposed), `b: [n,k]`.
pub(crate) fn matmul_nt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    for i in 0..m {
        for j in 0..n {
            let mut acc = F::zero();
            for (av, bv) in a[i * k..(i + 1) * k].iter().zip(&b[j * k..(j + 1) * k]) {
                acc = av.mul_add(*bv, acc);
            }
            out[i * n + j] = acc;
        }
    }
}

/// `out[i,j] = sum_k a[k,i] * b[k,j]` (`a` transposed), `a: [k,m]`.
pub(crate) fn matmul_tn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    out.fill(F::zero());
    for kk in 0..k {
        for i in 0..m {
            let av = a[kk * m + i];
            saxpy(&mut out[i * n..(i + 1) * n], &b[kk * n..(kk + 1) * n], av);
        }
    }
}

/// Nearest-neighbor x2 upsample along the last axis of `[C, T]`.
pub(crate) fn upsample1d_fwd<F: Scalar>(x: &[F], c: usize, t: usize, out: &mut [F]) {
    debug_assert_eq!(out.len(), c * 2 * t);
    for ci in 0..c {
        let x_row = &x[ci * t..(ci + 1) * t];
        let o_row = &mut out[ci * 2 * t..(ci + 1) * 2 * t];
        for (i, &v) in x_row.iter().enumerate() {
            o_row[2 * i] = v;
            o_row[2 * i + 1] = v;
        }
    }
}

pub(crate) fn upsample1d_bwd<F: Scalar>(dy: &[F], c: usize, t: usize, dx: &mut [F]) {
    for ci in 0..c {
        let dy_row = &dy[ci * 2 * t..(ci + 1) * 2 * t];
        let dx_row = &mut dx[ci * t..(ci + 1) * t];
        for i in 0..t {
            dx_row[i] += dy_row[2 * i] + dy_row[2 * i + 1];
        }
    }
}

/// Nearest-neighbor x2 upsample of `[C, H, W]` in both spatial axes.
pub(crate) fn upsample2d_fwd<F: Scalar>(x: &[F], c: usize, h: usize, w: usize, out: &mut [F]) {
    debug_assert_eq!(out.len(), c * 4 * h * w);
    let (h2, w2) = (2 * h, 2 * w);
    for ci in 0..c {
        let x_p = &x[ci * h * w..(ci + 1) * h * w];
        let o_p = &mut out[ci * h2 * w2..(ci + 1) * h2 * w2];
        for i in 0..h {
            for j in 0..w {
                let v = x_p[i * w + j];
                let base = 2 * i * w2 + 2 * j;
                o_p[base] = v;
                o_p[base + 1] = v;
                o_p[base + w2] = v;
                o_p[base + w2 + 1] = v;
            }
        }
    }
}

pub(crate) fn upsample2d_bwd<F: Scalar>(dy: &[F], c: usize, h: usize, w: usize, dx: &mut [F]) {
    let (h2, w2) = (2 * h, 2 * w);
    for ci in 0..c {
        let dy_p = &dy[ci * h2 * w2..(ci + 1) * h2 * w2];
        let dx_p = &mut dx[ci * h * w..(ci + 1) * h * w];
        for i in 0..h {
            for j in 0..w {
                let base = 2 * i * w2 + 2 * j;
                dx_p[i * w + j] +=
                    dy_p[base] + dy_p[base + 1] + dy_p[base + w2] + dy_p[base + w2 + 1];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent double-loop convolution oracle over the same geometry.
    fn conv1d_oracle(x: &[f64], w: &[f64], b: Option<&[f64]>, g: &Conv1dGeom) -> Vec<f64> {
        let mut out = vec![0.0; g.c_out * g.t_out];
        for co in 0..g.c_out {
            for t in 0..g.t_out {
                let mut acc = b.map_or(0.0, |b| b[co]);
                for ci in 0..g.c_in {
                    for kk in 0..g.k {
                        let xi = (t * g.stride + kk) as isize - g.pad as isize;
                        if xi >= 0 && (xi as usize) < g.t_in {
                            acc += w[(co * g.c_in + ci) * g.k + kk] * x[ci * g.t_in + xi as usize];
                        }
                    }
                }
                out[co * g.t_out + t] = acc;
            }
        }
        out
    }

    #[test]
    fn conv1d_kernel_12_input_345_causal() {
        // Cross-correlation with flipped kernel = convolution: use weights
        // [2,1] with pad 1 to realize y[t] = 1*x[t] + 2*x[t-1] = [3,10,13].
        let g = Conv1dGeom {
            c_in: 1,
            t_in: 3,
            c_out: 1,
            t_out: 3,
            k: 2,
            stride: 1,
            pad: 1,
        };
        let x = [3.0f64, 4.0, 5.0];
        let w = [2.0f64, 1.0];
        let mut out = vec![0.0; 3];
        conv1d_fwd(&x, &w, None, &g, &mut out);
        assert_eq!(out, vec![3.0, 10.0, 13.0]);
        assert_eq!(out, conv1d_oracle(&x, &w, None, &g));
    }

    #[test]
    fn conv1d_matches_oracle_random() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for &stride in &[1usize, 2] {
            for &pad in &[0usize, 1, 2] {
                let g = Conv1dGeom {
                    c_in: 3,
                    t_in: 11,
                    c_out: 2,
                    t_out: Conv1dGeom::out_len(11, 3, stride, pad).unwrap(),
                    k: 3,
                    stride,
                    pad,
                };
                let x: Vec<f64> = (0..g.c_in * g.t_in).map(|_| next()).collect();
                let w: Vec<f64> = (0..g.c_out * g.c_in * g.k).map(|_| next()).collect();
                let b: Vec<f64> = (0..g.c_out).map(|_| next()).collect();
                let mut out = vec![0.0; g.c_out * g.t_out];
                conv1d_fwd(&x, &w, Some(&b), &g, &mut out);
                let oracle = conv1d_oracle(&x, &w, Some(&b), &g);
                for (a, o) in out.iter().zip(&oracle) {
                    assert!((a - o).abs() < 1e-12, "stride={stride} pad={pad}");
                }
            }
        }
    }

    #[test]
    fn matmul_identity() {
        let eye = [1.0f64, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let m = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let mut out = vec![0.0; 9];
        matmul_nn(&eye, &m, 3, 3, 3, &mut out);
        assert_eq!(out.as_slice(), m.as_slice());
    }

    #[test]
    fn upsample1d_round_trip_shapes() {
        let x = [1.0f32, 2.0, 3.0, 4.0];
        let mut up = vec![0.0f32; 8];
        upsample1d_fwd(&x, 1, 4, &mut up);
        assert_eq!(up, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        let mut dx = vec![0.0f32; 4];
        upsample1d_bwd(&up, 1, 4, &mut dx);
        assert_eq!(dx, vec![2.0, 4.0, 6.0, 8.0]);
    }
}
