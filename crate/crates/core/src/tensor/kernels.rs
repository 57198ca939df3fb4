//! Raw forward/backward kernels for the spatial ops. Layouts are NCHW,
//! row-major, and all shape validation happens in the graph layer.

use std::cell::RefCell;

pub(crate) const NORM_EPS: f64 = 1e-5;

thread_local! {
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

/// Run `f` on a reusable per-thread buffer of at least `len` values. The
/// contents on entry are unspecified.
fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    SCRATCH.with(|cell| {
        let mut buf = cell.borrow_mut();
        if buf.len() < len {
            buf.resize(len, 0.0);
        }
        f(&mut buf[..len])
    })
}

/// `c = a·b + beta·c` for an `m×k` by `k×n` product with explicit
/// (row, column) strides on every operand.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len(), "gemm: lhs out of bounds");
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len(), "gemm: rhs out of bounds");
    assert!((m - 1) * rsc + (n - 1) * csc < c.len(), "gemm: output out of bounds");
    // SAFETY: every index dgemm touches lies within the bounds asserted above,
    // and `c` cannot alias `a` or `b` because it is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }

    fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }
}

/// Output columns `ow` in `[lo, hi)` read input column `ow·stride + kj − pad`
/// inside `[0, w)`.
fn valid_cols(g: &ConvGeom, kj: usize) -> (usize, usize) {
    let (s, pad) = (g.stride, g.pad);
    let lo = if kj >= pad { 0 } else { (pad - kj).div_ceil(s) };
    let hi = if g.w + pad > kj { ((g.w + pad - kj - 1) / s + 1).min(g.wo) } else { 0 };
    (lo.min(hi), hi)
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let p = g.out_pixels();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                let (lo, hi) = valid_cols(g, kj);
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    let dst_row = &mut dst[oh * g.wo..(oh + 1) * g.wo];
                    if ih < 0 || ih >= g.h as isize {
                        dst_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    dst_row[..lo].fill(0.0);
                    dst_row[hi..].fill(0.0);
                    let first = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        dst_row[lo..hi].copy_from_slice(&src[first..first + hi - lo]);
                    } else {
                        for (d, s) in dst_row[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                            *d = *s;
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let p = g.out_pixels();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &cols[row * p..(row + 1) * p];
                let (lo, hi) = valid_cols(g, kj);
                if lo >= hi {
                    continue;
                }
                let first = lo * g.stride + kj - g.pad;
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    let src_row = &src[oh * g.wo + lo..oh * g.wo + hi];
                    if g.stride == 1 {
                        dst[first..first + hi - lo].iter_mut().zip(src_row).for_each(|(d, s)| *d += s);
                    } else {
                        for (d, s) in dst[first..].iter_mut().step_by(g.stride).zip(src_row) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(x: &[f64], weight: &[f64], bias: Option<&[f64]>, g: &ConvGeom) -> Vec<f64> {
    let p = g.out_pixels();
    let ckk = g.ckk();
    let mut out = vec![0.0; g.n * g.f * p];
    let scratch_len = if g.is_pointwise() { 0 } else { ckk * p };
    with_scratch(scratch_len, |cols| {
        for n in 0..g.n {
            let xn = &x[n * g.c * g.h * g.w..(n + 1) * g.c * g.h * g.w];
            let on = &mut out[n * g.f * p..(n + 1) * g.f * p];
            if let Some(b) = bias {
                for (f, row) in on.chunks_mut(p).enumerate() {
                    row.fill(b[f]);
                }
            }
            let cols_ref: &[f64] = if g.is_pointwise() {
                xn
            } else {
                im2col(xn, g, cols);
                cols
            };
            gemm(g.f, ckk, p, weight, (ckk, 1), cols_ref, (p, 1), 1.0, on, (p, 1));
        }
    });
    out
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(
    x: &[f64],
    weight: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    need: (bool, bool, bool),
) -> ConvGrads {
    let (need_dx, need_dw, need_db) = need;
    let p = g.out_pixels();
    let ckk = g.ckk();
    let chw = g.c * g.h * g.w;
    let mut dx = need_dx.then(|| vec![0.0; g.n * chw]);
    let mut dw = need_dw.then(|| vec![0.0; g.f * ckk]);
    let mut db = need_db.then(|| vec![0.0; g.f]);
    let scratch_len = if g.is_pointwise() { 0 } else { ckk * p };
    with_scratch(scratch_len, |cols| {
        for n in 0..g.n {
            let dyn_ = &dy[n * g.f * p..(n + 1) * g.f * p];
            if let Some(db) = db.as_mut() {
                for (f, row) in dyn_.chunks(p).enumerate() {
                    db[f] += row.iter().sum::<f64>();
                }
            }
            let xn = &x[n * chw..(n + 1) * chw];
            if let Some(dw) = dw.as_mut() {
                let cols_ref: &[f64] = if g.is_pointwise() {
                    xn
                } else {
                    im2col(xn, g, cols);
                    cols
                };
                // dW[F, CKK] += dY[F, P] · colsᵀ[P, CKK]
                gemm(g.f, p, ckk, dyn_, (p, 1), cols_ref, (1, p), 1.0, dw, (ckk, 1));
            }
            if let Some(dx) = dx.as_mut() {
                let dxn = &mut dx[n * chw..(n + 1) * chw];
                // dcols[CKK, P] = Wᵀ[CKK, F] · dY[F, P]
                if g.is_pointwise() {
                    gemm(ckk, g.f, p, weight, (1, ckk), dyn_, (p, 1), 0.0, dxn, (p, 1));
                } else {
                    gemm(ckk, g.f, p, weight, (1, ckk), dyn_, (p, 1), 0.0, cols, (p, 1));
                    col2im(cols, g, dxn);
                }
            }
        }
    });
    ConvGrads { dx, dw, db }
}

/// Returns pooled values and, for every output cell, the flat input index of
/// the first maximum in scan order.
pub(crate) fn maxpool_forward(x: &[f64], nc: usize, h: usize, w: usize, win: usize) -> (Vec<f64>, Vec<usize>) {
    let (ho, wo) = (h / win, w / win);
    let mut out = Vec::with_capacity(nc * ho * wo);
    let mut arg = Vec::with_capacity(nc * ho * wo);
    for plane in 0..nc {
        let base = plane * h * w;
        for oh in 0..ho {
            for ow in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = base + oh * win * w + ow * win;
                for i in 0..win {
                    for j in 0..win {
                        let idx = base + (oh * win + i) * w + ow * win + j;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    (out, arg)
}

/// Source taps for bilinear 2x upsampling with half-pixel centres
/// (align_corners = false): `(i0, i1, weight_of_i1)`.
fn upsample_taps(len: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * len)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub(crate) fn upsample2x_forward(x: &[f64], nc: usize, h: usize, w: usize) -> Vec<f64> {
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let mut out = Vec::with_capacity(nc * 4 * h * w);
    for plane in x.chunks(h * w).take(nc) {
        for &(y0, y1, ly) in &ty {
            for &(x0, x1, lx) in &tx {
                let top = plane[y0 * w + x0] * (1.0 - lx) + plane[y0 * w + x1] * lx;
                let bot = plane[y1 * w + x0] * (1.0 - lx) + plane[y1 * w + x1] * lx;
                out.push(top * (1.0 - ly) + bot * ly);
            }
        }
    }
    out
}

pub(crate) fn upsample2x_backward(dy: &[f64], nc: usize, h: usize, w: usize) -> Vec<f64> {
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let mut dx = vec![0.0; nc * h * w];
    for plane in 0..nc {
        let dxp = &mut dx[plane * h * w..(plane + 1) * h * w];
        let dyp = &dy[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let g = dyp[oy * 2 * w + ox];
                dxp[y0 * w + x0] += g * (1.0 - ly) * (1.0 - lx);
                dxp[y0 * w + x1] += g * (1.0 - ly) * lx;
                dxp[y1 * w + x0] += g * ly * (1.0 - lx);
                dxp[y1 * w + x1] += g * ly * lx;
            }
        }
    }
    dx
}

pub(crate) struct NormSaved {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn instance_norm_forward(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    n: usize,
    c: usize,
    hw: usize,
) -> (Vec<f64>, NormSaved) {
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = Vec::with_capacity(n * c);
    for plane in 0..n * c {
        let ch = plane % c;
        let src = &x[plane * hw..(plane + 1) * hw];
        let mean = src.iter().sum::<f64>() / hw as f64;
        let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        inv_std.push(is);
        for i in 0..hw {
            let xh = (src[i] - mean) * is;
            xhat[plane * hw + i] = xh;
            out[plane * hw + i] = xh * gain[ch] + bias[ch];
        }
    }
    (out, NormSaved { xhat, inv_std })
}

/// Returns `(dx, dgain, dbias)`.
pub(crate) fn instance_norm_backward(
    dy: &[f64],
    gain: &[f64],
    saved: &NormSaved,
    n: usize,
    c: usize,
    hw: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; dy.len()];
    let mut dgain = vec![0.0; c];
    let mut dbias = vec![0.0; c];
    let m = hw as f64;
    for plane in 0..n * c {
        let ch = plane % c;
        let range = plane * hw..(plane + 1) * hw;
        let dyp = &dy[range.clone()];
        let xh = &saved.xhat[range.clone()];
        let mut sum_dy = 0.0;
        let mut sum_dy_xh = 0.0;
        for i in 0..hw {
            sum_dy += dyp[i];
            sum_dy_xh += dyp[i] * xh[i];
        }
        dgain[ch] += sum_dy_xh;
        dbias[ch] += sum_dy;
        // d/dx of gain·xhat: (gain·inv_std / m)·(m·dy − Σdy − xhat·Σ(dy·xhat))
        let scale = gain[ch] * saved.inv_std[plane] / m;
        let dxp = &mut dx[range];
        for i in 0..hw {
            dxp[i] = scale * (m * dyp[i] - sum_dy - xh[i] * sum_dy_xh);
        }
    }
    (dx, dgain, dbias)
}
