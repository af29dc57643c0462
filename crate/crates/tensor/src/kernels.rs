//! Raw numeric kernels shared by the forward ops and their backward rules.
//!
//! Convolutions run as im2col/col2im plus one sgemm call per image, which
//! keeps the hot loop inside the GEMM. Everything operates on row-major
//! [N, C, H, W] buffers.

/// Spatial output size of a correlation with the given geometry, or `None`
/// when the (padded) input is smaller than the dilated kernel.
pub fn conv_out_dim(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    dilation: usize,
) -> Option<usize> {
    let eff = dilation * (kernel - 1) + 1;
    if input + 2 * pad < eff {
        return None;
    }
    Some((input + 2 * pad - eff) / stride + 1)
}

/// Spatial output size of a transposed convolution.
pub fn conv_transpose_out_dim(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> Option<usize> {
    ((input - 1) * stride + kernel + output_pad).checked_sub(2 * pad)
}

/// C[m,n] = alpha * A[m,k] * B[k,n] + beta * C.
///
/// `at`/`bt` mark operands whose slice holds the transpose (so A is
/// physically [k,m] row-major when `at` is set); no data is copied.
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    at: bool,
    b: &[f32],
    bt: bool,
    beta: f32,
    c: &mut [f32],
) {
    assert_eq!(a.len(), m * k, "gemm: A size");
    assert_eq!(b.len(), k * n, "gemm: B size");
    assert_eq!(c.len(), m * n, "gemm: C size");
    let (rsa, csa) = if at { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if bt { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfold one [C, H, W] image into columns [C*kh*kw, oh*ow].
/// Out-of-bounds taps read as zero.
#[allow(clippy::too_many_arguments)]
pub fn im2col(
    x: &[f32],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    dilation: usize,
    oh: usize,
    ow: usize,
    cols: &mut [f32],
) {
    assert_eq!(cols.len(), c * kh * kw * oh * ow);
    let plane = oh * ow;
    for ci in 0..c {
        let x_c = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * plane;
                for oy in 0..oh {
                    let iy = (oy * stride + ky * dilation) as isize - pad as isize;
                    let out_row = row + oy * ow;
                    if iy < 0 || iy >= h as isize {
                        cols[out_row..out_row + ow].fill(0.0);
                        continue;
                    }
                    let x_row = &x_c[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride + kx * dilation) as isize - pad as isize;
                        cols[out_row + ox] = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            x_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into a [C, H, W] image.
/// Out-of-bounds taps are dropped.
#[allow(clippy::too_many_arguments)]
pub fn col2im(
    cols: &[f32],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    dilation: usize,
    oh: usize,
    ow: usize,
    x: &mut [f32],
) {
    assert_eq!(cols.len(), c * kh * kw * oh * ow);
    assert_eq!(x.len(), c * h * w);
    let plane = oh * ow;
    for ci in 0..c {
        let x_c = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((ci * kh + ky) * kw + kx) * plane;
                for oy in 0..oh {
                    let iy = (oy * stride + ky * dilation) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = iy as usize * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx * dilation) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            x_c[base + ix as usize] += cols[row + oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

// Convolution

pub struct Conv2dArgs {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
    pub oh: usize,
    pub ow: usize,
}

pub fn conv2d_forward(x: &[f32], weight: &[f32], bias: &[f32], a: &Conv2dArgs) -> Vec<f32> {
    let ckk = a.c * a.kh * a.kw;
    let plane = a.oh * a.ow;
    let mut cols = vec![0.0f32; ckk * plane];
    let mut out = vec![0.0f32; a.n * a.f * plane];
    for ni in 0..a.n {
        let x_n = &x[ni * a.c * a.h * a.w..(ni + 1) * a.c * a.h * a.w];
        im2col(
            x_n, a.c, a.h, a.w, a.kh, a.kw, a.stride, a.pad, a.dilation, a.oh, a.ow, &mut cols,
        );
        let out_n = &mut out[ni * a.f * plane..(ni + 1) * a.f * plane];
        gemm(a.f, ckk, plane, 1.0, weight, false, &cols, false, 0.0, out_n);
        for fi in 0..a.f {
            let b = bias[fi];
            for v in &mut out_n[fi * plane..(fi + 1) * plane] {
                *v += b;
            }
        }
    }
    out
}

/// Gradients (dx, dw, db) of [`conv2d_forward`]. The im2col buffer is
/// recomputed rather than saved on the tape.
pub fn conv2d_backward(
    x: &[f32],
    weight: &[f32],
    dy: &[f32],
    a: &Conv2dArgs,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let ckk = a.c * a.kh * a.kw;
    let plane = a.oh * a.ow;
    let mut cols = vec![0.0f32; ckk * plane];
    let mut dcols = vec![0.0f32; ckk * plane];
    let mut dx = vec![0.0f32; a.n * a.c * a.h * a.w];
    let mut dw = vec![0.0f32; a.f * ckk];
    let mut db = vec![0.0f32; a.f];
    for ni in 0..a.n {
        let x_n = &x[ni * a.c * a.h * a.w..(ni + 1) * a.c * a.h * a.w];
        let dy_n = &dy[ni * a.f * plane..(ni + 1) * a.f * plane];
        im2col(
            x_n, a.c, a.h, a.w, a.kh, a.kw, a.stride, a.pad, a.dilation, a.oh, a.ow, &mut cols,
        );
        // dW += dy_n x cols^T
        gemm(a.f, plane, ckk, 1.0, dy_n, false, &cols, true, 1.0, &mut dw);
        // dcols = W^T x dy_n, then scatter back into dx
        gemm(ckk, a.f, plane, 1.0, weight, true, dy_n, false, 0.0, &mut dcols);
        let dx_n = &mut dx[ni * a.c * a.h * a.w..(ni + 1) * a.c * a.h * a.w];
        col2im(
            &dcols, a.c, a.h, a.w, a.kh, a.kw, a.stride, a.pad, a.dilation, a.oh, a.ow, dx_n,
        );
        for fi in 0..a.f {
            let mut s = 0.0f64;
            for &g in &dy_n[fi * plane..(fi + 1) * plane] {
                s += g as f64;
            }
            db[fi] += s as f32;
        }
    }
    (dx, dw, db)
}

pub struct ConvT2dArgs {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

/// Transposed convolution; weight layout is [C, F, kh, kw].
pub fn conv_transpose2d_forward(
    x: &[f32],
    weight: &[f32],
    bias: &[f32],
    a: &ConvT2dArgs,
) -> Vec<f32> {
    let fkk = a.f * a.kh * a.kw;
    let in_plane = a.h * a.w;
    let out_plane = a.oh * a.ow;
    let mut cols = vec![0.0f32; fkk * in_plane];
    let mut out = vec![0.0f32; a.n * a.f * out_plane];
    for ni in 0..a.n {
        let x_n = &x[ni * a.c * in_plane..(ni + 1) * a.c * in_plane];
        // cols = W^T x x_n, with W physically [C, F*kh*kw]
        gemm(fkk, a.c, in_plane, 1.0, weight, true, x_n, false, 0.0, &mut cols);
        let out_n = &mut out[ni * a.f * out_plane..(ni + 1) * a.f * out_plane];
        col2im(
            &cols, a.f, a.oh, a.ow, a.kh, a.kw, a.stride, a.pad, 1, a.h, a.w, out_n,
        );
        for fi in 0..a.f {
            let b = bias[fi];
            for v in &mut out_n[fi * out_plane..(fi + 1) * out_plane] {
                *v += b;
            }
        }
    }
    out
}

pub fn conv_transpose2d_backward(
    x: &[f32],
    weight: &[f32],
    dy: &[f32],
    a: &ConvT2dArgs,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let fkk = a.f * a.kh * a.kw;
    let in_plane = a.h * a.w;
    let out_plane = a.oh * a.ow;
    let mut dy_cols = vec![0.0f32; fkk * in_plane];
    let mut dx = vec![0.0f32; a.n * a.c * in_plane];
    let mut dw = vec![0.0f32; a.c * fkk];
    let mut db = vec![0.0f32; a.f];
    for ni in 0..a.n {
        let x_n = &x[ni * a.c * in_plane..(ni + 1) * a.c * in_plane];
        let dy_n = &dy[ni * a.f * out_plane..(ni + 1) * a.f * out_plane];
        // Unfolding the output gradient with the same geometry lands back on
        // the input grid (columns at each of the h*w input positions).
        im2col(
            dy_n, a.f, a.oh, a.ow, a.kh, a.kw, a.stride, a.pad, 1, a.h, a.w, &mut dy_cols,
        );
        let dx_n = &mut dx[ni * a.c * in_plane..(ni + 1) * a.c * in_plane];
        gemm(a.c, fkk, in_plane, 1.0, weight, false, &dy_cols, false, 0.0, dx_n);
        gemm(a.c, in_plane, fkk, 1.0, x_n, false, &dy_cols, true, 1.0, &mut dw);
        for fi in 0..a.f {
            let mut s = 0.0f64;
            for &g in &dy_n[fi * out_plane..(fi + 1) * out_plane] {
                s += g as f64;
            }
            db[fi] += s as f32;
        }
    }
    (dx, dw, db)
}

// Reflection padding

fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    r as usize
}

pub fn reflection_pad2d_forward(x: &[f32], n: usize, c: usize, h: usize, w: usize, pad: usize) -> Vec<f32> {
    let oh = h + 2 * pad;
    let ow = w + 2 * pad;
    let mut out = vec![0.0f32; n * c * oh * ow];
    for pc in 0..n * c {
        let src = &x[pc * h * w..(pc + 1) * h * w];
        let dst = &mut out[pc * oh * ow..(pc + 1) * oh * ow];
        for oy in 0..oh {
            let iy = reflect(oy as isize - pad as isize, h);
            for ox in 0..ow {
                let ix = reflect(ox as isize - pad as isize, w);
                dst[oy * ow + ox] = src[iy * w + ix];
            }
        }
    }
    out
}

pub fn reflection_pad2d_backward(dy: &[f32], n: usize, c: usize, h: usize, w: usize, pad: usize) -> Vec<f32> {
    let oh = h + 2 * pad;
    let ow = w + 2 * pad;
    let mut dx = vec![0.0f32; n * c * h * w];
    for pc in 0..n * c {
        let g = &dy[pc * oh * ow..(pc + 1) * oh * ow];
        let dst = &mut dx[pc * h * w..(pc + 1) * h * w];
        for oy in 0..oh {
            let iy = reflect(oy as isize - pad as isize, h);
            for ox in 0..ow {
                let ix = reflect(ox as isize - pad as isize, w);
                dst[iy * w + ix] += g[oy * ow + ox];
            }
        }
    }
    dx
}

// Instance normalization (per-sample, per-channel spatial statistics)

/// Returns (normalized output, per-plane inverse std).
pub fn instance_norm2d_forward(
    x: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    eps: f32,
) -> (Vec<f32>, Vec<f32>) {
    let plane = h * w;
    let mut out = vec![0.0f32; x.len()];
    let mut inv_std = vec![0.0f32; n * c];
    for pc in 0..n * c {
        let src = &x[pc * plane..(pc + 1) * plane];
        let mut sum = 0.0f64;
        for &v in src {
            sum += v as f64;
        }
        let mean = sum / plane as f64;
        let mut var = 0.0f64;
        for &v in src {
            let d = v as f64 - mean;
            var += d * d;
        }
        var /= plane as f64;
        let r = 1.0 / (var + eps as f64).sqrt();
        inv_std[pc] = r as f32;
        let mean = mean as f32;
        let r = r as f32;
        let dst = &mut out[pc * plane..(pc + 1) * plane];
        for (d, &v) in dst.iter_mut().zip(src.iter()) {
            *d = (v - mean) * r;
        }
    }
    (out, inv_std)
}

pub fn instance_norm2d_backward(
    y: &[f32],
    inv_std: &[f32],
    dy: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<f32> {
    let plane = h * w;
    let mut dx = vec![0.0f32; dy.len()];
    for pc in 0..n * c {
        let y_p = &y[pc * plane..(pc + 1) * plane];
        let g_p = &dy[pc * plane..(pc + 1) * plane];
        let mut g_mean = 0.0f64;
        let mut gy_mean = 0.0f64;
        for (&g, &yv) in g_p.iter().zip(y_p.iter()) {
            g_mean += g as f64;
            gy_mean += g as f64 * yv as f64;
        }
        g_mean /= plane as f64;
        gy_mean /= plane as f64;
        let r = inv_std[pc];
        let (g_mean, gy_mean) = (g_mean as f32, gy_mean as f32);
        let dst = &mut dx[pc * plane..(pc + 1) * plane];
        for ((d, &g), &yv) in dst.iter_mut().zip(g_p.iter()).zip(y_p.iter()) {
            *d = r * (g - g_mean - yv * gy_mean);
        }
    }
    dx
}

// Pooling

pub fn avg_pool2d_forward(
    x: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let mut out = vec![0.0f32; n * c * oh * ow];
    let inv = 1.0 / (k * k) as f32;
    for pc in 0..n * c {
        let src = &x[pc * h * w..(pc + 1) * h * w];
        let dst = &mut out[pc * oh * ow..(pc + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0f32;
                for ky in 0..k {
                    let base = (oy * stride + ky) * w + ox * stride;
                    for kx in 0..k {
                        s += src[base + kx];
                    }
                }
                dst[oy * ow + ox] = s * inv;
            }
        }
    }
    out
}

pub fn avg_pool2d_backward(
    dy: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let mut dx = vec![0.0f32; n * c * h * w];
    let inv = 1.0 / (k * k) as f32;
    for pc in 0..n * c {
        let g = &dy[pc * oh * ow..(pc + 1) * oh * ow];
        let dst = &mut dx[pc * h * w..(pc + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let v = g[oy * ow + ox] * inv;
                for ky in 0..k {
                    let base = (oy * stride + ky) * w + ox * stride;
                    for kx in 0..k {
                        dst[base + kx] += v;
                    }
                }
            }
        }
    }
    dx
}

fn adaptive_window(i: usize, bins: usize, extent: usize) -> (usize, usize) {
    let start = i * extent / bins;
    let end = ((i + 1) * extent).div_ceil(bins);
    (start, end)
}

pub fn adaptive_avg_pool2d_forward(
    x: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    bins: usize,
) -> Vec<f32> {
    let mut out = vec![0.0f32; n * c * bins * bins];
    for pc in 0..n * c {
        let src = &x[pc * h * w..(pc + 1) * h * w];
        let dst = &mut out[pc * bins * bins..(pc + 1) * bins * bins];
        for by in 0..bins {
            let (y0, y1) = adaptive_window(by, bins, h);
            for bx in 0..bins {
                let (x0, x1) = adaptive_window(bx, bins, w);
                let mut s = 0.0f64;
                for y in y0..y1 {
                    for x_ in x0..x1 {
                        s += src[y * w + x_] as f64;
                    }
                }
                dst[by * bins + bx] = (s / ((y1 - y0) * (x1 - x0)) as f64) as f32;
            }
        }
    }
    out
}

pub fn adaptive_avg_pool2d_backward(
    dy: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    bins: usize,
) -> Vec<f32> {
    let mut dx = vec![0.0f32; n * c * h * w];
    for pc in 0..n * c {
        let g = &dy[pc * bins * bins..(pc + 1) * bins * bins];
        let dst = &mut dx[pc * h * w..(pc + 1) * h * w];
        for by in 0..bins {
            let (y0, y1) = adaptive_window(by, bins, h);
            for bx in 0..bins {
                let (x0, x1) = adaptive_window(bx, bins, w);
                let v = g[by * bins + bx] / ((y1 - y0) * (x1 - x0)) as f32;
                for y in y0..y1 {
                    for x_ in x0..x1 {
                        dst[y * w + x_] += v;
                    }
                }
            }
        }
    }
    dx
}

// Bilinear upsampling, align-corners-false convention.

struct Lerp {
    lo: usize,
    hi: usize,
    t: f32,
}

fn bilinear_axis(out_len: usize, in_len: usize) -> Vec<Lerp> {
    let scale = in_len as f32 / out_len as f32;
    (0..out_len)
        .map(|o| {
            let src = ((o as f32 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            Lerp {
                lo,
                hi,
                t: src - lo as f32,
            }
        })
        .collect()
}

pub fn upsample_bilinear_forward(
    x: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let ys = bilinear_axis(oh, h);
    let xs = bilinear_axis(ow, w);
    let mut out = vec![0.0f32; n * c * oh * ow];
    for pc in 0..n * c {
        let src = &x[pc * h * w..(pc + 1) * h * w];
        let dst = &mut out[pc * oh * ow..(pc + 1) * oh * ow];
        for (oy, ly) in ys.iter().enumerate() {
            for (ox, lx) in xs.iter().enumerate() {
                let a = src[ly.lo * w + lx.lo];
                let b = src[ly.lo * w + lx.hi];
                let c_ = src[ly.hi * w + lx.lo];
                let d = src[ly.hi * w + lx.hi];
                let top = a + (b - a) * lx.t;
                let bot = c_ + (d - c_) * lx.t;
                dst[oy * ow + ox] = top + (bot - top) * ly.t;
            }
        }
    }
    out
}

pub fn upsample_bilinear_backward(
    dy: &[f32],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let ys = bilinear_axis(oh, h);
    let xs = bilinear_axis(ow, w);
    let mut dx = vec![0.0f32; n * c * h * w];
    for pc in 0..n * c {
        let g = &dy[pc * oh * ow..(pc + 1) * oh * ow];
        let dst = &mut dx[pc * h * w..(pc + 1) * h * w];
        for (oy, ly) in ys.iter().enumerate() {
            for (ox, lx) in xs.iter().enumerate() {
                let v = g[oy * ow + ox];
                dst[ly.lo * w + lx.lo] += v * (1.0 - ly.t) * (1.0 - lx.t);
                dst[ly.lo * w + lx.hi] += v * (1.0 - ly.t) * lx.t;
                dst[ly.hi * w + lx.lo] += v * ly.t * (1.0 - lx.t);
                dst[ly.hi * w + lx.hi] += v * ly.t * lx.t;
            }
        }
    }
    dx
}
