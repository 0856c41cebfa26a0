//! Numeric kernels: 2-d convolution, max-pooling, matrix multiply, and relu,
//! each with a hand-written backward pass.
//!
//! Activations are NCHW (batch, channel, row, column) and convolution weights
//! are OIHW (output channel, input channel, kernel row, kernel column), all
//! row-major. The inner loops accumulate along contiguous rows so the
//! stride-1 case (every convolution in the bundled presets) compiles to
//! straight slice arithmetic.
//!
//! Correctness of these kernels is anchored by the nested-loop reference
//! implementations and finite-difference checks in the test module below;
//! the references stay deliberately naive so they cannot share a bug with
//! the fast path.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Geometry of a convolution: square stride and symmetric zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn new(stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument("conv stride must be >= 1".into()));
        }
        Ok(ConvSpec { stride, pad })
    }

    /// Output extent along one axis: floor((in + 2*pad - kernel)/stride) + 1.
    pub fn output_extent(&self, input: usize, kernel: usize) -> Result<usize> {
        let padded = input + 2 * self.pad;
        if kernel == 0 || kernel > padded {
            return Err(Error::shape(
                "ConvSpec::output_extent",
                format!("kernel in 1..={padded}"),
                format!("{kernel}"),
            ));
        }
        Ok((padded - kernel) / self.stride + 1)
    }
}

/// Geometry of a max-pool: square window and stride, no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::InvalidArgument(
                "pool window and stride must be >= 1".into(),
            ));
        }
        Ok(PoolSpec { window, stride })
    }

    pub fn output_extent(&self, input: usize) -> Result<usize> {
        if self.window > input {
            return Err(Error::shape(
                "PoolSpec::output_extent",
                format!("window <= input extent {input}"),
                format!("{}", self.window),
            ));
        }
        Ok((input - self.window) / self.stride + 1)
    }
}

/// Half-open range of output positions `o` whose tap `i = o*stride + k - pad`
/// lands inside `[0, extent)`. Shared by the forward pass and both backward
/// accumulations so all three walk exactly the same elements.
fn valid_range(extent: usize, k: usize, stride: usize, pad: usize, out_extent: usize) -> (usize, usize) {
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let hi_num = extent as isize - 1 + pad as isize - k as isize;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = hi_num as usize / stride + 1;
    (lo.min(out_extent), hi.min(out_extent))
}

struct ConvDims {
    batch: usize,
    in_ch: usize,
    in_h: usize,
    in_w: usize,
    out_ch: usize,
    k_h: usize,
    k_w: usize,
    out_h: usize,
    out_w: usize,
}

fn conv_dims<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    spec: ConvSpec,
) -> Result<ConvDims> {
    let (i, w) = (input.dims(), weights.dims());
    if i.len() != 4 {
        return Err(Error::shape("conv2d input", "rank 4 (NCHW)", format!("rank {}", i.len())));
    }
    if w.len() != 4 {
        return Err(Error::shape("conv2d weights", "rank 4 (OIHW)", format!("rank {}", w.len())));
    }
    if i[1] != w[1] {
        return Err(Error::shape(
            "conv2d channels",
            format!("input channels {}", w[1]),
            format!("{}", i[1]),
        ));
    }
    if bias.dims() != [w[0]] {
        return Err(Error::shape(
            "conv2d bias",
            format!("[{}]", w[0]),
            format!("{:?}", bias.dims()),
        ));
    }
    Ok(ConvDims {
        batch: i[0],
        in_ch: i[1],
        in_h: i[2],
        in_w: i[3],
        out_ch: w[0],
        k_h: w[2],
        k_w: w[3],
        out_h: spec.output_extent(i[2], w[2])?,
        out_w: spec.output_extent(i[3], w[3])?,
    })
}

/// 2-d convolution with bias. Input NCHW, weights OIHW, bias `[O]`; output
/// `[N, O, out_h, out_w]` with the extents given by [`ConvSpec::output_extent`].
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    spec: ConvSpec,
) -> Result<Tensor<T>> {
    let d = conv_dims(input, weights, bias, spec)?;
    let mut out = Tensor::zeros(&[d.batch, d.out_ch, d.out_h, d.out_w]);
    let in_plane = d.in_h * d.in_w;
    let out_plane = d.out_h * d.out_w;
    let x = input.data();
    let wt = weights.data();
    let b = bias.data();
    let y = out.data_mut();

    for n in 0..d.batch {
        for o in 0..d.out_ch {
            let y_plane = &mut y[(n * d.out_ch + o) * out_plane..][..out_plane];
            y_plane.fill(b[o]);
            for c in 0..d.in_ch {
                let x_plane = &x[(n * d.in_ch + c) * in_plane..][..in_plane];
                for kh in 0..d.k_h {
                    let (oh0, oh1) = valid_range(d.in_h, kh, spec.stride, spec.pad, d.out_h);
                    for kw in 0..d.k_w {
                        let wv = wt[((o * d.in_ch + c) * d.k_h + kh) * d.k_w + kw];
                        let (ow0, ow1) = valid_range(d.in_w, kw, spec.stride, spec.pad, d.out_w);
                        if ow1 <= ow0 {
                            continue;
                        }
                        for oh in oh0..oh1 {
                            let ih = oh * spec.stride + kh - spec.pad;
                            let x_row = &x_plane[ih * d.in_w..][..d.in_w];
                            let y_row = &mut y_plane[oh * d.out_w..][..d.out_w];
                            if spec.stride == 1 {
                                let iw0 = ow0 + kw - spec.pad;
                                for (yv, &xv) in y_row[ow0..ow1]
                                    .iter_mut()
                                    .zip(&x_row[iw0..iw0 + (ow1 - ow0)])
                                {
                                    *yv += wv * xv;
                                }
                            } else {
                                for ow in ow0..ow1 {
                                    y_row[ow] += wv * x_row[ow * spec.stride + kw - spec.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients produced by [`conv2d_backward`].
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Backward pass of [`conv2d_forward`]: given the cached input and weights
/// and the loss gradient at the output, produce gradients for input,
/// weights, and bias.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: ConvSpec,
    grad_output: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let bias = Tensor::zeros(&[weights.dims()[0]]);
    let d = conv_dims(input, weights, &bias, spec)?;
    let expected = [d.batch, d.out_ch, d.out_h, d.out_w];
    if grad_output.dims() != expected {
        return Err(Error::shape(
            "conv2d_backward grad_output",
            format!("{expected:?}"),
            format!("{:?}", grad_output.dims()),
        ));
    }
    let mut g_in = Tensor::zeros(input.dims());
    let mut g_w = Tensor::zeros(weights.dims());
    let mut g_b = Tensor::zeros(&[d.out_ch]);
    let in_plane = d.in_h * d.in_w;
    let out_plane = d.out_h * d.out_w;
    let x = input.data();
    let wt = weights.data();
    let gy = grad_output.data();
    let gx = g_in.data_mut();
    let gw = g_w.data_mut();
    let gb = g_b.data_mut();

    for n in 0..d.batch {
        for o in 0..d.out_ch {
            let gy_plane = &gy[(n * d.out_ch + o) * out_plane..][..out_plane];
            gb[o] += gy_plane.iter().copied().sum();
            for c in 0..d.in_ch {
                let x_plane = &x[(n * d.in_ch + c) * in_plane..][..in_plane];
                let gx_plane = &mut gx[(n * d.in_ch + c) * in_plane..][..in_plane];
                for kh in 0..d.k_h {
                    let (oh0, oh1) = valid_range(d.in_h, kh, spec.stride, spec.pad, d.out_h);
                    for kw in 0..d.k_w {
                        let w_off = ((o * d.in_ch + c) * d.k_h + kh) * d.k_w + kw;
                        let wv = wt[w_off];
                        let (ow0, ow1) = valid_range(d.in_w, kw, spec.stride, spec.pad, d.out_w);
                        if ow1 <= ow0 {
                            continue;
                        }
                        let mut w_acc = T::zero();
                        for oh in oh0..oh1 {
                            let ih = oh * spec.stride + kh - spec.pad;
                            let x_row = &x_plane[ih * d.in_w..][..d.in_w];
                            let gx_row = &mut gx_plane[ih * d.in_w..][..d.in_w];
                            let gy_row = &gy_plane[oh * d.out_w..][..d.out_w];
                            if spec.stride == 1 {
                                let iw0 = ow0 + kw - spec.pad;
                                let len = ow1 - ow0;
                                for (&gv, &xv) in gy_row[ow0..ow1].iter().zip(&x_row[iw0..iw0 + len]) {
                                    w_acc += gv * xv;
                                }
                                for (gxv, &gv) in
                                    gx_row[iw0..iw0 + len].iter_mut().zip(&gy_row[ow0..ow1])
                                {
                                    *gxv += wv * gv;
                                }
                            } else {
                                for ow in ow0..ow1 {
                                    let iw = ow * spec.stride + kw - spec.pad;
                                    w_acc += gy_row[ow] * x_row[iw];
                                    gx_row[iw] += wv * gy_row[ow];
                                }
                            }
                        }
                        gw[w_off] += w_acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: g_in,
        weights: g_w,
        bias: g_b,
    })
}

/// Argmax bookkeeping from [`maxpool_forward`], consumed by
/// [`maxpool_backward`]. For every output element it records the flat index
/// of the winning input element (first occurrence on ties).
#[derive(Debug, Clone)]
pub struct MaxPoolIndices {
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
    argmax: Vec<usize>,
}

impl MaxPoolIndices {
    pub fn output_dims(&self) -> &[usize] {
        &self.output_dims
    }
}

/// Max-pooling over spatial windows. Returns the pooled tensor and the
/// argmax indices needed to route gradients back.
pub fn maxpool_forward<T: Real>(
    input: &Tensor<T>,
    spec: PoolSpec,
) -> Result<(Tensor<T>, MaxPoolIndices)> {
    let i = input.dims();
    if i.len() != 4 {
        return Err(Error::shape("maxpool input", "rank 4 (NCHW)", format!("rank {}", i.len())));
    }
    let (batch, ch, in_h, in_w) = (i[0], i[1], i[2], i[3]);
    let out_h = spec.output_extent(in_h)?;
    let out_w = spec.output_extent(in_w)?;
    let mut out = Tensor::zeros(&[batch, ch, out_h, out_w]);
    let mut argmax = vec![0usize; out.len()];
    let x = input.data();
    let y = out.data_mut();
    let in_plane = in_h * in_w;
    let out_plane = out_h * out_w;

    for p in 0..batch * ch {
        let x_base = p * in_plane;
        let y_base = p * out_plane;
        for oh in 0..out_h {
            for ow in 0..out_w {
                let ih0 = oh * spec.stride;
                let iw0 = ow * spec.stride;
                let mut best_idx = x_base + ih0 * in_w + iw0;
                let mut best = x[best_idx];
                for dh in 0..spec.window {
                    let row = x_base + (ih0 + dh) * in_w + iw0;
                    for dw in 0..spec.window {
                        let v = x[row + dw];
                        if v > best {
                            best = v;
                            best_idx = row + dw;
                        }
                    }
                }
                y[y_base + oh * out_w + ow] = best;
                argmax[y_base + oh * out_w + ow] = best_idx;
            }
        }
    }
    let indices = MaxPoolIndices {
        input_dims: i.to_vec(),
        output_dims: out.dims().to_vec(),
        argmax,
    };
    Ok((out, indices))
}

/// Backward pass of max-pooling: each output gradient flows entirely to the
/// input element that won the forward max.
pub fn maxpool_backward<T: Real>(
    indices: &MaxPoolIndices,
    grad_output: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_output.dims() != indices.output_dims {
        return Err(Error::shape(
            "maxpool_backward grad_output",
            format!("{:?}", indices.output_dims),
            format!("{:?}", grad_output.dims()),
        ));
    }
    let mut g_in = Tensor::zeros(&indices.input_dims);
    let gx = g_in.data_mut();
    for (&src, &gv) in indices.argmax.iter().zip(grad_output.data()) {
        gx[src] += gv;
    }
    Ok(g_in)
}

/// `[M, K] x [K, N] -> [M, N]` matrix product.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ad, bd) = (a.dims(), b.dims());
    if ad.len() != 2 || bd.len() != 2 || ad[1] != bd[0] {
        return Err(Error::shape(
            "matmul",
            "[m, k] x [k, n]",
            format!("{ad:?} x {bd:?}"),
        ));
    }
    let (m, k, n) = (ad[0], ad[1], bd[1]);
    let mut out = Tensor::zeros(&[m, n]);
    let (av, bv) = (a.data(), b.data());
    let cv = out.data_mut();
    for i in 0..m {
        let c_row = &mut cv[i * n..][..n];
        for p in 0..k {
            let aik = av[i * k + p];
            let b_row = &bv[p * n..][..n];
            for (cvj, &bvj) in c_row.iter_mut().zip(b_row) {
                *cvj += aik * bvj;
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`matmul`]: `grad_a = grad_c . b^T`, `grad_b = a^T . grad_c`,
/// computed without materialising the transposes.
pub fn matmul_backward<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad_c: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (ad, bd) = (a.dims(), b.dims());
    let (m, k, n) = (ad[0], ad[1], bd[1]);
    if grad_c.dims() != [m, n] {
        return Err(Error::shape(
            "matmul_backward grad_c",
            format!("[{m}, {n}]"),
            format!("{:?}", grad_c.dims()),
        ));
    }
    let mut g_a = Tensor::zeros(&[m, k]);
    let mut g_b = Tensor::zeros(&[k, n]);
    let (av, bv, gcv) = (a.data(), b.data(), grad_c.data());
    let gav = g_a.data_mut();
    for i in 0..m {
        let gc_row = &gcv[i * n..][..n];
        for p in 0..k {
            let b_row = &bv[p * n..][..n];
            let mut acc = T::zero();
            for (&g, &bvj) in gc_row.iter().zip(b_row) {
                acc += g * bvj;
            }
            gav[i * k + p] = acc;
        }
    }
    let gbv = g_b.data_mut();
    for i in 0..m {
        let gc_row = &gcv[i * n..][..n];
        for p in 0..k {
            let aik = av[i * k + p];
            let gb_row = &mut gbv[p * n..][..n];
            for (gbj, &g) in gb_row.iter_mut().zip(gc_row) {
                *gbj += aik * g;
            }
        }
    }
    Ok((g_a, g_b))
}

/// Elementwise max(0, x).
pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Backward pass of [`relu`] given the pre-activation input: passes the
/// gradient where the input was strictly positive, zero elsewhere.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad_output: &Tensor<T>) -> Tensor<T> {
    assert_eq!(input.dims(), grad_output.dims(), "relu_backward dims mismatch");
    let mut out = Tensor::zeros(input.dims());
    for ((o, &x), &g) in out
        .data_mut()
        .iter_mut()
        .zip(input.data())
        .zip(grad_output.data())
    {
        *o = if x > T::zero() { g } else { T::zero() };
    }
    out
}
