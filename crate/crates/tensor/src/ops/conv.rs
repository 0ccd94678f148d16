//! Plain and deformable 2-D convolution, forward and backward.
//!
//! Both lower each sample to a column matrix `[C·Kh·Kw, Ho·Wo]` and run one
//! gemm against the `[O, C·Kh·Kw]` weight matrix. The deformable variant
//! fills the column matrix with bilinear samples instead of direct reads, so
//! with zero offsets both routes hand identical operands to the same gemm
//! and produce bit-identical outputs.

use rayon::prelude::*;

use super::bilinear::Taps;
use crate::error::{dim_err, Result, TensorError};
use crate::gemm::{matmul, MatRef};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeometry {
    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.padding == 0
    }
}

pub(crate) fn conv_geometry(
    op: &'static str,
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<ConvGeometry> {
    let (_, c, h, w) = input.dims4(op)?;
    let (o, i, kh, kw) = weight.dims4(op)?;
    if stride == 0 {
        return Err(dim_err(op, "stride must be positive"));
    }
    if c != i {
        return Err(TensorError::ShapeMismatch {
            op,
            expected: format!("{i} input channels (weight {:?})", weight.shape()),
            got: format!("{c} channels (input {:?})", input.shape()),
        });
    }
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(TensorError::ShapeMismatch {
                op,
                expected: format!("bias [{o}]"),
                got: format!("{:?}", b.shape()),
            });
        }
    }
    let (ph, pw) = (h + 2 * padding, w + 2 * padding);
    if kh > ph || kw > pw || kh == 0 || kw == 0 {
        return Err(dim_err(
            op,
            format!("kernel {kh}x{kw} does not fit padded input {ph}x{pw}"),
        ));
    }
    Ok(ConvGeometry {
        c,
        h,
        w,
        kh,
        kw,
        stride,
        padding,
        ho: (ph - kh) / stride + 1,
        wo: (pw - kw) / stride + 1,
    })
}

fn im2col(x: &[f32], g: &ConvGeometry, cols: &mut [f32]) {
    let p = g.out_pixels();
    let pad = g.padding as isize;
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        *v = if ix >= 0 && ix < g.w as isize {
                            src[ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: &ConvGeometry, dx: &mut [f32]) {
    let p = g.out_pixels();
    let pad = g.padding as isize;
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - pad;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - pad;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn add_bias(out: &mut [f32], bias: Option<&Tensor>, pixels: usize) {
    if let Some(b) = bias {
        for (row, &bv) in out.chunks_mut(pixels).zip(b.data()) {
            for v in row {
                *v += bv;
            }
        }
    }
}

/// Forward pass shared by both convolution kinds; `fill_cols` lowers one
/// sample (by index) into its column matrix.
fn lowered_forward(
    n: usize,
    g: &ConvGeometry,
    weight: &Tensor,
    bias: Option<&Tensor>,
    input: &Tensor,
    fill_cols: impl Fn(usize, &mut [f32]) + Sync,
) -> Tensor {
    let o = weight.shape()[0];
    let (k, p) = (g.col_rows(), g.out_pixels());
    let in_stride = g.c * g.h * g.w;
    let mut out = vec![0.0f32; n * o * p];
    out.par_chunks_mut(o * p)
        .enumerate()
        .for_each(|(s, out_s)| {
            let x = &input.data()[s * in_stride..(s + 1) * in_stride];
            if g.is_pointwise() {
                matmul(MatRef::new(weight.data(), o, k), MatRef::new(x, k, p), out_s, false);
            } else {
                let mut cols = vec![0.0f32; k * p];
                fill_cols(s, &mut cols);
                matmul(MatRef::new(weight.data(), o, k), MatRef::new(&cols, k, p), out_s, false);
            }
            add_bias(out_s, bias, p);
        });
    Tensor::new(&[n, o, g.ho, g.wo], out).expect("conv output shape")
}

pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = conv_geometry("conv2d", input, weight, bias, stride, padding)?;
    let n = input.shape()[0];
    let in_stride = g.c * g.h * g.w;
    Ok(lowered_forward(n, &g, weight, bias, input, |s, cols| {
        im2col(&input.data()[s * in_stride..(s + 1) * in_stride], &g, cols)
    }))
}

pub(crate) struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
    pub offsets: Option<Tensor>,
}

pub(crate) fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
    want: [bool; 3],
) -> ConvGrads {
    let g = conv_geometry("conv2d", input, weight, None, stride, padding).expect("validated in forward");
    let n = input.shape()[0];
    let in_stride = g.c * g.h * g.w;
    let per_sample = |s: usize| -> (Option<Vec<f32>>, Option<Vec<f32>>) {
        let x = &input.data()[s * in_stride..(s + 1) * in_stride];
        let cols_owned;
        let cols: &[f32] = if g.is_pointwise() {
            x
        } else {
            let mut c = vec![0.0f32; g.col_rows() * g.out_pixels()];
            if want[1] {
                im2col(x, &g, &mut c);
            }
            cols_owned = c;
            &cols_owned
        };
        lowered_backward_sample(&g, weight, grad_out, s, cols, want, |dcols| {
            let mut dx = vec![0.0f32; in_stride];
            if g.is_pointwise() {
                dx.copy_from_slice(dcols);
            } else {
                col2im(dcols, &g, &mut dx);
            }
            dx
        })
    };
    let parts: Vec<_> = (0..n).into_par_iter().map(per_sample).collect();
    assemble(n, &g, weight, grad_out, input, parts, want)
}

/// Per-sample weight gradient and input gradient. `to_input` maps the
/// column-matrix gradient back onto the input sample.
fn lowered_backward_sample(
    g: &ConvGeometry,
    weight: &Tensor,
    grad_out: &Tensor,
    s: usize,
    cols: &[f32],
    want: [bool; 3],
    to_input: impl FnOnce(&[f32]) -> Vec<f32>,
) -> (Option<Vec<f32>>, Option<Vec<f32>>) {
    let o = weight.shape()[0];
    let (k, p) = (g.col_rows(), g.out_pixels());
    let gy = &grad_out.data()[s * o * p..(s + 1) * o * p];
    let dx = want[0].then(|| {
        let mut dcols = vec![0.0f32; k * p];
        matmul(MatRef::new(weight.data(), o, k).t(), MatRef::new(gy, o, p), &mut dcols, false);
        to_input(&dcols)
    });
    let dw = want[1].then(|| {
        let mut dw = vec![0.0f32; o * k];
        matmul(MatRef::new(gy, o, p), MatRef::new(cols, k, p).t(), &mut dw, false);
        dw
    });
    (dx, dw)
}

fn assemble(
    n: usize,
    g: &ConvGeometry,
    weight: &Tensor,
    grad_out: &Tensor,
    input: &Tensor,
    parts: Vec<(Option<Vec<f32>>, Option<Vec<f32>>)>,
    want: [bool; 3],
) -> ConvGrads {
    let o = weight.shape()[0];
    let p = g.out_pixels();
    let mut dx_all = want[0].then(|| Vec::with_capacity(input.numel()));
    let mut dw_sum = want[1].then(|| vec![0.0f32; weight.numel()]);
    for (dx, dw) in parts {
        if let (Some(all), Some(dx)) = (dx_all.as_mut(), dx) {
            all.extend_from_slice(&dx);
        }
        if let (Some(sum), Some(dw)) = (dw_sum.as_mut(), dw) {
            for (a, b) in sum.iter_mut().zip(dw) {
                *a += b;
            }
        }
    }
    let bias = want[2].then(|| {
        let mut db = vec![0.0f32; o];
        for s in 0..n {
            for (oc, acc) in db.iter_mut().enumerate() {
                let row = &grad_out.data()[(s * o + oc) * p..(s * o + oc + 1) * p];
                *acc += row.iter().sum::<f32>();
            }
        }
        Tensor::new(&[o], db).expect("bias grad")
    });
    ConvGrads {
        input: dx_all.map(|d| Tensor::new(input.shape(), d).expect("input grad")),
        weight: dw_sum.map(|d| Tensor::new(weight.shape(), d).expect("weight grad")),
        bias,
        offsets: None,
    }
}

// ── deformable ───────────────────────────────────────────────────────

pub(crate) fn deform_geometry(
    input: &Tensor,
    offsets: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
) -> Result<ConvGeometry> {
    const OP: &str = "deformable_conv2d";
    let (_, _, kh, kw) = weight.dims4(OP)?;
    if kh % 2 == 0 || kw % 2 == 0 || kh != kw {
        return Err(dim_err(OP, format!("same padding needs an odd square kernel, got {kh}x{kw}")));
    }
    let g = conv_geometry(OP, input, weight, bias, 1, kh / 2)?;
    let (on, oc, oh, ow) = offsets.dims4(OP)?;
    if oc != 2 * kh * kw {
        return Err(TensorError::ShapeMismatch {
            op: OP,
            expected: format!("{} offset channels (2·{kh}·{kw})", 2 * kh * kw),
            got: format!("{oc}"),
        });
    }
    if on != input.shape()[0] || oh != g.ho || ow != g.wo {
        return Err(TensorError::ShapeMismatch {
            op: OP,
            expected: format!("offsets [{}, {oc}, {}, {}]", input.shape()[0], g.ho, g.wo),
            got: format!("{:?}", offsets.shape()),
        });
    }
    Ok(g)
}

/// Tap of kernel position `k` at output pixel `(oy, ox)`, displaced by the
/// learned offset. Offset channel `2k` holds dy and `2k + 1` holds dx.
#[inline]
fn deform_taps(g: &ConvGeometry, off: &[f32], k: usize, oy: usize, ox: usize) -> Taps {
    let p = g.out_pixels();
    let (ky, kx) = (k / g.kw, k % g.kw);
    let pix = oy * g.wo + ox;
    let y = (oy + ky) as f32 - g.padding as f32 + off[2 * k * p + pix];
    let x = (ox + kx) as f32 - g.padding as f32 + off[(2 * k + 1) * p + pix];
    Taps::new(g.h, g.w, y, x)
}

fn deform_im2col(x: &[f32], off: &[f32], g: &ConvGeometry, cols: &mut [f32]) {
    let p = g.out_pixels();
    let kk = g.kh * g.kw;
    for k in 0..kk {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let taps = deform_taps(g, off, k, oy, ox);
                let pix = oy * g.wo + ox;
                for c in 0..g.c {
                    let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
                    cols[(c * kk + k) * p + pix] = taps.sample(plane);
                }
            }
        }
    }
}

pub fn deformable_conv2d(
    input: &Tensor,
    offsets: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
) -> Result<Tensor> {
    let g = deform_geometry(input, offsets, weight, bias)?;
    let n = input.shape()[0];
    let in_stride = g.c * g.h * g.w;
    let off_stride = offsets.numel() / n;
    Ok(lowered_forward_deform(n, &g, weight, bias, |s, cols| {
        deform_im2col(
            &input.data()[s * in_stride..(s + 1) * in_stride],
            &offsets.data()[s * off_stride..(s + 1) * off_stride],
            &g,
            cols,
        )
    }))
}

fn lowered_forward_deform(
    n: usize,
    g: &ConvGeometry,
    weight: &Tensor,
    bias: Option<&Tensor>,
    fill_cols: impl Fn(usize, &mut [f32]) + Sync,
) -> Tensor {
    let o = weight.shape()[0];
    let (k, p) = (g.col_rows(), g.out_pixels());
    let mut out = vec![0.0f32; n * o * p];
    out.par_chunks_mut(o * p)
        .enumerate()
        .for_each(|(s, out_s)| {
            let mut cols = vec![0.0f32; k * p];
            fill_cols(s, &mut cols);
            matmul(MatRef::new(weight.data(), o, k), MatRef::new(&cols, k, p), out_s, false);
            add_bias(out_s, bias, p);
        });
    Tensor::new(&[n, o, g.ho, g.wo], out).expect("deformable output shape")
}

/// Gradients of the deformable convolution; `want` selects
/// `[input, weight, bias, offsets]`.
pub(crate) fn deformable_conv2d_backward(
    input: &Tensor,
    offsets: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    want: [bool; 4],
) -> ConvGrads {
    let g = deform_geometry(input, offsets, weight, None).expect("validated in forward");
    let n = input.shape()[0];
    let o = weight.shape()[0];
    let (k, p) = (g.col_rows(), g.out_pixels());
    let kk = g.kh * g.kw;
    let in_stride = g.c * g.h * g.w;
    let off_stride = offsets.numel() / n;

    let parts: Vec<_> = (0..n)
        .into_par_iter()
        .map(|s| {
            let x = &input.data()[s * in_stride..(s + 1) * in_stride];
            let off = &offsets.data()[s * off_stride..(s + 1) * off_stride];
            let gy = &grad_out.data()[s * o * p..(s + 1) * o * p];
            let dw = want[1].then(|| {
                let mut cols = vec![0.0f32; k * p];
                deform_im2col(x, off, &g, &mut cols);
                let mut dw = vec![0.0f32; o * k];
                matmul(MatRef::new(gy, o, p), MatRef::new(&cols, k, p).t(), &mut dw, false);
                dw
            });
            let (dx, doff) = if want[0] || want[3] {
                let mut dcols = vec![0.0f32; k * p];
                matmul(MatRef::new(weight.data(), o, k).t(), MatRef::new(gy, o, p), &mut dcols, false);
                let mut dx = vec![0.0f32; in_stride];
                let mut doff = vec![0.0f32; off_stride];
                for kidx in 0..kk {
                    for oy in 0..g.ho {
                        for ox in 0..g.wo {
                            let taps = deform_taps(&g, off, kidx, oy, ox);
                            let pix = oy * g.wo + ox;
                            let (mut gy_acc, mut gx_acc) = (0.0f32, 0.0f32);
                            for c in 0..g.c {
                                let gc = dcols[(c * kk + kidx) * p + pix];
                                if gc == 0.0 {
                                    continue;
                                }
                                let range = c * g.h * g.w..(c + 1) * g.h * g.w;
                                if want[0] {
                                    taps.scatter(&mut dx[range.clone()], gc);
                                }
                                if want[3] {
                                    let (dy, dxc) = taps.coord_grad(&x[range]);
                                    gy_acc += gc * dy;
                                    gx_acc += gc * dxc;
                                }
                            }
                            doff[2 * kidx * p + pix] = gy_acc;
                            doff[(2 * kidx + 1) * p + pix] = gx_acc;
                        }
                    }
                }
                (want[0].then_some(dx), want[3].then_some(doff))
            } else {
                (None, None)
            };
            (dx, dw, doff)
        })
        .collect();

    let mut dx_parts = Vec::with_capacity(n);
    let mut doff_all = want[3].then(|| Vec::with_capacity(offsets.numel()));
    for (dx, dw, doff) in parts {
        dx_parts.push((dx, dw));
        if let (Some(all), Some(d)) = (doff_all.as_mut(), doff) {
            all.extend_from_slice(&d);
        }
    }
    let mut grads = assemble(n, &g, weight, grad_out, input, dx_parts, [want[0], want[1], want[2]]);
    grads.offsets = doff_all.map(|d| Tensor::new(offsets.shape(), d).expect("offset grad"));
    grads
}
