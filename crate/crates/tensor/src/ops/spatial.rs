//! Spatial resampling: affine grids, grid sampling, bilinear resizing and
//! the sub-pixel (pixel shuffle) permutation.
//!
//! Normalized coordinates follow the half-pixel convention: pixel `j` of a
//! width-`w` image sits at `x = (2j + 1)/w − 1`, so `[−1, 1]` spans the
//! outer edges of the border pixels.

use super::bilinear::Taps;
use crate::error::{dim_err, Result, TensorError};
use crate::tensor::Tensor;

#[inline]
fn norm_coord(i: usize, extent: usize) -> f32 {
    (2 * i + 1) as f32 / extent as f32 - 1.0
}

#[inline]
fn unnorm_coord(v: f32, extent: usize) -> f32 {
    ((v + 1.0) * extent as f32 - 1.0) * 0.5
}

fn theta_batch(theta: &Tensor) -> Result<usize> {
    match theta.shape() {
        [n, 2, 3] => Ok(*n),
        s => Err(TensorError::ShapeMismatch {
            op: "affine_grid",
            expected: "theta [N, 2, 3]".into(),
            got: format!("{s:?}"),
        }),
    }
}

/// Sampling grid `N×H×W×2` holding `(x, y)` pairs `θ · (x, y, 1)ᵀ`.
pub fn affine_grid(theta: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let n = theta_batch(theta)?;
    let mut out = Vec::with_capacity(n * out_h * out_w * 2);
    for t in theta.data().chunks(6) {
        for i in 0..out_h {
            let y = norm_coord(i, out_h);
            for j in 0..out_w {
                let x = norm_coord(j, out_w);
                out.push(t[0] * x + t[1] * y + t[2]);
                out.push(t[3] * x + t[4] * y + t[5]);
            }
        }
    }
    Tensor::new(&[n, out_h, out_w, 2], out)
}

pub(crate) fn affine_grid_backward(grad: &Tensor, n: usize) -> Tensor {
    let (h, w) = (grad.shape()[1], grad.shape()[2]);
    let mut dt = vec![0.0f32; n * 6];
    for (s, g) in grad.data().chunks(h * w * 2).enumerate() {
        let d = &mut dt[s * 6..s * 6 + 6];
        for i in 0..h {
            let y = norm_coord(i, h);
            for j in 0..w {
                let x = norm_coord(j, w);
                let (gx, gy) = (g[(i * w + j) * 2], g[(i * w + j) * 2 + 1]);
                d[0] += gx * x;
                d[1] += gx * y;
                d[2] += gx;
                d[3] += gy * x;
                d[4] += gy * y;
                d[5] += gy;
            }
        }
    }
    Tensor::new(&[n, 2, 3], dt).expect("theta grad")
}

fn grid_dims(input: &Tensor, grid: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = input.dims4("grid_sample")?;
    match grid.shape() {
        [gn, oh, ow, 2] if *gn == n => Ok((n, c, h, w, *oh, *ow)),
        s => Err(TensorError::ShapeMismatch {
            op: "grid_sample",
            expected: format!("grid [{n}, H', W', 2]"),
            got: format!("{s:?}"),
        }),
    }
}

/// Bilinear sampling of `input` at normalized grid locations, zero outside.
pub fn grid_sample(input: &Tensor, grid: &Tensor) -> Result<Tensor> {
    let (n, c, h, w, oh, ow) = grid_dims(input, grid)?;
    let mut out = vec![0.0f32; n * c * oh * ow];
    for s in 0..n {
        let gs = &grid.data()[s * oh * ow * 2..(s + 1) * oh * ow * 2];
        for pix in 0..oh * ow {
            let taps = Taps::new(h, w, unnorm_coord(gs[2 * pix + 1], h), unnorm_coord(gs[2 * pix], w));
            for ch in 0..c {
                out[(s * c + ch) * oh * ow + pix] = taps.sample(input.plane(s, ch));
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out)
}

pub(crate) fn grid_sample_backward(
    input: &Tensor,
    grid: &Tensor,
    grad: &Tensor,
    want: [bool; 2],
) -> (Option<Tensor>, Option<Tensor>) {
    let (n, c, h, w, oh, ow) = grid_dims(input, grid).expect("validated in forward");
    let mut din = want[0].then(|| vec![0.0f32; input.numel()]);
    let mut dgrid = want[1].then(|| vec![0.0f32; grid.numel()]);
    let (sx, sy) = (w as f32 * 0.5, h as f32 * 0.5);
    for s in 0..n {
        let gs = &grid.data()[s * oh * ow * 2..(s + 1) * oh * ow * 2];
        for pix in 0..oh * ow {
            let taps = Taps::new(h, w, unnorm_coord(gs[2 * pix + 1], h), unnorm_coord(gs[2 * pix], w));
            let (mut gy_acc, mut gx_acc) = (0.0f32, 0.0f32);
            for ch in 0..c {
                let g = grad.data()[(s * c + ch) * oh * ow + pix];
                if let Some(d) = din.as_mut() {
                    let plane = (s * c + ch) * h * w;
                    taps.scatter(&mut d[plane..plane + h * w], g);
                }
                if dgrid.is_some() {
                    let (dy, dx) = taps.coord_grad(input.plane(s, ch));
                    gy_acc += g * dy;
                    gx_acc += g * dx;
                }
            }
            if let Some(d) = dgrid.as_mut() {
                let base = s * oh * ow * 2 + 2 * pix;
                d[base] = gx_acc * sx;
                d[base + 1] = gy_acc * sy;
            }
        }
    }
    (
        din.map(|d| Tensor::new(input.shape(), d).expect("input grad")),
        dgrid.map(|d| Tensor::new(grid.shape(), d).expect("grid grad")),
    )
}

/// Source index pair and interpolation weight for each output position of
/// a half-pixel bilinear resize along one axis.
fn resize_axis(in_len: usize, out_len: usize) -> Vec<(usize, usize, f32)> {
    let scale = in_len as f32 / out_len as f32;
    (0..out_len)
        .map(|o| {
            let src = ((o as f32 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f32)
        })
        .collect()
}

/// Bilinear resize with half-pixel centers (align-corners off).
pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4("resize_bilinear")?;
    if out_h == 0 || out_w == 0 {
        return Err(dim_err("resize_bilinear", "output size must be at least 1x1"));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(input.clone());
    }
    let ys = resize_axis(h, out_h);
    let xs = resize_axis(w, out_w);
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for p in input.data().chunks(h * w) {
        for &(y0, y1, ly) in &ys {
            let (r0, r1) = (&p[y0 * w..(y0 + 1) * w], &p[y1 * w..(y1 + 1) * w]);
            for &(x0, x1, lx) in &xs {
                let top = r0[x0] * (1.0 - lx) + r0[x1] * lx;
                let bot = r1[x0] * (1.0 - lx) + r1[x1] * lx;
                out.push(top * (1.0 - ly) + bot * ly);
            }
        }
    }
    Tensor::new(&[n, c, out_h, out_w], out)
}

pub(crate) fn resize_bilinear_backward(input_shape: &[usize], grad: &Tensor) -> Tensor {
    let (h, w) = (input_shape[2], input_shape[3]);
    let (out_h, out_w) = (grad.shape()[2], grad.shape()[3]);
    if (out_h, out_w) == (h, w) {
        return grad.clone();
    }
    let ys = resize_axis(h, out_h);
    let xs = resize_axis(w, out_w);
    let mut din = vec![0.0f32; input_shape.iter().product()];
    for (d, g) in din.chunks_mut(h * w).zip(grad.data().chunks(out_h * out_w)) {
        for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                let gv = g[oy * out_w + ox];
                let (top, bot) = (gv * (1.0 - ly), gv * ly);
                d[y0 * w + x0] += top * (1.0 - lx);
                d[y0 * w + x1] += top * lx;
                d[y1 * w + x0] += bot * (1.0 - lx);
                d[y1 * w + x1] += bot * lx;
            }
        }
    }
    Tensor::new(input_shape, din).expect("resize grad")
}

/// `out[n, c, r·i + di, r·j + dj] = in[n, c·r² + di·r + dj, i, j]`.
pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let (n, cr2, h, w) = input.dims4("pixel_shuffle")?;
    if r == 0 || cr2 % (r * r) != 0 {
        return Err(dim_err(
            "pixel_shuffle",
            format!("{cr2} channels not divisible by r² = {}", r * r),
        ));
    }
    let c = cr2 / (r * r);
    let mut out = vec![0.0f32; input.numel()];
    shuffle_indices(n, c, h, w, r, |src, dst| out[dst] = input.data()[src]);
    Tensor::new(&[n, c, h * r, w * r], out)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let (n, c, hr, wr) = input.dims4("pixel_unshuffle")?;
    if r == 0 || hr % r != 0 || wr % r != 0 {
        return Err(dim_err(
            "pixel_unshuffle",
            format!("spatial size {hr}x{wr} not divisible by {r}"),
        ));
    }
    let (h, w) = (hr / r, wr / r);
    let mut out = vec![0.0f32; input.numel()];
    shuffle_indices(n, c, h, w, r, |src, dst| out[src] = input.data()[dst]);
    Tensor::new(&[n, c * r * r, h, w], out)
}

/// Visits every (packed index, shuffled index) pair of the permutation.
fn shuffle_indices(n: usize, c: usize, h: usize, w: usize, r: usize, mut f: impl FnMut(usize, usize)) {
    let (oh, ow) = (h * r, w * r);
    for s in 0..n {
        for ch in 0..c {
            for di in 0..r {
                for dj in 0..r {
                    let src_c = s * c * r * r + ch * r * r + di * r + dj;
                    for i in 0..h {
                        for j in 0..w {
                            let src = (src_c * h + i) * w + j;
                            let dst = ((s * c + ch) * oh + r * i + di) * ow + r * j + dj;
                            f(src, dst);
                        }
                    }
                }
            }
        }
    }
}
