//! HR → LR degradation: bloom, saturation, misalignment, downsampling,
//! sensor noise and 6-bit quantization, in that order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::raster::Raster;
use super::{noise, SceneSpec};

/// Levels of the LR radiometric range (6 bits).
pub const LR_LEVELS: f64 = 63.0;

/// Separable Gaussian blur. Taps falling outside the image are dropped and
/// the remaining weights renormalized, so constants are preserved.
pub fn gaussian_blur(plane: &[f32], h: usize, w: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let pass = |src: &[f64], len: usize, stride: usize, lines: usize, line_stride: usize| {
        let mut dst = vec![0.0f64; src.len()];
        for l in 0..lines {
            for i in 0..len {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (k, &wt) in kernel.iter().enumerate() {
                    let j = i as isize + k as isize - radius;
                    if j >= 0 && (j as usize) < len {
                        acc += wt * src[l * line_stride + j as usize * stride];
                        norm += wt;
                    }
                }
                dst[l * line_stride + i * stride] = acc / norm;
            }
        }
        dst
    };
    let src: Vec<f64> = plane.iter().map(|&v| v as f64).collect();
    let rows = pass(&src, w, 1, h, w);
    let cols = pass(&rows, h, w, w, 1);
    cols.into_iter().map(|v| v as f32).collect()
}

/// Bilinear resampling at `(y + dy, x + dx)` per output pixel; samples
/// outside the image read zero.
pub fn warp(plane: &[f32], h: usize, w: usize, disp: &[(f64, f64)]) -> Vec<f32> {
    let at = |y: isize, x: isize| {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            plane[y as usize * w + x as usize] as f64
        }
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = disp[y * w + x];
            let (sy, sx) = (y as f64 + dy, x as f64 + dx);
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            let (y0, x0) = (y0 as isize, x0 as isize);
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bot = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            out.push((top * (1.0 - fy) + bot * fy) as f32);
        }
    }
    out
}

/// Smooth displacement field whose magnitude never exceeds `max_px`: a
/// global shift of up to 70% of the budget plus a low-frequency local
/// component of up to 30%.
pub fn displacement_field(seed: u64, h: usize, w: usize, max_px: f64) -> Vec<(f64, f64)> {
    if max_px <= 0.0 {
        return vec![(0.0, 0.0); h * w];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = 0.7 * max_px * rng.gen::<f64>().sqrt();
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    let (gy, gx) = (r * theta.sin(), r * theta.cos());
    let (sy, sx): (u64, u64) = (rng.gen(), rng.gen());
    let local = 0.3 * max_px / std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = ((x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64);
            let ly = (noise::fbm(sy, u, v, 2.0, 2, 0.5) * 2.0 - 1.0) * local;
            let lx = (noise::fbm(sx, u, v, 2.0, 2, 0.5) * 2.0 - 1.0) * local;
            out.push((gy + ly, gx + lx));
        }
    }
    out
}

/// Mean over non-overlapping `r×r` blocks.
pub fn box_downsample(plane: &[f32], h: usize, w: usize, r: usize) -> Vec<f32> {
    let (oh, ow) = (h / r, w / r);
    let mut out = vec![0.0f32; oh * ow];
    for (i, o) in out.iter_mut().enumerate() {
        let (by, bx) = (i / ow * r, i % ow * r);
        let mut acc = 0.0f64;
        for y in by..by + r {
            acc += plane[y * w + bx..y * w + bx + r].iter().map(|&v| v as f64).sum::<f64>();
        }
        *o = (acc / (r * r) as f64) as f32;
    }
    out
}

pub fn quantize(v: f64, levels: f64) -> f32 {
    ((v * levels).round() / levels) as f32
}

/// Degrades a single-band HR raster to the LR grid. Deterministic in
/// `spec.seed`.
pub fn degrade(hr: &Raster, spec: &SceneSpec) -> Raster {
    let (h, w, r) = (hr.height, hr.width, spec.scale_r);
    let bloomed = gaussian_blur(hr.band(0), h, w, spec.bloom_sigma_px);
    let s = spec.saturation_level;
    let clipped: Vec<f32> = bloomed.iter().map(|&v| ((v as f64).min(s) / s) as f32).collect();
    let disp = displacement_field(spec.seed ^ 0x5741_5250, h, w, spec.warp_max_px);
    let warped = if spec.warp_max_px > 0.0 { warp(&clipped, h, w, &disp) } else { clipped };
    let low = box_downsample(&warped, h, w, r);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x4e4f_4953_45);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");
    let data = low
        .iter()
        .map(|&v| {
            let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            quantize(v as f64 + n, LR_LEVELS).clamp(0.0, 1.0)
        })
        .collect();
    Raster::new(1, h / r, w / r, data).expect("lr shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_keeps_constants_and_mass_in_the_interior() {
        let c = vec![0.4f32; 20 * 20];
        assert!(gaussian_blur(&c, 20, 20, 2.0).iter().all(|v| (v - 0.4).abs() < 1e-6));
        let mut dot = vec![0.0f32; 31 * 31];
        dot[15 * 31 + 15] = 1.0;
        let b = gaussian_blur(&dot, 31, 31, 2.0);
        let mass: f32 = b.iter().sum();
        assert!((mass - 1.0).abs() < 1e-5);
        assert!(b[15 * 31 + 15] < 0.1 && b[15 * 31 + 17] > 0.0);
    }

    #[test]
    fn displacement_respects_budget() {
        let d = displacement_field(4, 32, 32, 5.0);
        assert!(d.iter().all(|(y, x)| (y * y + x * x).sqrt() <= 5.0 + 1e-9));
        assert!(d.iter().any(|&(y, x)| y != 0.0 || x != 0.0));
    }

    #[test]
    fn integer_warp_is_a_shift() {
        let p: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let out = warp(&p, 4, 4, &vec![(0.0, 1.0); 16]);
        assert_eq!(&out[..4], &[1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn box_downsample_averages_blocks() {
        let p: Vec<f32> = (0..16).map(|v| v as f32).collect();
        assert_eq!(box_downsample(&p, 4, 4, 2), vec![2.5, 4.5, 10.5, 12.5]);
    }
}
