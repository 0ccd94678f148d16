//! Perception-based image quality evaluator (no reference, lower is better).
//!
//! Intensities are taken on a 0..1 scale, so the MSCN stabilizer is 1/255
//! rather than the 1 used on 8-bit data; the normalized coefficients are
//! identical either way.

use super::full_ref::gaussian_taps;
use super::{Flag, Measured};
use crate::dataset::Raster;
use crate::error::{Error, Result};

pub const MSCN_WINDOW: usize = 7;
pub const MSCN_SIGMA: f64 = 7.0 / 6.0;
pub const MSCN_C: f64 = 1.0 / 255.0;
pub const BLOCK: usize = 16;
pub const ACTIVITY_THRESHOLD: f64 = 0.1;
pub const SEGMENT: usize = 6;
pub const SEGMENT_FLAT_THRESHOLD: f64 = 0.1;
pub const C0: f64 = 1.0;

/// Block-level verdicts, kept for inspection and tests.
#[derive(Clone, Debug, PartialEq)]
pub struct PiqeDetail {
    pub score: Measured,
    pub active_blocks: usize,
    pub blocky_blocks: usize,
    pub noisy_blocks: usize,
}

/// Gaussian filter with replicated borders, same size as the input.
fn blur_replicate(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = taps.len() as isize / 2;
    let at = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            rows[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * src[y * w + at(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[at(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Mean-subtracted contrast-normalized coefficients.
pub fn mscn(img: &Raster) -> Vec<f64> {
    let (h, w) = (img.height, img.width);
    let x: Vec<f64> = img.data.iter().map(|&v| v as f64).collect();
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let taps = gaussian_taps(MSCN_WINDOW, MSCN_SIGMA);
    let mu = blur_replicate(&x, h, w, &taps);
    let mu2 = blur_replicate(&sq, h, w, &taps);
    (0..h * w)
        .map(|i| {
            let sigma = (mu2[i] - mu[i] * mu[i]).abs().sqrt();
            (x[i] - mu[i]) / (sigma + MSCN_C)
        })
        .collect()
}

/// Sample standard deviation (n − 1 normalization).
fn std(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    (v.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// A block is blocky when some short run along one of its four borders is
/// nearly flat while the block as a whole is active.
fn has_flat_edge_segment(block: &[f64]) -> bool {
    let b = BLOCK;
    let edges: [Vec<f64>; 4] = [
        block[..b].to_vec(),
        block[(b - 1) * b..].to_vec(),
        (0..b).map(|y| block[y * b]).collect(),
        (0..b).map(|y| block[y * b + b - 1]).collect(),
    ];
    edges.iter().any(|e| {
        e.windows(SEGMENT)
            .any(|s| std(s.iter().copied()) < SEGMENT_FLAT_THRESHOLD)
    })
}

/// Noise shows up as a centre/surround spread close to the block spread.
fn is_noisy(block: &[f64], block_var: f64) -> bool {
    let b = BLOCK;
    let (c0, c1) = (b / 2 - 1, b / 2);
    let centre = (0..b).flat_map(|y| [block[y * b + c0], block[y * b + c1]]);
    let surround = (0..b).flat_map(move |y| (0..b).filter(move |&x| x != c0 && x != c1).map(move |x| block[y * b + x]));
    let ratio = std(centre) / std(surround);
    let ratio = if ratio.is_nan() { 0.0 } else { ratio };
    let sigma = block_var.sqrt();
    let beta = (sigma - ratio).abs() / sigma.max(ratio);
    sigma > 2.0 * beta
}

pub fn piqe_detail(img: &Raster) -> Result<PiqeDetail> {
    if img.bands != 1 {
        return Err(Error::Data(format!("piqe expects one band, got {}", img.bands)));
    }
    if img.height < 2 * BLOCK || img.width < 2 * BLOCK {
        return Err(Error::Data(format!(
            "piqe needs at least {0}x{0} pixels, got {1}x{2}",
            2 * BLOCK,
            img.height,
            img.width
        )));
    }
    let w = img.width;
    let coeffs = mscn(img);
    let mut block = vec![0.0; BLOCK * BLOCK];
    let (mut distortion, mut active, mut blocky, mut noisy) = (0.0f64, 0usize, 0usize, 0usize);
    // trailing partial blocks are not scored
    for by in 0..img.height / BLOCK {
        for bx in 0..w / BLOCK {
            for y in 0..BLOCK {
                let row = (by * BLOCK + y) * w + bx * BLOCK;
                block[y * BLOCK..(y + 1) * BLOCK].copy_from_slice(&coeffs[row..row + BLOCK]);
            }
            let var = std(block.iter().copied()).powi(2);
            if var <= ACTIVITY_THRESHOLD {
                continue;
            }
            active += 1;
            if has_flat_edge_segment(&block) {
                blocky += 1;
                distortion += 1.0;
            } else if is_noisy(&block, var) {
                noisy += 1;
                distortion += var.min(1.0);
            }
        }
    }
    let value = 100.0 * (distortion + C0) / (active as f64 + C0);
    let score = if active == 0 {
        Measured::flagged(value, Flag::Degenerate)
    } else {
        Measured::ok(value)
    };
    Ok(PiqeDetail {
        score,
        active_blocks: active,
        blocky_blocks: blocky,
        noisy_blocks: noisy,
    })
}

pub fn piqe(img: &Raster) -> Result<Measured> {
    Ok(piqe_detail(img)?.score)
}
