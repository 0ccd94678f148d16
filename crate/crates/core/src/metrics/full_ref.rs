//! Full-reference scores. Everything is accumulated in f64.

use super::{Flag, Measured};
use crate::dataset::Raster;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const UIQI_WINDOW: usize = 8;

/// Variances at or below this are treated as zero. Stored rasters sit on a
/// 12-bit lattice, so any real variation is many orders of magnitude larger;
/// the threshold only absorbs rounding in the mean of a constant window.
pub const ZERO_VARIANCE: f64 = 1e-14;

fn same_shape(a: &Raster, b: &Raster, what: &str) -> Result<()> {
    if (a.bands, a.height, a.width) != (b.bands, b.height, b.width) {
        return Err(Error::Data(format!(
            "{what}: shape {}x{}x{} vs {}x{}x{}",
            a.bands, a.height, a.width, b.bands, b.height, b.width
        )));
    }
    Ok(())
}

fn single_band(a: &Raster, min_side: usize, what: &str) -> Result<()> {
    if a.bands != 1 {
        return Err(Error::Data(format!("{what} expects one band, got {}", a.bands)));
    }
    if a.height < min_side || a.width < min_side {
        return Err(Error::Data(format!(
            "{what} needs at least {min_side}x{min_side} pixels, got {}x{}",
            a.height, a.width
        )));
    }
    Ok(())
}

pub fn mse(pred: &Raster, target: &Raster) -> Result<f64> {
    same_shape(pred, target, "mse")?;
    let sum: f64 = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok(sum / pred.data.len() as f64)
}

/// `10·log10(peak²/MSE)`; an exact match is `+inf`, flagged.
pub fn psnr(pred: &Raster, target: &Raster, peak: f64) -> Result<Measured> {
    if !(peak > 0.0) {
        return Err(Error::config("peak", "must be positive"));
    }
    let e = mse(pred, target)?;
    if e == 0.0 {
        return Ok(Measured::flagged(f64::INFINITY, Flag::ExactMatch));
    }
    Ok(Measured::ok(10.0 * (peak * peak / e).log10()))
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable correlation keeping only fully covered windows.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Gaussian-window SSIM averaged over every window that fits in the image.
pub fn ssim(pred: &Raster, target: &Raster) -> Result<Measured> {
    same_shape(pred, target, "ssim")?;
    single_band(pred, SSIM_WINDOW, "ssim")?;
    let (h, w) = (pred.height, pred.width);
    let x: Vec<f64> = pred.data.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = target.data.iter().map(|&v| v as f64).collect();
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let (mx, ..) = filter_valid(&x, h, w, &taps);
    let (my, ..) = filter_valid(&y, h, w, &taps);
    let (sxx, ..) = filter_valid(&prod(&x, &x), h, w, &taps);
    let (syy, ..) = filter_valid(&prod(&y, &y), h, w, &taps);
    let (sxy, ..) = filter_valid(&prod(&x, &y), h, w, &taps);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let vx = sxx[i] - a * a;
            let vy = syy[i] - b * b;
            let cov = sxy[i] - a * b;
            ((2.0 * a * b + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((a * a + b * b + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .sum();
    Ok(Measured::ok(total / mx.len() as f64))
}

/// Angle between the images viewed as flat intensity vectors.
pub fn sam(pred: &Raster, target: &Raster) -> Result<Measured> {
    same_shape(pred, target, "sam")?;
    let (mut dot, mut pp, mut tt) = (0.0f64, 0.0f64, 0.0f64);
    for (&p, &t) in pred.data.iter().zip(&target.data) {
        let (p, t) = (p as f64, t as f64);
        dot += p * t;
        pp += p * p;
        tt += t * t;
    }
    if pp == 0.0 || tt == 0.0 {
        return Ok(Measured::flagged(f64::NAN, Flag::Degenerate));
    }
    let cos = (dot / (pp.sqrt() * tt.sqrt())).clamp(-1.0, 1.0);
    Ok(Measured::ok(cos.acos()))
}

/// Pearson correlation over all pixels.
pub fn cc(pred: &Raster, target: &Raster) -> Result<Measured> {
    same_shape(pred, target, "cc")?;
    let n = pred.data.len() as f64;
    let mp = pred.data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mt = target.data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut cov, mut vp, mut vt) = (0.0f64, 0.0f64, 0.0f64);
    for (&p, &t) in pred.data.iter().zip(&target.data) {
        let (dp, dt) = (p as f64 - mp, t as f64 - mt);
        cov += dp * dt;
        vp += dp * dp;
        vt += dt * dt;
    }
    if vp / n <= ZERO_VARIANCE || vt / n <= ZERO_VARIANCE {
        return Ok(Measured::flagged(f64::NAN, Flag::Degenerate));
    }
    Ok(Measured::ok((cov / (vp.sqrt() * vt.sqrt())).clamp(-1.0, 1.0)))
}

/// Universal quality index on 8×8 windows at stride 1.
///
/// Windows whose variances or means are both zero have no defined index;
/// they are skipped and their number is returned next to the score.
pub fn uiqi(pred: &Raster, target: &Raster) -> Result<(Measured, usize)> {
    same_shape(pred, target, "uiqi")?;
    single_band(pred, UIQI_WINDOW, "uiqi")?;
    let (h, w, k) = (pred.height, pred.width, UIQI_WINDOW);
    let n = (k * k) as f64;
    let (mut total, mut used, mut skipped) = (0.0f64, 0usize, 0usize);
    for y0 in 0..=h - k {
        for x0 in 0..=w - k {
            let pixels = || (y0..y0 + k).flat_map(move |y| (x0..x0 + k).map(move |x| y * w + x));
            let (mut sx, mut sy) = (0.0f64, 0.0f64);
            for i in pixels() {
                sx += pred.data[i] as f64;
                sy += target.data[i] as f64;
            }
            let (mx, my) = (sx / n, sy / n);
            let (mut vx, mut vy, mut cov) = (0.0f64, 0.0f64, 0.0f64);
            for i in pixels() {
                let (dx, dy) = (pred.data[i] as f64 - mx, target.data[i] as f64 - my);
                vx += dx * dx;
                vy += dy * dy;
                cov += dx * dy;
            }
            let (vx, vy, cov) = (vx / n, vy / n, cov / n);
            let spread = vx + vy;
            let level = mx * mx + my * my;
            if spread <= ZERO_VARIANCE || level == 0.0 {
                skipped += 1;
                continue;
            }
            total += 4.0 * cov * mx * my / (spread * level);
            used += 1;
        }
    }
    if used == 0 {
        return Ok((Measured::flagged(f64::NAN, Flag::Degenerate), skipped));
    }
    Ok((Measured::ok(total / used as f64), skipped))
}
