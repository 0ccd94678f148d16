//! Deliberately naive reimplementations of the metrics, shared by the
//! metric tests and the acceptance runner.

use deeplight::dataset::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_pair(seed: u64, side: usize) -> (Raster, Raster) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Raster::from_fn(1, side, side, |_, _, _| rng.gen::<f32>());
    // correlated with `a` so the scores are not all near zero
    let b = Raster::from_fn(1, side, side, |_, y, x| (0.7 * a.get(0, y, x) + 0.3 * rng.gen::<f32>()).min(1.0));
    (a, b)
}

fn px(r: &Raster, y: usize, x: usize) -> f64 {
    r.get(0, y, x) as f64
}

pub fn oracle_psnr(p: &Raster, t: &Raster) -> f64 {
    let n = p.data.len() as f64;
    let mse = p.data.iter().zip(&t.data).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum::<f64>() / n;
    -10.0 * mse.log10()
}

pub fn oracle_ssim(p: &Raster, t: &Raster) -> f64 {
    let (k, s) = (11usize, 1.5f64);
    let c = 5.0;
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            g[i * k + j] = (-((i as f64 - c).powi(2) + (j as f64 - c).powi(2)) / (2.0 * s * s)).exp();
        }
    }
    let z: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= z);
    let (c1, c2) = (1e-4, 9e-4);
    let mut acc = 0.0;
    let mut count = 0;
    for y0 in 0..=p.height - k {
        for x0 in 0..=p.width - k {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    mx += g[i * k + j] * px(p, y0 + i, x0 + j);
                    my += g[i * k + j] * px(t, y0 + i, x0 + j);
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let dx = px(p, y0 + i, x0 + j) - mx;
                    let dy = px(t, y0 + i, x0 + j) - my;
                    vx += g[i * k + j] * dx * dx;
                    vy += g[i * k + j] * dy * dy;
                    cxy += g[i * k + j] * dx * dy;
                }
            }
            acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}

pub fn oracle_sam(p: &Raster, t: &Raster) -> f64 {
    let dot: f64 = p.data.iter().zip(&t.data).map(|(&a, &b)| a as f64 * b as f64).sum();
    let np: f64 = p.data.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
    let nt: f64 = t.data.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
    (dot / np / nt).min(1.0).acos()
}

/// Sample (n − 1) statistics; the index is invariant to that choice.
pub fn oracle_uiqi(p: &Raster, t: &Raster) -> f64 {
    let k = 8;
    let mut qs = Vec::new();
    for y0 in 0..=p.height - k {
        for x0 in 0..=p.width - k {
            let xs: Vec<f64> = (0..k * k).map(|i| px(p, y0 + i / k, x0 + i % k)).collect();
            let ys: Vec<f64> = (0..k * k).map(|i| px(t, y0 + i / k, x0 + i % k)).collect();
            let n = (k * k) as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / (n - 1.0);
            let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / (n - 1.0);
            let cxy = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
            qs.push(4.0 * cxy * mx * my / ((vx + vy) * (mx * mx + my * my)));
        }
    }
    qs.iter().sum::<f64>() / qs.len() as f64
}

pub fn oracle_cc(p: &Raster, t: &Raster) -> f64 {
    let n = p.data.len() as f64;
    let (sx, sy): (f64, f64) = p.data.iter().zip(&t.data).fold((0.0, 0.0), |(a, b), (&x, &y)| (a + x as f64, b + y as f64));
    let (mx, my) = (sx / n, sy / n);
    let mut num = 0.0;
    let mut dx2 = 0.0;
    let mut dy2 = 0.0;
    for (&x, &y) in p.data.iter().zip(&t.data) {
        num += (x as f64 - mx) * (y as f64 - my);
        dx2 += (x as f64 - mx).powi(2);
        dy2 += (y as f64 - my).powi(2);
    }
    num / (dx2 * dy2).sqrt()
}

/// PIQE written out with direct 2-D windows and clamped indices.
pub fn oracle_piqe(img: &Raster) -> (f64, usize) {
    let (h, w) = (img.height, img.width);
    let s = 7.0 / 6.0;
    let mut g = [[0.0f64; 7]; 7];
    let mut z = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (-(((i as f64 - 3.0).powi(2)) + (j as f64 - 3.0).powi(2)) / (2.0 * s * s)).exp();
            z += *v;
        }
    }
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut m = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (mut mu, mut mu2) = (0.0, 0.0);
            for i in 0..7 {
                for j in 0..7 {
                    let v = px(img, clamp(y as isize + i as isize - 3, h), clamp(x as isize + j as isize - 3, w));
                    mu += g[i][j] / z * v;
                    mu2 += g[i][j] / z * v * v;
                }
            }
            m[y * w + x] = (px(img, y, x) - mu) / ((mu2 - mu * mu).abs().sqrt() + 1.0 / 255.0);
        }
    }
    let sd = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
    };
    let (mut dist, mut active) = (0.0, 0usize);
    for by in (0..=h - 16).step_by(16) {
        for bx in (0..=w - 16).step_by(16) {
            let at = |y: usize, x: usize| m[(by + y) * w + bx + x];
            let all: Vec<f64> = (0..256).map(|i| at(i / 16, i % 16)).collect();
            let var = sd(&all).powi(2);
            if var <= 0.1 {
                continue;
            }
            active += 1;
            let edges = [
                (0..16).map(|x| at(0, x)).collect::<Vec<_>>(),
                (0..16).map(|x| at(15, x)).collect(),
                (0..16).map(|y| at(y, 0)).collect(),
                (0..16).map(|y| at(y, 15)).collect(),
            ];
            let blocky = edges.iter().any(|e| (0..=10).any(|k| sd(&e[k..k + 6]) < 0.1));
            if blocky {
                dist += 1.0;
                continue;
            }
            let centre: Vec<f64> = (0..16).flat_map(|y| [at(y, 7), at(y, 8)]).collect();
            let surround: Vec<f64> = (0..16).flat_map(|y| (0..16).filter(|&x| x != 7 && x != 8).map(move |x| (y, x))).map(|(y, x)| at(y, x)).collect();
            let mut ratio = sd(&centre) / sd(&surround);
            if ratio.is_nan() {
                ratio = 0.0;
            }
            let sigma = var.sqrt();
            let beta = (sigma - ratio).abs() / sigma.max(ratio);
            if sigma > 2.0 * beta {
                dist += var.min(1.0);
            }
        }
    }
    (100.0 * (dist + 1.0) / (active as f64 + 1.0), active)
}

pub fn textured(seed: u64, side: usize) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp: f32 = rng.gen_range(0.02..0.3);
    Raster::from_fn(1, side, side, |_, y, x| {
        let wave = 0.5 + 0.2 * (x as f32 * 0.785).sin() + 0.2 * (y as f32 * 0.6).cos();
        (wave + amp * (rng.gen::<f32>() - 0.5)).clamp(0.0, 1.0)
    })
}
