//! Bicubic upsampling, the reference point every learned model must beat.

use crate::dataset::Raster;

/// Keys cubic convolution coefficient.
pub const KEYS_A: f64 = -0.5;

pub fn keys_kernel(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source index and four tap weights for each output position.
fn taps(out_len: usize, in_len: usize, r: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..out_len)
        .map(|i| {
            // pixel centres are aligned, as in the degradation model
            let s = (i as f64 + 0.5) / r as f64 - 0.5;
            let base = s.floor();
            let mut idx = [0usize; 4];
            let mut wts = [0.0f64; 4];
            for k in 0..4 {
                let p = base + k as f64 - 1.0;
                idx[k] = p.clamp(0.0, in_len as f64 - 1.0) as usize;
                wts[k] = keys_kernel(s - p);
            }
            (idx, wts)
        })
        .collect()
}

/// Upsamples every band by `r` with replicated borders; output is clamped to
/// the unit range.
pub fn bicubic_upsample(src: &Raster, r: usize) -> Raster {
    let (h, w) = (src.height, src.width);
    let (oh, ow) = (h * r, w * r);
    let tx = taps(ow, w, r);
    let ty = taps(oh, h, r);
    let mut out = Raster::zeros(src.bands, oh, ow);
    for b in 0..src.bands {
        let plane = src.band(b);
        let mut rows = vec![0.0f64; h * ow];
        for y in 0..h {
            for (x, (idx, wts)) in tx.iter().enumerate() {
                rows[y * ow + x] = (0..4).map(|k| wts[k] * plane[y * w + idx[k]] as f64).sum();
            }
        }
        let dst = out.band_mut(b);
        for (y, (idx, wts)) in ty.iter().enumerate() {
            for x in 0..ow {
                let v: f64 = (0..4).map(|k| wts[k] * rows[idx[k] * ow + x]).sum();
                dst[y * ow + x] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    out
}
