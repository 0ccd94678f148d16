//! Hash-based value noise; no tables, so any lattice point is computable
//! from `(seed, octave, ix, iy)` alone.

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(seed: u64, octave: u32, ix: i64, iy: i64) -> f64 {
    let h = mix(seed ^ mix((octave as u64) << 40 ^ mix(ix as u64 ^ mix(iy as u64 ^ 0x9e37_79b9_7f4a_7c15))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Single octave in `[0, 1)` at continuous lattice coordinates.
pub fn value(seed: u64, octave: u32, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (tx, ty) = (smooth(x - x0), smooth(y - y0));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v = |dx, dy| lattice(seed, octave, ix + dx, iy + dy);
    let top = v(0, 0) + (v(1, 0) - v(0, 0)) * tx;
    let bot = v(0, 1) + (v(1, 1) - v(0, 1)) * tx;
    top + (bot - top) * ty
}

/// Fractal sum of `octaves` layers, normalized back to `[0, 1)`.
/// `cells` is the lattice count across the unit square for the first
/// octave; each further octave doubles it and scales amplitude by
/// `persistence`.
pub fn fbm(seed: u64, u: f64, v: f64, cells: f64, octaves: u32, persistence: f64) -> f64 {
    let (mut total, mut norm, mut amp, mut freq) = (0.0, 0.0, 1.0, cells);
    for o in 0..octaves {
        total += amp * value(seed, o, u * freq, v * freq);
        norm += amp;
        amp *= persistence;
        freq *= 2.0;
    }
    total / norm
}

/// A `size×size` fbm field over the unit square, row-major.
pub fn field(seed: u64, size: usize, cells: f64, octaves: u32, persistence: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = ((x as f64 + 0.5) / size as f64, (y as f64 + 0.5) / size as f64);
            out.push(fbm(seed, u, v, cells, octaves, persistence));
        }
    }
    out
}
