//! Procedural multi-modal scenes: terrain, settlements, lights and
//! multispectral reflectance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::degrade::{degrade, quantize};
use super::raster::Raster;
use super::{noise, ModalityBundle, SceneSpec};

/// Elevation cap used to normalize the log-scaled DEM (metres).
pub const DEM_CAP_M: f64 = 8848.0;
/// Ground sampling distance of the HR grid (metres), used for slopes.
pub const HR_PIXEL_M: f64 = 125.0;
const HR_LEVELS: f64 = 4095.0;
const DMO_LEVELS: f64 = 16383.0;

/// Reflectance of each landcover class in the seven DMO bands.
const WATER: [f64; 7] = [0.08, 0.07, 0.06, 0.04, 0.02, 0.01, 0.01];
const VEGETATION: [f64; 7] = [0.04, 0.05, 0.08, 0.05, 0.35, 0.18, 0.09];
const BARE: [f64; 7] = [0.12, 0.14, 0.18, 0.22, 0.28, 0.32, 0.28];
const BUILT: [f64; 7] = [0.20, 0.22, 0.25, 0.27, 0.30, 0.33, 0.31];

#[derive(Clone, Debug)]
struct Settlement {
    cy: f64,
    cx: f64,
    radius: f64,
    /// Ellipse axis ratio and orientation.
    squash: f64,
    angle: f64,
    peak: f64,
    edge_seed: u64,
}

impl Settlement {
    /// Distance in units of the settlement radius, with a ragged edge.
    fn reach(&self, y: f64, x: f64) -> f64 {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let (s, c) = self.angle.sin_cos();
        let a = dx * c + dy * s;
        let b = (-dx * s + dy * c) / self.squash;
        let d = (a * a + b * b).sqrt() / self.radius;
        let bearing = b.atan2(a);
        let wobble = noise::value(self.edge_seed, 0, 2.0 + 2.0 * bearing.cos(), 2.0 + 2.0 * bearing.sin());
        d / (0.75 + 0.5 * wobble)
    }
}

/// Elevation in metres; long-tailed across scenes, mostly below 1000 m.
fn terrain(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> Vec<f64> {
    let n = spec.hr_size;
    let base = 20.0 * (rng.gen::<f64>() * 4.0).exp();
    let relief = (150.0 + 2500.0 * rng.gen::<f64>().powi(3)) * (0.5 + spec.terrain_roughness);
    let seed: u64 = rng.gen();
    noise::field(seed, n, 3.0, 5, 0.35 + 0.4 * spec.terrain_roughness)
        .into_iter()
        .map(|v| (base + relief * v * v).min(DEM_CAP_M))
        .collect()
}

/// Slope magnitude (rise over run) by central differences.
fn slope(elev: &[f64], n: usize) -> Vec<f64> {
    let at = |y: usize, x: usize| elev[y * n + x];
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (y0, y1) = (y.saturating_sub(1), (y + 1).min(n - 1));
            let (x0, x1) = (x.saturating_sub(1), (x + 1).min(n - 1));
            let gy = (at(y1, x) - at(y0, x)) / ((y1 - y0) as f64 * HR_PIXEL_M);
            let gx = (at(y, x1) - at(y, x0)) / ((x1 - x0) as f64 * HR_PIXEL_M);
            out.push((gy * gy + gx * gx).sqrt());
        }
    }
    out
}

/// Size, shape and brightness of each settlement. Drawn from their own
/// stream so they can be known without building the terrain.
fn draw_settlements(spec: &SceneSpec) -> Vec<Settlement> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x544f_574e_53);
    let n = spec.hr_size as f64;
    let (lo, hi) = spec.num_settlements;
    let count = rng.gen_range(lo..=hi);
    (0..count)
        .map(|_| {
            let size: f64 = rng.gen::<f64>().powi(2);
            Settlement {
                cy: 0.0,
                cx: 0.0,
                radius: (3.0 + 9.0 * size) * n / 256.0,
                squash: rng.gen_range(0.55..1.0),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
                peak: (0.3 + 0.6 * size + rng.gen_range(0.0..0.1)).min(1.0),
                edge_seed: rng.gen(),
            }
        })
        .collect()
}

/// Rough total light of a scene, `sum(peak * area)`, from its spec alone.
/// Used to stratify dataset splits.
pub fn light_budget(spec: &SceneSpec) -> f64 {
    draw_settlements(spec)
        .iter()
        .map(|t| t.peak * t.radius * t.radius * t.squash)
        .sum()
}

/// Rejection sampling of settlement centres: flat ground is strongly
/// preferred.
fn place_settlements(rng: &mut ChaCha8Rng, spec: &SceneSpec, slopes: &[f64]) -> Vec<Settlement> {
    let n = spec.hr_size as f64;
    let mut towns = draw_settlements(spec);
    for t in &mut towns {
        for _ in 0..64 {
            t.cy = rng.gen_range(0.0..n);
            t.cx = rng.gen_range(0.0..n);
            let s = slopes[t.cy as usize * spec.hr_size + t.cx as usize];
            if rng.gen::<f64>() < (-s / 0.08).exp() {
                break;
            }
        }
    }
    towns
}

/// Lit halo, in settlement radii, beyond which a settlement emits nothing.
const HALO: f64 = 1.6;

/// Generates one bundle. Deterministic in `spec`.
pub fn generate_scene(spec: &SceneSpec) -> ModalityBundle {
    let n = spec.hr_size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let elev = terrain(&mut rng, spec);
    let slopes = slope(&elev, n);
    let towns = place_settlements(&mut rng, spec, &slopes);
    let texture_seed: u64 = rng.gen();
    let water_seed: u64 = rng.gen();
    let veg_seed: u64 = rng.gen();

    let mut isp = Raster::zeros(1, n, n);
    let mut ntl = Raster::zeros(1, n, n);
    for y in 0..n {
        for x in 0..n {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let mut light = 0.0f64;
            let mut built = false;
            for t in &towns {
                let d = t.reach(py, px);
                if d < 1.0 {
                    built = true;
                }
                if d < HALO {
                    let falloff = (1.0 - (d / HALO).powi(2)).powi(2);
                    let spill = if d < 1.0 { 1.0 } else { 0.45 };
                    light = light.max(t.peak * falloff * spill);
                }
            }
            if light > 0.0 {
                let tex = noise::fbm(texture_seed, px / n as f64, py / n as f64, 24.0, 2, 0.5);
                light *= 0.7 + 0.3 * tex;
            }
            let i = y * n + x;
            isp.data[i] = built as u8 as f32;
            ntl.data[i] = quantize(light.min(1.0), HR_LEVELS);
        }
    }

    let dem = Raster::new(
        1,
        n,
        n,
        elev.iter().map(|&e| (e.ln_1p() / DEM_CAP_M.ln_1p()) as f32).collect(),
    )
    .expect("dem shape");

    let dmo = multispectral(spec, &elev, &isp, water_seed, veg_seed);
    let lr_ntl = degrade(&ntl, spec);
    ModalityBundle {
        lr_ntl,
        hr_ntl: ntl,
        dmo,
        dem,
        isp,
    }
}

/// Seven-band reflectance: water in low basins, vegetation or bare ground
/// elsewhere, built surfaces on the ISP, all modulated by hill shading.
fn multispectral(spec: &SceneSpec, elev: &[f64], isp: &Raster, water_seed: u64, veg_seed: u64) -> Raster {
    let n = spec.hr_size;
    let (lo, hi) = elev.iter().fold((f64::MAX, f64::MIN), |(a, b), &e| (a.min(e), b.max(e)));
    let span = (hi - lo).max(1.0);
    let mut data = vec![0.0f32; 7 * n * n];
    for y in 0..n {
        for x in 0..n {
            let i = y * n + x;
            let (u, v) = ((x as f64 + 0.5) / n as f64, (y as f64 + 0.5) / n as f64);
            let rel = (elev[i] - lo) / span;
            let wet = noise::fbm(water_seed, u, v, 4.0, 3, 0.5);
            let water = smoothstep(0.62, 0.72, wet) * (1.0 - smoothstep(0.08, 0.2, rel));
            let green = smoothstep(0.35, 0.65, noise::fbm(veg_seed, u, v, 6.0, 3, 0.5)) * (1.0 - rel * 0.7);
            // illumination from the north-west
            let (y1, x1) = ((y + 1).min(n - 1), (x + 1).min(n - 1));
            let gy = (elev[y1 * n + x] - elev[i]) / HR_PIXEL_M;
            let gx = (elev[y * n + x1] - elev[i]) / HR_PIXEL_M;
            let shade = (1.0 + 0.5 * (-gx - gy) / (1.0 + gx * gx + gy * gy).sqrt()).clamp(0.5, 1.3);
            let urban = isp.data[i] as f64;
            for b in 0..7 {
                let land = green * VEGETATION[b] + (1.0 - green) * BARE[b];
                let natural = water * WATER[b] + (1.0 - water) * land * shade;
                let r = urban * BUILT[b] + (1.0 - urban) * natural;
                data[b * n * n + i] = quantize(r.clamp(0.0, 1.0), DMO_LEVELS);
            }
        }
    }
    Raster::new(7, n, n, data).expect("dmo shape")
}

fn smoothstep(a: f64, b: f64, v: f64) -> f64 {
    let t = ((v - a) / (b - a)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}
