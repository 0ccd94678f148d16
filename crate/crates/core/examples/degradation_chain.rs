//! Walks a single light source through the sensor model: blur, saturation,
//! box downsampling, noise and 6-bit quantization.

use deeplight::dataset::{degrade, Raster, SceneSpec};

fn main() {
    let mut hr = Raster::zeros(1, 64, 64);
    for (y, x) in [(20, 20), (21, 20), (20, 21), (21, 21)] {
        hr.data[y * 64 + x] = 1.0;
    }
    let base = SceneSpec { hr_size: 64, warp_max_px: 0.0, noise_sigma: 0.0, ..SceneSpec::default() };

    for (label, spec) in [
        ("no saturation", SceneSpec { saturation_level: 1.0, ..base.clone() }),
        ("default saturation", base.clone()),
        ("strong saturation", SceneSpec { saturation_level: 0.01, ..base.clone() }),
        ("with noise", SceneSpec { noise_sigma: 0.01, ..base.clone() }),
    ] {
        let lr = degrade(&hr, &spec);
        let lit = lr.data.iter().filter(|&&v| v > 0.0).count();
        let peak = lr.data.iter().copied().fold(0.0f32, f32::max);
        println!("{label:<20} lit LR pixels {lit:>3}  peak {peak:.4}  mean {:.5} (HR mean {:.5})", lr.mean(), hr.mean());
    }
}
