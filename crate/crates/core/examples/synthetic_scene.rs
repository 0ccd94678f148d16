//! Generates one multi-modal scene, prints its statistics and writes the
//! five rasters to a directory (first argument, default `scene_demo`).

use std::path::PathBuf;

use deeplight::dataset::{generate_scene, write_bundle, SceneSpec};

fn main() -> deeplight::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scene_demo".into()));
    let spec = SceneSpec { seed: 42, ..SceneSpec::default() };
    let b = generate_scene(&spec);

    println!("HR NTL   {}x{}  mean {:.5}", b.hr_ntl.height, b.hr_ntl.width, b.hr_ntl.mean());
    println!("LR NTL   {}x{}  mean {:.5}", b.lr_ntl.height, b.lr_ntl.width, b.lr_ntl.mean());
    println!("DMO      {} bands", b.dmo.bands);
    let dem_max = b.dem.data.iter().copied().fold(0.0f32, f32::max);
    println!("DEM      max {dem_max:.3} (log-scaled elevation)");
    println!("dark fraction {:.4}, ISP zero:one {:.1}", b.dark_fraction(), b.isp_zero_ratio());

    write_bundle(&b, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
