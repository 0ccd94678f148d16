//! Scores bicubic upsampling on a handful of scenes and prints the report
//! JSON that `deeplight eval` writes.

use deeplight::baseline::bicubic_upsample;
use deeplight::dataset::{generate_scene, SceneSpec};
use deeplight::metrics::{evaluate_bundle, method_notes, report_section};

fn main() -> deeplight::Result<()> {
    let mut ids = Vec::new();
    let mut reports = Vec::new();
    for seed in 0..4 {
        let b = generate_scene(&SceneSpec { seed, hr_size: 128, warp_max_px: 4.0, ..SceneSpec::default() });
        let up = bicubic_upsample(&b.lr_ntl, 8);
        ids.push(seed as usize);
        reports.push(evaluate_bundle(&up, &b)?);
    }
    let mut doc = report_section(&ids, &reports)?;
    doc["metadata"] = serde_json::json!({ "notes": method_notes() });
    println!("{}", serde_json::to_string_pretty(&doc["aggregate"]).expect("json"));
    println!("notes: {}", doc["metadata"]["notes"]["sam"]);
    Ok(())
}
