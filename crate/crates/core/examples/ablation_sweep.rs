//! Trains all eight ablation variants for a few steps on a tiny dataset and
//! prints the matrix. The budget is far too small to rank them; see the
//! acceptance suite for the full-budget comparison.

use deeplight::dataset::{generate_dataset, make_manifest_for, SceneSpec};
use deeplight::harness::{ablate_on, RunConfig, TrainingData};
use deeplight::metrics::METRIC_NAMES;

fn main() -> deeplight::Result<()> {
    let root = std::env::temp_dir().join(format!("deeplight_ablation_sweep_{}", std::process::id()));
    let spec = SceneSpec { hr_size: 64, warp_max_px: 4.0, ..SceneSpec::default() };
    generate_dataset(&root.join("data"), &make_manifest_for(&spec, 8, (0.5, 0.25, 0.25), 2)?)?;
    let data = TrainingData::load(&root.join("data"))?;

    let mut cfg = RunConfig { steps: 10, eval_every: 0, ..RunConfig::default() };
    cfg.model.lr_size = (8, 8);
    cfg.model.base_channels = 8;
    cfg.model.num_res_blocks = 1;

    let rows = ablate_on(&cfg, &data, &root.join("runs"));
    print!("{:<12}", "");
    for m in METRIC_NAMES {
        print!("{m:>9}");
    }
    println!();
    for r in &rows {
        print!("{:<12}", r.ablation.label());
        match &r.outcome {
            Ok(agg) => METRIC_NAMES.iter().for_each(|m| print!("{:>9.4}", agg.get(m).unwrap_or(f64::NAN))),
            Err(e) => print!("  failed: {e}"),
        }
        println!();
    }
    std::fs::remove_dir_all(&root).ok();
    Ok(())
}
