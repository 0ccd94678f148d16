//! Trains a small model on a freshly generated 64×64 dataset, resumes it
//! from a mid-run checkpoint, and compares it against bicubic upsampling.

use deeplight::dataset::{generate_dataset, make_manifest_for, SceneSpec};
use deeplight::harness::{evaluate_bicubic, read_log, train_on, RunConfig, TrainOptions, TrainingData, LOG_FILE};
use deeplight::metrics::aggregate;

fn main() -> deeplight::Result<()> {
    let root = std::env::temp_dir().join(format!("deeplight_train_small_{}", std::process::id()));
    let data_dir = root.join("data");
    let spec = SceneSpec { hr_size: 64, warp_max_px: 4.0, ..SceneSpec::default() };
    generate_dataset(&data_dir, &make_manifest_for(&spec, 16, (0.75, 0.125, 0.125), 1)?)?;
    let data = TrainingData::load(&data_dir)?;

    let mut cfg = RunConfig { steps: 80, eval_every: 40, data_dir: data_dir.clone(), ..RunConfig::default() };
    cfg.model.lr_size = (8, 8);
    cfg.model.base_channels = 8;
    cfg.model.num_res_blocks = 1;

    // run half, stop, then resume from the checkpoint written at the stop
    let out = root.join("run");
    train_on(&cfg, &data, &out, &TrainOptions { resume: false, stop_after: Some(40) })?;
    let summary = train_on(&cfg, &data, &out, &TrainOptions { resume: true, stop_after: None })?;

    let log = read_log(&out.join(LOG_FILE))?;
    println!("loss {:.4} at step 0, {:.4} at step {}", log[0].loss, log.last().unwrap().loss, log.len() - 1);
    let bicubic = aggregate(&evaluate_bicubic(&data.val, 8)?);
    println!(
        "val PSNR: model {:.2} dB, bicubic {:.2} dB",
        summary.final_eval.get("psnr").unwrap_or(f64::NAN),
        bicubic.get("psnr").unwrap_or(f64::NAN)
    );
    std::fs::remove_dir_all(&root).ok();
    Ok(())
}
