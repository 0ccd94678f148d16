use std::path::Path;

use deeplight_tensor::Tensor;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::baseline::bicubic_upsample;
use crate::dataset::{DatasetManifest, ModalityBundle, Raster, Split};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_bundle, method_notes, report_section, MetricsReport};
use crate::model::checkpoint::Checkpoint;
use crate::model::ModelState;

/// Scenes of one split, with their ids.
pub type Tiles = Vec<(usize, ModalityBundle)>;

/// The model's finest prediction for one scene, clipped to the data range.
pub fn predict_tile(state: &ModelState, bundle: &ModalityBundle) -> Result<Raster> {
    let out = state.predict(&bundle.lr_ntl.to_tensor(), &bundle.dmo.to_tensor(), &bundle.dem.to_tensor())?;
    let clipped: Tensor = out.finest().map(|v| v.clamp(0.0, 1.0));
    Raster::from_tensor(&clipped)
}

fn with_tile<T>(id: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Data(format!("scene {id}: {e}")))
}

pub fn evaluate_model(state: &ModelState, tiles: &[(usize, ModalityBundle)]) -> Result<Vec<MetricsReport>> {
    tiles
        .par_iter()
        .map(|(id, b)| with_tile(*id, predict_tile(state, b).and_then(|p| evaluate_bundle(&p, b))))
        .collect()
}

pub fn evaluate_bicubic(tiles: &[(usize, ModalityBundle)], scale_r: usize) -> Result<Vec<MetricsReport>> {
    tiles
        .par_iter()
        .map(|(id, b)| with_tile(*id, evaluate_bundle(&bicubic_upsample(&b.lr_ntl, scale_r), b)))
        .collect()
}

/// Checks that a model can consume the scenes of `manifest`.
pub fn check_compatible(state: &ModelState, manifest: &DatasetManifest) -> Result<()> {
    let cfg = &state.config;
    let spec = &manifest.spec;
    if cfg.scale_r != spec.scale_r {
        return Err(Error::config(
            "model.scale_r",
            format!("model upsamples x{}, data is x{}", cfg.scale_r, spec.scale_r),
        ));
    }
    let lr = spec.lr_size();
    if cfg.lr_size != (lr, lr) {
        return Err(Error::config(
            "model.lr_h",
            format!("model expects {:?} inputs, data has {lr}x{lr}", cfg.lr_size),
        ));
    }
    Ok(())
}

/// The JSON document written by `eval`.
pub fn eval_document(ckpt_path: &Path, data_dir: &Path, split: Split, baseline: bool) -> Result<Value> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let manifest = DatasetManifest::read(data_dir)?;
    check_compatible(&ckpt.state, &manifest)?;
    let tiles = manifest.load_split(data_dir, split)?;
    if tiles.is_empty() {
        return Err(Error::Data(format!("split {split} is empty")));
    }
    let ids: Vec<usize> = tiles.iter().map(|(id, _)| *id).collect();
    let model = evaluate_model(&ckpt.state, &tiles)?;
    let mut doc = json!({
        "metadata": {
            "checkpoint": ckpt_path.display().to_string(),
            "step": ckpt.step,
            "ablation": ckpt.state.config.ablation.flag(),
            "split": split.to_string(),
            "notes": method_notes(),
        },
        "model": report_section(&ids, &model)?,
    });
    if baseline {
        let b = evaluate_bicubic(&tiles, manifest.spec.scale_r)?;
        doc["baseline_bicubic"] = report_section(&ids, &b)?;
    }
    Ok(doc)
}
