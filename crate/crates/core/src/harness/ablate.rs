use std::path::Path;

use serde_json::{json, Value};

use super::config::RunConfig;
use super::train::{train_on, TrainOptions, TrainingData};
use crate::config::Ablation;
use crate::metrics::{Aggregate, METRIC_NAMES};

/// One row of the ablation matrix: the variant's validation aggregate after
/// the shared budget, or the error that stopped it.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub outcome: std::result::Result<Aggregate, String>,
}

impl AblationRow {
    pub fn psnr(&self) -> Option<f64> {
        self.outcome.as_ref().ok().and_then(|a| a.get("psnr"))
    }
}

/// Trains every variant with the same seed, data and budget. Each variant
/// writes to `out/<flag>`; a failing variant does not stop the others.
pub fn ablate_on(cfg: &RunConfig, data: &TrainingData, out: &Path) -> Vec<AblationRow> {
    Ablation::ALL
        .iter()
        .map(|&a| {
            let run = cfg.with_ablation(a);
            let outcome = train_on(&run, data, &out.join(a.flag()), &TrainOptions::default())
                .map(|s| s.final_eval)
                .map_err(|e| e.to_string());
            AblationRow { ablation: a, outcome }
        })
        .collect()
}

pub fn matrix_json(rows: &[AblationRow], cfg: &RunConfig) -> Value {
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            let mut v = json!({ "label": r.ablation.label(), "ablation": r.ablation.flag() });
            match &r.outcome {
                Ok(agg) => {
                    for name in METRIC_NAMES {
                        v[name] = agg.get(name).map_or(Value::Null, |x| json!(x));
                    }
                    v["status"] = json!("ok");
                }
                Err(e) => {
                    v["status"] = json!("failed");
                    v["error"] = json!(e);
                }
            }
            v
        })
        .collect();
    json!({
        "columns": METRIC_NAMES,
        "rows": rows,
        "config": cfg.to_kv().render(),
    })
}
