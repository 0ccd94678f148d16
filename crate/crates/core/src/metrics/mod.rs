//! Evaluation scores: PSNR, SSIM, SAM, UIQI, CC against a reference and the
//! no-reference PIQE. Degenerate inputs (all-dark tiles are common) yield a
//! flag instead of NaN, and aggregation skips flagged values.

mod full_ref;
mod piqe;

use serde_json::{json, Map, Value};

pub use full_ref::{cc, gaussian_taps, mse, psnr, sam, ssim, uiqi, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW, UIQI_WINDOW, ZERO_VARIANCE};
pub use piqe::{mscn, piqe, piqe_detail, PiqeDetail};

use crate::dataset::{ModalityBundle, Raster};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flag {
    /// Prediction equals the target; PSNR is infinite.
    ExactMatch,
    /// The score is undefined for this input.
    Degenerate,
}

impl Flag {
    pub fn name(self) -> &'static str {
        match self {
            Flag::ExactMatch => "exact_match",
            Flag::Degenerate => "degenerate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub flag: Option<Flag>,
}

impl Measured {
    pub fn ok(value: f64) -> Self {
        Self { value, flag: None }
    }

    pub fn flagged(value: f64, flag: Flag) -> Self {
        Self { value, flag: Some(flag) }
    }

    /// The value, if it may enter an average.
    pub fn usable(&self) -> Option<f64> {
        self.flag.is_none().then_some(self.value)
    }
}

/// Names used in reports, in column order.
pub const METRIC_NAMES: [&str; 6] = ["psnr", "ssim", "sam", "uiqi", "cc", "piqe"];

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub psnr_db: Measured,
    pub ssim: Measured,
    pub sam_rad: Measured,
    pub uiqi: Measured,
    pub cc: Measured,
    /// Scored on the prediction alone.
    pub piqe: Measured,
    pub n_pixels: usize,
    pub uiqi_skipped_windows: usize,
}

impl MetricsReport {
    pub fn columns(&self) -> [Measured; 6] {
        [self.psnr_db, self.ssim, self.sam_rad, self.uiqi, self.cc, self.piqe]
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        let mut flags = Map::new();
        for (name, m) in METRIC_NAMES.iter().zip(self.columns()) {
            obj.insert(name.to_string(), number(m.value));
            if let Some(f) = m.flag {
                flags.insert(name.to_string(), json!(f.name()));
            }
        }
        obj.insert("n_pixels".into(), json!(self.n_pixels));
        obj.insert("uiqi_skipped_windows".into(), json!(self.uiqi_skipped_windows));
        obj.insert("flags".into(), Value::Object(flags));
        Value::Object(obj)
    }
}

/// Non-finite values have no JSON spelling; they become `null`.
fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

/// All six scores of a prediction against its reference.
pub fn evaluate_pair(pred: &Raster, target: &Raster) -> Result<MetricsReport> {
    let (uiqi_score, skipped) = uiqi(pred, target)?;
    Ok(MetricsReport {
        psnr_db: psnr(pred, target, 1.0)?,
        ssim: ssim(pred, target)?,
        sam_rad: sam(pred, target)?,
        uiqi: uiqi_score,
        cc: cc(pred, target)?,
        piqe: piqe(pred)?,
        n_pixels: pred.data.len(),
        uiqi_skipped_windows: skipped,
    })
}

/// Scores a high-resolution prediction against the bundle's reference.
pub fn evaluate_bundle(pred: &Raster, bundle: &ModalityBundle) -> Result<MetricsReport> {
    evaluate_pair(pred, &bundle.hr_ntl)
}

/// Unweighted mean over tiles; flagged values are left out and counted.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub tiles: usize,
    /// Per metric, in [`METRIC_NAMES`] order; `None` when no tile qualified.
    pub means: [Option<f64>; 6],
    pub degenerate_counts: [usize; 6],
}

impl Aggregate {
    pub fn get(&self, name: &str) -> Option<f64> {
        METRIC_NAMES.iter().position(|&n| n == name).and_then(|i| self.means[i])
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        for (name, m) in METRIC_NAMES.iter().zip(self.means) {
            obj.insert(name.to_string(), m.map_or(Value::Null, number));
        }
        let counts: Map<String, Value> = METRIC_NAMES
            .iter()
            .zip(self.degenerate_counts)
            .map(|(n, c)| (n.to_string(), json!(c)))
            .collect();
        obj.insert("degenerate_counts".into(), Value::Object(counts));
        obj.insert("tiles".into(), json!(self.tiles));
        Value::Object(obj)
    }
}

pub fn aggregate(reports: &[MetricsReport]) -> Aggregate {
    let mut sums = [0.0f64; 6];
    let mut used = [0usize; 6];
    let mut degenerate_counts = [0usize; 6];
    for r in reports {
        for (i, m) in r.columns().iter().enumerate() {
            match m.usable() {
                Some(v) => {
                    sums[i] += v;
                    used[i] += 1;
                }
                None => degenerate_counts[i] += 1,
            }
        }
    }
    let mut means = [None; 6];
    for i in 0..6 {
        if used[i] > 0 {
            means[i] = Some(sums[i] / used[i] as f64);
        }
    }
    Aggregate {
        tiles: reports.len(),
        means,
        degenerate_counts,
    }
}

/// Notes on choices a reader of a report would otherwise have to guess.
pub fn method_notes() -> Value {
    json!({
        "sam": "single-band images are compared as flattened intensity vectors",
        "ssim": format!("{SSIM_WINDOW}x{SSIM_WINDOW} gaussian window, sigma {SSIM_SIGMA}, C1 {SSIM_C1}, C2 {SSIM_C2}, L 1, valid windows only"),
        "uiqi": format!("{UIQI_WINDOW}x{UIQI_WINDOW} windows at stride 1; windows with zero variance or zero mean are skipped"),
        "piqe": format!(
            "MSCN {w}x{w} gaussian sigma 7/6 with replicated borders, C {c:.6} on a 0..1 scale (1 on 0..255); {b}x{b} blocks, \
             partial blocks dropped; active when MSCN sample variance > {a}; blocky when a {s}-pixel border segment has std < {t} (score 1); \
             otherwise noisy by the centre/surround test (score min(variance, 1)); C0 {c0}; computed on the prediction",
            w = piqe::MSCN_WINDOW,
            c = piqe::MSCN_C,
            b = piqe::BLOCK,
            a = piqe::ACTIVITY_THRESHOLD,
            s = piqe::SEGMENT,
            t = piqe::SEGMENT_FLAT_THRESHOLD,
            c0 = piqe::C0,
        ),
        "degenerate": "flagged scores are excluded from aggregate means and counted in degenerate_counts",
    })
}

/// A labelled set of tile reports, as written by `eval`.
pub fn report_section(ids: &[usize], reports: &[MetricsReport]) -> Result<Value> {
    if ids.len() != reports.len() {
        return Err(Error::State(format!("{} ids for {} reports", ids.len(), reports.len())));
    }
    let tiles: Vec<Value> = ids
        .iter()
        .zip(reports)
        .map(|(id, r)| {
            let mut v = r.to_json();
            v["id"] = json!(id);
            v
        })
        .collect();
    Ok(json!({ "tiles": tiles, "aggregate": aggregate(reports).to_json() }))
}
