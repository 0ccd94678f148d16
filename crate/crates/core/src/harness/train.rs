use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use deeplight_tensor::{Adam, Tensor};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::config::RunConfig;
use super::eval::{check_compatible, evaluate_model, Tiles};
use crate::dataset::{DatasetManifest, ModalityBundle, Split};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, Aggregate};
use crate::model::checkpoint::Checkpoint;
use crate::model::{build, ModelState, Session};
use crate::objective::composite;

pub const LOG_FILE: &str = "train_log.jsonl";
pub const LATEST: &str = "latest.dlck";
pub const BEST: &str = "best.dlck";
pub const FINAL: &str = "final.dlck";
pub const LAST_FINITE: &str = "last_finite.dlck";
pub const RUN_CONFIG: &str = "run.cfg";

/// Train and validation scenes held in memory for a run.
pub struct TrainingData {
    pub manifest: DatasetManifest,
    pub train: Tiles,
    pub val: Tiles,
}

impl TrainingData {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::read(dir)?;
        let train = manifest.load_split(dir, Split::Train)?;
        let val = manifest.load_split(dir, Split::Val)?;
        Ok(Self { manifest, train, val })
    }
}

/// Loss components of one step, as logged.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    pub l1: f64,
    pub scale_l1: Vec<f64>,
    pub bce: Option<f64>,
}

impl StepRecord {
    fn to_json(&self, wall_s: f64) -> Value {
        json!({
            "step": self.step,
            "loss": self.loss,
            "l1": self.l1,
            "scale_l1": self.scale_l1,
            "bce": self.bce,
            "wall_s": wall_s,
        })
    }

    pub fn from_json(v: &Value) -> Option<Self> {
        Some(Self {
            step: v["step"].as_u64()?,
            loss: v["loss"].as_f64()?,
            l1: v["l1"].as_f64()?,
            scale_l1: v["scale_l1"].as_array()?.iter().map(Value::as_f64).collect::<Option<_>>()?,
            bce: v["bce"].as_f64(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    /// Records of the steps run by this call (not earlier resumed ones).
    pub records: Vec<StepRecord>,
    pub final_eval: Aggregate,
    pub best_val_psnr: Option<f64>,
    pub out_dir: PathBuf,
}

impl TrainSummary {
    pub fn final_checkpoint(&self) -> PathBuf {
        self.out_dir.join(FINAL)
    }
}

/// Scene indices of the batch for `step`; a pure function of `(seed, step)`,
/// which is what makes a resumed run retrace the original one.
pub fn batch_indices(seed: u64, step: u64, n_train: usize, batch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    let mut idx = sample(&mut rng, n_train, batch).into_vec();
    idx.sort_unstable();
    idx
}

struct Batch {
    lr: Tensor,
    dmo: Tensor,
    dem: Tensor,
    hr: Tensor,
    isp: Tensor,
}

fn make_batch(scenes: &[&ModalityBundle]) -> Result<Batch> {
    let stack = |f: &dyn Fn(&ModalityBundle) -> Tensor| -> Result<Tensor> {
        let items: Vec<Tensor> = scenes.iter().map(|b| f(b)).collect();
        Ok(Tensor::stack_batch(&items)?)
    };
    Ok(Batch {
        lr: stack(&|b| b.lr_ntl.to_tensor())?,
        dmo: stack(&|b| b.dmo.to_tensor())?,
        dem: stack(&|b| b.dem.to_tensor())?,
        hr: stack(&|b| b.hr_ntl.to_tensor())?,
        isp: stack(&|b| b.isp.to_tensor())?,
    })
}

/// Forward, loss, backward and gradient collection for one batch. The
/// returned record is computed before any parameter changes.
fn loss_and_grads(state: &mut ModelState, cfg: &RunConfig, batch: &Batch, step: u64) -> Result<StepRecord> {
    let loss_cfg = cfg.effective_loss();
    let mut s = Session::trainable(state);
    let (lr, dmo, dem) = s.inputs(&batch.lr, &batch.dmo, &batch.dem);
    let out = s.forward(lr, dmo, dem)?;
    let terms = composite(&mut s.graph, &out, &batch.hr, &batch.isp, &loss_cfg)?;
    let scalar = |s: &Session, v| s.value(v).item().map(f64::from).unwrap_or(f64::NAN);
    let record = StepRecord {
        step,
        loss: scalar(&s, terms.total),
        l1: scalar(&s, terms.l1),
        scale_l1: terms.scale_l1.iter().map(|&v| scalar(&s, v)).collect(),
        bce: terms.bce.map(|v| scalar(&s, v)),
    };
    if !record.loss.is_finite() {
        return Ok(record);
    }
    s.graph.backward(terms.total)?;
    state.params.collect_grads(&mut s.graph, &s.params)?;
    Ok(record)
}

fn grads_finite(state: &ModelState) -> bool {
    state
        .params
        .iter()
        .all(|(_, p)| p.grad.as_ref().is_none_or(|g| g.all_finite()))
}

fn checkpoint(state: &ModelState, adam: &Adam, step: u64, cfg: &RunConfig, best: Option<f64>) -> Checkpoint {
    let mut ck = Checkpoint::new(state.clone());
    ck.optimizer = Some(adam.clone());
    ck.step = step;
    ck.meta.set("run.seed", cfg.seed);
    ck.meta.set("run.ablation", cfg.ablation);
    if let Some(b) = best {
        ck.meta.set("run.best_val_psnr", b);
    }
    ck
}

/// Keeps log lines from before `step` and reopens the file for appending.
fn reopen_log(path: &Path, step: u64) -> Result<File> {
    let mut kept = String::new();
    if step > 0 && path.exists() {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let v: Value = match serde_json::from_str(&line) {
                Ok(v) => v,
                Err(_) => continue, // a line torn by the interruption
            };
            let s = v["step"].as_u64().unwrap_or(u64::MAX);
            let is_eval = v.get("eval").is_some();
            if s < step || (is_eval && s == step) {
                kept.push_str(&line);
                kept.push('\n');
            }
        }
    }
    std::fs::write(path, kept).map_err(|e| Error::io(path, e))?;
    OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))
}

fn write_line(log: &mut File, path: &Path, v: &Value) -> Result<()> {
    writeln!(log, "{v}").and_then(|_| log.flush()).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Continue from `latest.dlck` in the output directory.
    pub resume: bool,
    /// Stop after this many steps of the schedule, as if interrupted.
    pub stop_after: Option<u64>,
}

/// Runs `cfg` on preloaded data, writing logs and checkpoints to `out`.
pub fn train_on(cfg: &RunConfig, data: &TrainingData, out: &Path, opts: &TrainOptions) -> Result<TrainSummary> {
    cfg.validate()?;
    if cfg.batch_size > data.train.len() {
        return Err(Error::config(
            "batch_size",
            format!("{} exceeds the {} training scenes", cfg.batch_size, data.train.len()),
        ));
    }
    if data.val.is_empty() {
        return Err(Error::Data("the validation split is empty; best-checkpoint selection needs at least one scene".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.write(&out.join(RUN_CONFIG))?;

    let (mut state, mut adam, start, mut best) = if opts.resume {
        let ck = Checkpoint::load(&out.join(LATEST))?;
        if ck.state.config != cfg.model {
            return Err(Error::config("model", "checkpoint was trained with a different model config"));
        }
        let adam = ck
            .optimizer
            .ok_or_else(|| Error::State("checkpoint has no optimizer state".into()))?;
        let best = ck.meta.get::<f64>("run.best_val_psnr")?;
        (ck.state, adam, ck.step, best)
    } else {
        let state = build(&cfg.model, cfg.seed)?;
        let adam = Adam::new(cfg.adam, &state.params);
        (state, adam, 0, None)
    };
    check_compatible(&state, &data.manifest)?;
    adam.config = cfg.adam;

    let log_path = out.join(LOG_FILE);
    let mut log = reopen_log(&log_path, start)?;
    let clock = Instant::now();
    let end = opts.stop_after.map_or(cfg.steps, |s| s.min(cfg.steps));
    let mut records = Vec::new();

    let evaluate = |state: &ModelState, step: u64, log: &mut File| -> Result<Aggregate> {
        let agg = aggregate(&evaluate_model(state, &data.val)?);
        write_line(log, &log_path, &json!({ "step": step, "eval": agg.to_json() }))?;
        Ok(agg)
    };

    for step in start..end {
        let idx = batch_indices(cfg.seed, step, data.train.len(), cfg.batch_size);
        let scenes: Vec<&ModalityBundle> = idx.iter().map(|&i| &data.train[i].1).collect();
        let batch = make_batch(&scenes)?;
        let record = loss_and_grads(&mut state, cfg, &batch, step)?;
        if !record.loss.is_finite() || !grads_finite(&state) {
            state.params.zero_grads();
            checkpoint(&state, &adam, step, cfg, best).save(&out.join(LAST_FINITE))?;
            return Err(Error::Numeric(format!(
                "non-finite loss or gradient at step {step} (loss {}); parameters of the last finite step saved to {}",
                record.loss,
                out.join(LAST_FINITE).display()
            )));
        }
        adam.step(&mut state.params)?;
        write_line(&mut log, &log_path, &record.to_json(clock.elapsed().as_secs_f64()))?;
        records.push(record);

        let done = step + 1;
        if cfg.eval_every > 0 && done % cfg.eval_every == 0 && done < cfg.steps {
            let agg = evaluate(&state, done, &mut log)?;
            if let Some(p) = agg.get("psnr") {
                if best.is_none_or(|b| p > b) {
                    best = Some(p);
                    checkpoint(&state, &adam, done, cfg, best).save(&out.join(BEST))?;
                }
            }
            checkpoint(&state, &adam, done, cfg, best).save(&out.join(LATEST))?;
        }
    }

    if end < cfg.steps {
        // interrupted on request; the latest checkpoint is the resume point
        checkpoint(&state, &adam, end, cfg, best).save(&out.join(LATEST))?;
        return Ok(TrainSummary {
            records,
            final_eval: aggregate(&[]),
            best_val_psnr: best,
            out_dir: out.to_path_buf(),
        });
    }

    let final_eval = evaluate(&state, cfg.steps, &mut log)?;
    if let Some(p) = final_eval.get("psnr") {
        if best.is_none_or(|b| p > b) {
            best = Some(p);
            checkpoint(&state, &adam, cfg.steps, cfg, best).save(&out.join(BEST))?;
        }
    }
    let ck = checkpoint(&state, &adam, cfg.steps, cfg, best);
    ck.save(&out.join(LATEST))?;
    ck.save(&out.join(FINAL))?;
    Ok(TrainSummary {
        records,
        final_eval,
        best_val_psnr: best,
        out_dir: out.to_path_buf(),
    })
}

/// Loads the data named by `cfg.data_dir` and trains.
pub fn train(cfg: &RunConfig, out: &Path, opts: &TrainOptions) -> Result<TrainSummary> {
    let data = TrainingData::load(&cfg.data_dir)?;
    train_on(cfg, &data, out, opts)
}

/// Step records of a log file, in order; evaluation lines are skipped.
pub fn read_log(path: &Path) -> Result<Vec<StepRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut offset = 0u64;
    for (i, line) in text.lines().enumerate() {
        let v: Value = serde_json::from_str(line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            offset,
            msg: format!("line {}: {e}", i + 1),
        })?;
        if v.get("eval").is_none() {
            let rec = StepRecord::from_json(&v).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                offset,
                msg: format!("line {}: not a step record", i + 1),
            })?;
            out.push(rec);
        }
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}
