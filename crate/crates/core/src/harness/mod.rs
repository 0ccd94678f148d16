//! Reproducible runs: configuration, training with checkpoints and logs,
//! evaluation reports and the ablation matrix.

mod ablate;
mod config;
mod eval;
mod train;

pub use ablate::{ablate_on, matrix_json, AblationRow};
pub use config::RunConfig;
pub use eval::{check_compatible, eval_document, evaluate_bicubic, evaluate_model, predict_tile, Tiles};
pub use train::{
    batch_indices, read_log, train, train_on, StepRecord, TrainOptions, TrainSummary, TrainingData, BEST, FINAL,
    LAST_FINITE, LATEST, LOG_FILE, RUN_CONFIG,
};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "DEEPLIGHT_THREADS";

/// Sizes the global worker pool from `DEEPLIGHT_THREADS`, if set. Safe to
/// call more than once; only the first call has an effect.
pub fn init_threads() -> crate::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| crate::Error::config(THREADS_ENV, format!("`{raw}` is not a positive integer")))?;
    // an already-initialized pool is fine
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
