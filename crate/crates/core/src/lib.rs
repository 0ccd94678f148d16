pub mod baseline;
pub mod config;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod objective;

pub use config::{Ablation, ModelConfig};
pub use error::{Error, Result};
