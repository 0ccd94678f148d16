use std::path::{Path, PathBuf};

use deeplight_tensor::AdamConfig;

use crate::config::{Ablation, ModelConfig};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::objective::LossConfig;

/// Everything a training run depends on besides the data itself.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// `model.ablation` is always equal to [`RunConfig::ablation`].
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub ablation: Ablation,
    /// Validation and checkpoint cadence in steps; 0 evaluates only at the end.
    pub eval_every: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            steps: 2000,
            batch_size: 2,
            seed: 0,
            data_dir: PathBuf::from("data"),
            ablation: Ablation::None,
            eval_every: 250,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.model.ablation != self.ablation {
            return Err(Error::config("ablation", "model.ablation disagrees with ablation"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        let scales = if self.ablation.uses_multiscale() { self.model.num_scales_m } else { 1 };
        self.effective_loss().validate(scales)?;
        let a = &self.adam;
        if !(a.lr > 0.0) {
            return Err(Error::config("optim.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(Error::config("optim.betas", "must lie in [0, 1)"));
        }
        if !(a.eps > 0.0) {
            return Err(Error::config("optim.eps", "must be positive"));
        }
        Ok(())
    }

    /// The loss actually optimized once the ablation has removed heads.
    pub fn effective_loss(&self) -> LossConfig {
        self.loss.for_ablation(self.ablation)
    }

    pub fn with_ablation(&self, ablation: Ablation) -> Self {
        let mut cfg = self.clone();
        cfg.ablation = ablation;
        cfg.model.ablation = ablation;
        cfg
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        self.model.write_kv(&mut kv, "model.");
        kv.retain(|k| k != "model.ablation");
        self.loss.write_kv(&mut kv);
        kv.set("optim.lr", self.adam.lr);
        kv.set("optim.beta1", self.adam.beta1);
        kv.set("optim.beta2", self.adam.beta2);
        kv.set("optim.eps", self.adam.eps);
        kv.set("steps", self.steps);
        kv.set("batch_size", self.batch_size);
        kv.set("seed", self.seed);
        kv.set("data_dir", self.data_dir.display());
        kv.set("ablation", self.ablation);
        kv.set("eval_every", self.eval_every);
        kv
    }

    /// Defaults overridden by whatever keys `kv` carries. Unknown keys are
    /// rejected so that typos do not silently fall back to defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let known = Self::default().to_kv();
        if let Some(k) = kv.keys().find(|k| known.raw(k).is_none() && *k != "model.ablation") {
            return Err(Error::config(k, "unknown key"));
        }
        let mut cfg = Self::default();
        cfg.model.update_from_kv(kv, "model.")?;
        cfg.loss.update_from_kv(kv)?;
        kv.update("optim.lr", &mut cfg.adam.lr)?;
        kv.update("optim.beta1", &mut cfg.adam.beta1)?;
        kv.update("optim.beta2", &mut cfg.adam.beta2)?;
        kv.update("optim.eps", &mut cfg.adam.eps)?;
        kv.update("steps", &mut cfg.steps)?;
        kv.update("batch_size", &mut cfg.batch_size)?;
        kv.update("seed", &mut cfg.seed)?;
        if let Some(d) = kv.raw("data_dir") {
            cfg.data_dir = PathBuf::from(d);
        }
        cfg.ablation = cfg.model.ablation;
        kv.update("ablation", &mut cfg.ablation)?;
        cfg.model.ablation = cfg.ablation;
        kv.update("eval_every", &mut cfg.eval_every)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&KeyValues::parse(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv().render()).map_err(|e| Error::io(path, e))
    }
}
