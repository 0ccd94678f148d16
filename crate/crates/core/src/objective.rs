//! Training objective: weighted multi-scale L1 on the NTL pyramid plus
//! binary cross-entropy on the ISP head,
//!
//! ```text
//! loss = alpha * sum_j beta_j * mean|N_G,j - resize(N_H)_j| + (1 - alpha) * BCE(sigmoid(G_ISP), M_ISP)
//! ```
//!
//! The log-likelihood term carries the usual minus sign so the whole
//! expression is minimized.

use deeplight_tensor::{ops, Graph, Tensor, Var};

use crate::config::Ablation;
use crate::error::{Error, Result};
use crate::kv::{join, KeyValues};
use crate::model::ForwardVars;

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    /// Per-scale weights, coarsest first.
    pub betas: Vec<f64>,
    pub bce_epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            betas: vec![0.2, 0.3, 0.5],
            bce_epsilon: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self, num_scales: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("loss.alpha", format!("{} is outside [0, 1]", self.alpha)));
        }
        if self.betas.len() != num_scales {
            return Err(Error::config(
                "loss.betas",
                format!("{} weights for {num_scales} scales", self.betas.len()),
            ));
        }
        let sum: f64 = self.betas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.betas.iter().any(|b| *b < 0.0) {
            return Err(Error::config("loss.betas", format!("must be non-negative and sum to 1, sum is {sum}")));
        }
        if !(self.bce_epsilon > 0.0 && self.bce_epsilon <= 1e-3) {
            return Err(Error::config("loss.bce_epsilon", "must lie in (0, 1e-3]"));
        }
        Ok(())
    }

    /// The configuration actually optimized under `ablation`: without the
    /// ISP head the BCE term is dropped, and without multi-scale outputs a
    /// single full-weight scale remains.
    pub fn for_ablation(&self, ablation: Ablation) -> Self {
        let mut cfg = self.clone();
        if !ablation.uses_isp() {
            cfg.alpha = 1.0;
        }
        if !ablation.uses_multiscale() {
            cfg.betas = vec![1.0];
        }
        cfg
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        kv.set("loss.alpha", self.alpha);
        kv.set("loss.betas", join(&self.betas));
        kv.set("loss.bce_epsilon", self.bce_epsilon);
    }

    pub fn update_from_kv(&mut self, kv: &KeyValues) -> Result<()> {
        kv.update("loss.alpha", &mut self.alpha)?;
        if let Some(b) = kv.list("loss.betas")? {
            self.betas = b;
        }
        kv.update("loss.bce_epsilon", &mut self.bce_epsilon)?;
        Ok(())
    }
}

/// Scalar handles of one loss evaluation.
#[derive(Clone, Debug)]
pub struct LossTerms {
    pub total: Var,
    /// Weighted sum of the per-scale terms.
    pub l1: Var,
    /// Unweighted `mean|N_G,j - N_H,j|`, coarsest first.
    pub scale_l1: Vec<Var>,
    pub bce: Option<Var>,
}

/// `sum_j beta_j * mean|pred_j - resize(n_h)_j|`. Also returns the
/// unweighted per-scale terms.
pub fn multiscale_l1(g: &mut Graph, pyramid: &[Var], n_h: &Tensor, betas: &[f64]) -> Result<(Var, Vec<Var>)> {
    if pyramid.len() != betas.len() || pyramid.is_empty() {
        return Err(Error::config(
            "loss.betas",
            format!("{} weights for a pyramid of {} outputs", betas.len(), pyramid.len()),
        ));
    }
    let mut terms = Vec::with_capacity(pyramid.len());
    let mut total = None;
    for (&pred, &beta) in pyramid.iter().zip(betas) {
        let &[_, _, h, w] = g.shape(pred) else {
            return Err(Error::Data(format!("prediction must be 4-d, got {:?}", g.shape(pred))));
        };
        let target = g.constant(ops::resize_bilinear(n_h, h, w)?);
        let diff = g.sub(pred, target)?;
        let diff = g.abs(diff);
        let term = g.mean(diff);
        terms.push(term);
        let weighted = g.scale(term, beta as f32);
        total = Some(match total {
            None => weighted,
            Some(t) => g.add(t, weighted)?,
        });
    }
    Ok((total.expect("non-empty pyramid"), terms))
}

/// Mean binary cross-entropy of `sigmoid(logits)` against a binary mask.
pub fn isp_bce(g: &mut Graph, logits: Var, m_isp: &Tensor, eps: f64) -> Result<Var> {
    if let Some(v) = m_isp.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data(format!("ISP target must be binary, found {v}")));
    }
    Ok(g.bce_with_logits(logits, m_isp, eps)?)
}

/// The full objective. `cfg` is taken as given; apply
/// [`LossConfig::for_ablation`] first when training an ablated model.
pub fn composite(g: &mut Graph, out: &ForwardVars, n_h: &Tensor, m_isp: &Tensor, cfg: &LossConfig) -> Result<LossTerms> {
    cfg.validate(out.sr_pyramid.len())?;
    let (l1, scale_l1) = multiscale_l1(g, &out.sr_pyramid, n_h, &cfg.betas)?;
    let weighted = g.scale(l1, cfg.alpha as f32);
    let (total, bce) = match out.isp_logits {
        Some(logits) => {
            let bce = isp_bce(g, logits, m_isp, cfg.bce_epsilon)?;
            let b = g.scale(bce, (1.0 - cfg.alpha) as f32);
            (g.add(weighted, b)?, Some(bce))
        }
        None => (weighted, None),
    };
    Ok(LossTerms {
        total,
        l1,
        scale_l1,
        bce,
    })
}
