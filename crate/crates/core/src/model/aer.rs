//! Auxiliary-embedded refinement.

use deeplight_tensor::Var;

use super::{FeatureSet, ForwardVars, Session, LEAKY_SLOPE};
use crate::error::Result;

impl Session {
    /// `m` ×2 upsampling blocks with a prediction tap after each; the ISP
    /// head reads the finest prediction.
    pub fn aer_forward(&mut self, f_main: Var) -> Result<ForwardVars> {
        let cfg = self.config().clone();
        let multiscale = cfg.ablation.uses_multiscale();
        let mut x = f_main;
        let mut pyramid = Vec::with_capacity(cfg.num_scales_m);
        for j in 0..cfg.num_scales_m {
            let y = self.conv(&format!("aer.up.{j}"), x, 1)?;
            let y = self.graph.pixel_shuffle(y, 2)?;
            x = self.graph.leaky_relu(y, LEAKY_SLOPE);
            if multiscale {
                pyramid.push(self.conv(&format!("aer.head.{j}"), x, 1)?);
            }
        }
        if !multiscale {
            pyramid.push(self.conv("aer.head", x, 1)?);
        }
        let isp_logits = if cfg.ablation.uses_isp() {
            let finest = *pyramid.last().expect("at least one scale");
            Some(self.conv("aer.isp", finest, 1)?)
        } else {
            None
        };
        Ok(ForwardVars {
            sr_pyramid: pyramid,
            isp_logits,
            features: FeatureSet::default(),
        })
    }
}
