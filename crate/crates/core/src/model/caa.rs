//! Calibration-aware alignment.

use deeplight_tensor::{TensorError, Var};

use super::{FeatureSet, Session, LEAKY_SLOPE};
use crate::error::Result;

impl Session {
    /// Brings every modality onto the LR grid. The global warp is
    /// regressed from `n_l` alone and reused for the auxiliary features.
    pub fn caa_forward(&mut self, n_l: Var, m_dmo: Var, m_dem: Var) -> Result<FeatureSet> {
        let cfg = self.config().clone();
        let a = cfg.ablation;
        let (n, h, w) = self.check_inputs(n_l, m_dmo, m_dem)?;
        let mut feats = FeatureSet::default();

        let mut grid = None;
        if a.uses_lr_ntl() {
            if a.uses_alignment() {
                let omega = self.localize(n_l, n)?;
                let g = self.graph.affine_grid(omega, h, w)?;
                let warped = self.graph.grid_sample(n_l, g)?;
                let off = self.conv("caa.offset", warped, 1)?;
                let wt = self.params.get("caa.deform.weight")?;
                let b = self.params.get("caa.deform.bias")?;
                let x = self.graph.deformable_conv2d(warped, off, wt, Some(b))?;
                let x = self.graph.leaky_relu(x, LEAKY_SLOPE);
                feats.f_ntl = Some(self.conv_act("caa.recon", x, 1)?);
                feats.warp_omega = Some(omega);
                grid = Some(g);
            } else {
                let x = self.conv_act("caa.plain.0", n_l, 1)?;
                feats.f_ntl = Some(self.conv_act("caa.plain.1", x, 1)?);
            }
        }
        if a.uses_dmo() {
            feats.f_dmo = Some(self.auxiliary("dmo", m_dmo, grid)?);
        }
        if a.uses_dem() {
            feats.f_dem = Some(self.auxiliary("dem", m_dem, grid)?);
        }
        Ok(feats)
    }

    /// `f_loc`: two stride-2 convs, global pooling and a 1×1 regression to
    /// the six affine parameters, reshaped to `N×2×3`.
    fn localize(&mut self, n_l: Var, n: usize) -> Result<Var> {
        let x = self.conv_act("caa.loc.0", n_l, 2)?;
        let x = self.conv_act("caa.loc.1", x, 2)?;
        let x = self.graph.spatial_mean(x)?;
        let theta = self.conv("caa.loc.fc", x, 1)?;
        Ok(self.graph.reshape(theta, &[n, 2, 3])?)
    }

    fn auxiliary(&mut self, name: &str, m: Var, grid: Option<Var>) -> Result<Var> {
        let mut x = m;
        for i in 0..self.config().num_scales_m {
            x = self.conv_act(&format!("caa.down_{name}.{i}"), x, 2)?;
        }
        if let Some(g) = grid {
            x = self.graph.grid_sample(x, g)?;
        }
        let x = self.conv_act(&format!("caa.calib_{name}.0"), x, 1)?;
        self.conv_act(&format!("caa.calib_{name}.1"), x, 1)
    }

    fn check_inputs(&self, n_l: Var, m_dmo: Var, m_dem: Var) -> Result<(usize, usize, usize)> {
        let cfg = self.config();
        let r = cfg.scale_r;
        let l = self.graph.shape(n_l);
        let dim = |msg: String| TensorError::Dimension { op: "caa_forward", msg };
        let &[n, 1, h, w] = l else {
            return Err(dim(format!("LR NTL must be N×1×h×w, got {l:?}")).into());
        };
        for (name, v, bands) in [("DMO", m_dmo, cfg.dmo_bands), ("DEM", m_dem, 1)] {
            let s = self.graph.shape(v);
            if s != [n, bands, h * r, w * r] {
                return Err(dim(format!(
                    "{name} must be {n}×{bands}×{}×{} for an LR input of {h}×{w} at ×{r}, got {s:?}",
                    h * r,
                    w * r
                ))
                .into());
            }
        }
        Ok((n, h, w))
    }
}
