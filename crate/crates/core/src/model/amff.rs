//! Auxiliary-to-main multi-modality feature fusion.

use deeplight_tensor::Var;

use super::{FeatureSet, Session};
use crate::error::{Error, Result};

impl Session {
    /// Cross-modality fusion module. Each branch refines its own stem while
    /// reading the other input's projection at every residual block.
    pub fn cmfm(&mut self, prefix: &str, feat_a: Var, feat_b: Var) -> Result<Var> {
        let stem_a = self.conv_act(&format!("{prefix}.in_a"), feat_a, 1)?;
        let stem_b = self.conv_act(&format!("{prefix}.in_b"), feat_b, 1)?;
        let proj_a = self.conv(&format!("{prefix}.proj_a"), feat_a, 1)?;
        let proj_b = self.conv(&format!("{prefix}.proj_b"), feat_b, 1)?;
        let a = self.branch(&format!("{prefix}.a"), stem_a, Some(proj_b))?;
        let b = self.branch(&format!("{prefix}.b"), stem_b, Some(proj_a))?;
        let cat = self.graph.concat(&[a, b], 1)?;
        let x = self.conv_act(&format!("{prefix}.fuse.0"), cat, 1)?;
        self.conv_act(&format!("{prefix}.fuse.1"), x, 1)
    }

    fn branch(&mut self, prefix: &str, stem: Var, cross: Option<Var>) -> Result<Var> {
        let mut x = stem;
        for i in 0..self.config().num_res_blocks {
            let inp = match cross {
                Some(p) => self.graph.concat(&[x, p], 1)?,
                None => x,
            };
            let y = self.conv_act(&format!("{prefix}.{i}.conv1"), inp, 1)?;
            let y = self.conv(&format!("{prefix}.{i}.conv2"), y, 1)?;
            x = self.graph.add(x, y)?;
        }
        // shallow features pass through a half-resolution round trip before
        // joining the deep path
        let &[_, _, h, w] = self.graph.shape(stem) else { unreachable!("conv output is 4-d") };
        let half = self.graph.resize_bilinear(stem, (h / 2).max(1), (w / 2).max(1))?;
        let shallow = self.graph.resize_bilinear(half, h, w)?;
        let cat = self.graph.concat(&[x, shallow], 1)?;
        self.conv_act(&format!("{prefix}.deep"), cat, 1)
    }

    /// Two-step fusion: auxiliaries first, then auxiliary into main. Missing
    /// modalities are replaced by the remaining ones.
    pub fn amff_forward(&mut self, mut feats: FeatureSet) -> Result<FeatureSet> {
        let missing = |what: &str| Error::State(format!("{what} feature not populated"));
        let dmo = feats.f_dmo.or(feats.f_dem).ok_or_else(|| missing("auxiliary"))?;
        let dem = feats.f_dem.or(feats.f_dmo).ok_or_else(|| missing("auxiliary"))?;
        let ntl = feats.f_ntl.or(feats.f_dmo).ok_or_else(|| missing("NTL"))?;

        if self.config().ablation.uses_cross_fusion() {
            let aux = self.cmfm("amff.aux", dmo, dem)?;
            feats.f_aux_fused = Some(aux);
            feats.f_main_fused = Some(self.cmfm("amff.main", aux, ntl)?);
        } else {
            let mut outs = Vec::with_capacity(3);
            for (name, f) in [("dmo", dmo), ("dem", dem), ("ntl", ntl)] {
                let stem = self.conv_act(&format!("amff.solo.{name}.in"), f, 1)?;
                outs.push(self.branch(&format!("amff.solo.{name}"), stem, None)?);
            }
            let cat = self.graph.concat(&outs, 1)?;
            let x = self.conv_act("amff.solo.fuse.0", cat, 1)?;
            feats.f_main_fused = Some(self.conv_act("amff.solo.fuse.1", x, 1)?);
        }
        Ok(feats)
    }
}
