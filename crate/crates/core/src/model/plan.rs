//! Parameter inventory for a model configuration.

use crate::config::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// He-normal scaled for leaky ReLU, times `gain`.
    He { gain: f32 },
    Zeros,
    /// Bias producing the identity affine transform.
    IdentityAffine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Default)]
struct Planner {
    specs: Vec<ParamSpec>,
}

impl Planner {
    fn conv_with(&mut self, name: &str, out: usize, inp: usize, k: usize, weight: Init, bias: Init) {
        self.specs.push(ParamSpec {
            name: format!("{name}.weight"),
            shape: vec![out, inp, k, k],
            init: weight,
        });
        self.specs.push(ParamSpec {
            name: format!("{name}.bias"),
            shape: vec![out],
            init: bias,
        });
    }

    fn conv(&mut self, name: &str, out: usize, inp: usize, k: usize) {
        self.conv_with(name, out, inp, k, Init::He { gain: 1.0 }, Init::Zeros);
    }

    /// Stem, residual blocks and deep-fusion conv of one fusion branch.
    fn branch(&mut self, prefix: &str, c: usize, blocks: usize, cross: bool) {
        let block_in = if cross { 2 * c } else { c };
        for i in 0..blocks {
            self.conv(&format!("{prefix}.{i}.conv1"), c, block_in, 3);
            self.conv_with(
                &format!("{prefix}.{i}.conv2"),
                c,
                c,
                3,
                Init::He { gain: RESIDUAL_GAIN },
                Init::Zeros,
            );
        }
        self.conv(&format!("{prefix}.deep"), c, 2 * c, 3);
    }

    fn cmfm(&mut self, prefix: &str, c: usize, blocks: usize) {
        self.conv(&format!("{prefix}.in_a"), c, c, 3);
        self.conv(&format!("{prefix}.in_b"), c, c, 3);
        self.conv(&format!("{prefix}.proj_a"), c, c, 1);
        self.conv(&format!("{prefix}.proj_b"), c, c, 1);
        self.branch(&format!("{prefix}.a"), c, blocks, true);
        self.branch(&format!("{prefix}.b"), c, blocks, true);
        self.conv(&format!("{prefix}.fuse.0"), c, 2 * c, 3);
        self.conv(&format!("{prefix}.fuse.1"), c, c, 3);
    }
}

/// Initial scale of the second convolution in each residual block.
pub const RESIDUAL_GAIN: f32 = 0.1;

/// Every learnable tensor of the network described by `cfg`, in a fixed
/// order. The set depends on the ablation: removed components own no
/// parameters.
pub fn plan(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let c = cfg.base_channels;
    let a = cfg.ablation;
    let mut p = Planner::default();

    // calibration-aware alignment
    for (name, bands, used) in [("dmo", cfg.dmo_bands, a.uses_dmo()), ("dem", 1, a.uses_dem())] {
        if !used {
            continue;
        }
        for i in 0..cfg.num_scales_m {
            p.conv(&format!("caa.down_{name}.{i}"), c, if i == 0 { bands } else { c }, 3);
        }
        p.conv(&format!("caa.calib_{name}.0"), c, c, 3);
        p.conv(&format!("caa.calib_{name}.1"), c, c, 3);
    }
    if a.uses_lr_ntl() {
        if a.uses_alignment() {
            let k = cfg.offset_kernel;
            p.conv("caa.loc.0", c, 1, 3);
            p.conv("caa.loc.1", c, c, 3);
            p.conv_with("caa.loc.fc", 6, c, 1, Init::Zeros, Init::IdentityAffine);
            p.conv_with("caa.offset", 2 * k * k, 1, 3, Init::Zeros, Init::Zeros);
            p.conv("caa.deform", c, 1, k);
            p.conv("caa.recon", c, c, 3);
        } else {
            p.conv("caa.plain.0", c, 1, 3);
            p.conv("caa.plain.1", c, c, 3);
        }
    }

    // multi-modality fusion
    if a.uses_cross_fusion() {
        p.cmfm("amff.aux", c, cfg.num_res_blocks);
        p.cmfm("amff.main", c, cfg.num_res_blocks);
    } else {
        for m in ["dmo", "dem", "ntl"] {
            p.conv(&format!("amff.solo.{m}.in"), c, c, 3);
            p.branch(&format!("amff.solo.{m}"), c, cfg.num_res_blocks, false);
        }
        p.conv("amff.solo.fuse.0", c, 3 * c, 3);
        p.conv("amff.solo.fuse.1", c, c, 3);
    }

    // refinement
    for j in 0..cfg.num_scales_m {
        p.conv(&format!("aer.up.{j}"), 4 * c, c, 1);
        if a.uses_multiscale() {
            p.conv(&format!("aer.head.{j}"), 1, c, 1);
        }
    }
    if !a.uses_multiscale() {
        p.conv("aer.head", 1, c, 1);
    }
    if a.uses_isp() {
        p.conv("aer.isp", 1, 1, 3);
    }
    p.specs
}
