use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KeyValues;

/// The ablation setups of the study, plus the full model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Ablation {
    #[default]
    None,
    NoLrNtl,
    NoDmo,
    NoDem,
    NoIsp,
    NoCaa,
    NoAmff,
    NoAer,
}

impl Ablation {
    /// Every variant in table order, full model last.
    pub const ALL: [Ablation; 8] = [
        Ablation::NoLrNtl,
        Ablation::NoDmo,
        Ablation::NoDem,
        Ablation::NoIsp,
        Ablation::NoCaa,
        Ablation::NoAmff,
        Ablation::NoAer,
        Ablation::None,
    ];

    pub fn flag(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoLrNtl => "no-lr-ntl",
            Ablation::NoDmo => "no-dmo",
            Ablation::NoDem => "no-dem",
            Ablation::NoIsp => "no-isp",
            Ablation::NoCaa => "no-caa",
            Ablation::NoAmff => "no-amff",
            Ablation::NoAer => "no-aer",
        }
    }

    /// Row label used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            Ablation::None => "Ours full",
            Ablation::NoLrNtl => "w/o LR NTL",
            Ablation::NoDmo => "w/o DMO",
            Ablation::NoDem => "w/o DEM",
            Ablation::NoIsp => "w/o ISP",
            Ablation::NoCaa => "w/o CAA",
            Ablation::NoAmff => "w/o AMFF",
            Ablation::NoAer => "w/o AER",
        }
    }

    pub fn uses_lr_ntl(self) -> bool {
        self != Ablation::NoLrNtl
    }

    pub fn uses_dmo(self) -> bool {
        self != Ablation::NoDmo
    }

    pub fn uses_dem(self) -> bool {
        self != Ablation::NoDem
    }

    /// Whether the ISP head and its loss term exist.
    pub fn uses_isp(self) -> bool {
        !matches!(self, Ablation::NoIsp | Ablation::NoAer)
    }

    pub fn uses_alignment(self) -> bool {
        self != Ablation::NoCaa
    }

    pub fn uses_cross_fusion(self) -> bool {
        self != Ablation::NoAmff
    }

    pub fn uses_multiscale(self) -> bool {
        self != Ablation::NoAer
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.flag() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Ablation::ALL.iter().map(|a| a.flag()).collect();
                format!("unknown ablation `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Architecture hyper-parameters. Together with the seed they fully
/// determine the parameter set built by [`crate::model::build`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Super-resolution ratio `r`.
    pub scale_r: usize,
    /// Spatial size `(h, w)` of the low-resolution input.
    pub lr_size: (usize, usize),
    pub base_channels: usize,
    /// Residual blocks per fusion-module branch.
    pub num_res_blocks: usize,
    /// Number of ×2 refinement stages; `2^m = r`.
    pub num_scales_m: usize,
    pub dmo_bands: usize,
    /// Kernel size of the deformable alignment convolution.
    pub offset_kernel: usize,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            scale_r: 8,
            lr_size: (32, 32),
            base_channels: 32,
            num_res_blocks: 3,
            num_scales_m: 3,
            dmo_bands: 7,
            offset_kernel: 3,
            ablation: Ablation::None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_scales_m == 0 || self.num_scales_m > 6 || 1usize << self.num_scales_m != self.scale_r {
            return Err(Error::config(
                "num_scales_m",
                format!("2^{} must equal scale_r = {}", self.num_scales_m, self.scale_r),
            ));
        }
        if self.dmo_bands == 0 {
            return Err(Error::config("dmo_bands", "must be at least 1"));
        }
        if self.base_channels < 4 {
            return Err(Error::config("base_channels", "must be at least 4"));
        }
        if self.offset_kernel == 0 || self.offset_kernel % 2 == 0 {
            return Err(Error::config("offset_kernel", "must be odd"));
        }
        let (h, w) = self.lr_size;
        if h < 4 || w < 4 {
            return Err(Error::config("lr_size", "must be at least 4x4"));
        }
        Ok(())
    }

    pub fn hr_size(&self) -> (usize, usize) {
        (self.lr_size.0 * self.scale_r, self.lr_size.1 * self.scale_r)
    }

    pub fn write_kv(&self, kv: &mut KeyValues, prefix: &str) {
        kv.set(format!("{prefix}scale_r"), self.scale_r);
        kv.set(format!("{prefix}lr_h"), self.lr_size.0);
        kv.set(format!("{prefix}lr_w"), self.lr_size.1);
        kv.set(format!("{prefix}base_channels"), self.base_channels);
        kv.set(format!("{prefix}num_res_blocks"), self.num_res_blocks);
        kv.set(format!("{prefix}num_scales_m"), self.num_scales_m);
        kv.set(format!("{prefix}dmo_bands"), self.dmo_bands);
        kv.set(format!("{prefix}offset_kernel"), self.offset_kernel);
        kv.set(format!("{prefix}ablation"), self.ablation);
    }

    /// Applies any `prefix*` keys present in `kv` on top of `self`.
    pub fn update_from_kv(&mut self, kv: &KeyValues, prefix: &str) -> Result<()> {
        kv.update(&format!("{prefix}scale_r"), &mut self.scale_r)?;
        kv.update(&format!("{prefix}lr_h"), &mut self.lr_size.0)?;
        kv.update(&format!("{prefix}lr_w"), &mut self.lr_size.1)?;
        kv.update(&format!("{prefix}base_channels"), &mut self.base_channels)?;
        kv.update(&format!("{prefix}num_res_blocks"), &mut self.num_res_blocks)?;
        kv.update(&format!("{prefix}num_scales_m"), &mut self.num_scales_m)?;
        kv.update(&format!("{prefix}dmo_bands"), &mut self.dmo_bands)?;
        kv.update(&format!("{prefix}offset_kernel"), &mut self.offset_kernel)?;
        kv.update(&format!("{prefix}ablation"), &mut self.ablation)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn scale_mismatch_names_field() {
        let cfg = ModelConfig {
            num_scales_m: 2,
            ..ModelConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "num_scales_m"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ablation_flags_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(a.flag().parse::<Ablation>().unwrap(), a);
        }
        assert!("no-everything".parse::<Ablation>().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let cfg = ModelConfig {
            base_channels: 12,
            ablation: Ablation::NoAmff,
            ..ModelConfig::default()
        };
        let mut kv = KeyValues::new();
        cfg.write_kv(&mut kv, "model.");
        let mut back = ModelConfig::default();
        back.update_from_kv(&kv, "model.").unwrap();
        assert_eq!(back, cfg);
    }
}
