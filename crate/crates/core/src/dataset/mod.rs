//! Synthetic multi-modal scenes with a physically motivated degradation
//! model, and their on-disk layout.

pub mod degrade;
pub mod noise;
pub mod raster;
mod scene;
mod store;

pub use degrade::degrade;
pub use raster::{DType, Raster};
pub use scene::{generate_scene, light_budget, DEM_CAP_M};
pub use store::{
    generate_dataset, ks_statistic, make_manifest, make_manifest_for, read_bundle, scene_dir, write_bundle, DatasetManifest, DatasetStats, Split,
};

use crate::error::{Error, Result};
use crate::kv::KeyValues;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub hr_size: usize,
    pub scale_r: usize,
    /// Inclusive range the settlement count is drawn from.
    pub num_settlements: (usize, usize),
    /// 0 gives rolling hills, 1 rugged terrain.
    pub terrain_roughness: f64,
    /// Sensor ceiling in HR units; radiance above it is clipped.
    pub saturation_level: f64,
    /// Bloom spread in HR pixels.
    pub bloom_sigma_px: f64,
    /// Largest LR-vs-HR misalignment in HR pixels.
    pub warp_max_px: f64,
    pub noise_sigma: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            hr_size: 256,
            scale_r: 8,
            num_settlements: (3, 9),
            terrain_roughness: 0.5,
            saturation_level: 0.7,
            bloom_sigma_px: 4.0,
            warp_max_px: 8.0,
            noise_sigma: 0.01,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scale_r == 0 || self.hr_size == 0 || self.hr_size % self.scale_r != 0 {
            return Err(Error::config("hr_size", format!("{} is not a multiple of scale {}", self.hr_size, self.scale_r)));
        }
        if !(self.warp_max_px >= 0.0 && self.warp_max_px < (self.hr_size / self.scale_r) as f64) {
            return Err(Error::config("warp_max_px", "must lie in [0, hr_size / scale_r)"));
        }
        if !(self.saturation_level > 0.0 && self.saturation_level <= 1.0) {
            return Err(Error::config("saturation_level", "must lie in (0, 1]"));
        }
        if self.num_settlements.0 > self.num_settlements.1 {
            return Err(Error::config("num_settlements", "empty range"));
        }
        if !(self.bloom_sigma_px >= 0.0 && self.noise_sigma >= 0.0 && (0.0..=1.0).contains(&self.terrain_roughness)) {
            return Err(Error::config("spec", "bloom, noise and roughness must be non-negative, roughness at most 1"));
        }
        Ok(())
    }

    pub fn lr_size(&self) -> usize {
        self.hr_size / self.scale_r
    }

    pub fn write_kv(&self, kv: &mut KeyValues, prefix: &str) {
        kv.set(format!("{prefix}hr_size"), self.hr_size);
        kv.set(format!("{prefix}scale_r"), self.scale_r);
        kv.set(format!("{prefix}num_settlements"), format!("{},{}", self.num_settlements.0, self.num_settlements.1));
        kv.set(format!("{prefix}terrain_roughness"), self.terrain_roughness);
        kv.set(format!("{prefix}saturation_level"), self.saturation_level);
        kv.set(format!("{prefix}bloom_sigma_px"), self.bloom_sigma_px);
        kv.set(format!("{prefix}warp_max_px"), self.warp_max_px);
        kv.set(format!("{prefix}noise_sigma"), self.noise_sigma);
    }

    pub fn update_from_kv(&mut self, kv: &KeyValues, prefix: &str) -> Result<()> {
        kv.update(&format!("{prefix}hr_size"), &mut self.hr_size)?;
        kv.update(&format!("{prefix}scale_r"), &mut self.scale_r)?;
        let key = format!("{prefix}num_settlements");
        if let Some(v) = kv.list::<usize>(&key)? {
            match v[..] {
                [lo, hi] => self.num_settlements = (lo, hi),
                [k] => self.num_settlements = (k, k),
                _ => return Err(Error::config(key, "expected `lo,hi`")),
            }
        }
        kv.update(&format!("{prefix}terrain_roughness"), &mut self.terrain_roughness)?;
        kv.update(&format!("{prefix}saturation_level"), &mut self.saturation_level)?;
        kv.update(&format!("{prefix}bloom_sigma_px"), &mut self.bloom_sigma_px)?;
        kv.update(&format!("{prefix}warp_max_px"), &mut self.warp_max_px)?;
        kv.update(&format!("{prefix}noise_sigma"), &mut self.noise_sigma)?;
        Ok(())
    }
}

/// One geo-aligned sample. NTL, DEM and DMO values lie in `[0, 1]`; ISP
/// is 0/1. The LR raster is `scale_r` times smaller on each side.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityBundle {
    pub lr_ntl: Raster,
    pub hr_ntl: Raster,
    pub dmo: Raster,
    pub dem: Raster,
    pub isp: Raster,
}

impl ModalityBundle {
    /// Number of unlit ISP pixels per lit one; infinite without any
    /// settlement.
    pub fn isp_zero_ratio(&self) -> f64 {
        let ones = self.isp.data.iter().filter(|&&v| v == 1.0).count();
        let zeros = self.isp.data.len() - ones;
        zeros as f64 / ones as f64
    }

    pub fn dark_fraction(&self) -> f64 {
        self.hr_ntl.data.iter().filter(|&&v| v == 0.0).count() as f64 / self.hr_ntl.data.len() as f64
    }
}
