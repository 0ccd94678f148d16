//! Dataset layout on disk:
//!
//! ```text
//! <root>/manifest.txt
//! <root>/scene_0000/{lr_ntl,hr_ntl,dmo,dem,isp}.dlt
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::raster::{DType, Raster};
use super::{generate_scene, ModalityBundle, SceneSpec};
use crate::error::{Error, Result};
use crate::kv::{join, KeyValues};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (expected train, val or test)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub seed: u64,
    /// Generator settings shared by all scenes; the per-scene seed
    /// replaces `spec.seed`.
    pub spec: SceneSpec,
    pub fractions: (f64, f64, f64),
    pub scene_seeds: Vec<u64>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn splitmix(seed: u64, i: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic disjoint split of `n_scenes` default-spec scenes; see
/// [`make_manifest_for`].
pub fn make_manifest(n_scenes: usize, fractions: (f64, f64, f64), seed: u64) -> Result<DatasetManifest> {
    make_manifest_for(&SceneSpec::default(), n_scenes, fractions, seed)
}

/// Validation and test take `floor(n * f)` scenes each; training takes the
/// remainder. The split is stratified: scenes are ranked by their light
/// budget and cut into equal strata, and each held-out scene is drawn from
/// its own stratum, so every split sees the full brightness range.
pub fn make_manifest_for(
    spec: &SceneSpec,
    n_scenes: usize,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetManifest> {
    if n_scenes == 0 {
        return Err(Error::config("scenes", "need ≥ 1 scene"));
    }
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(0.0..=1.0).contains(f)) || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::config("fractions", format!("{ft},{fv},{fs} must be in [0, 1] and sum to 1")));
    }
    let scene_seeds: Vec<u64> = (0..n_scenes as u64).map(|i| splitmix(seed, i)).collect();
    let n_val = (n_scenes as f64 * fv).floor() as usize;
    let n_test = (n_scenes as f64 * fs).floor() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget: Vec<f64> = scene_seeds
        .iter()
        .map(|&s| super::light_budget(&SceneSpec { seed: s, ..spec.clone() }))
        .collect();
    let mut order: Vec<usize> = (0..n_scenes).collect();
    order.sort_by(|&a, &b| budget[a].total_cmp(&budget[b]).then(a.cmp(&b)));

    let strata = n_val.max(n_test).max(1);
    let pick = |k: usize, rng: &mut ChaCha8Rng| {
        let mut s: Vec<usize> = (0..strata).collect();
        s.shuffle(rng);
        s.truncate(k);
        s
    };
    let (val_strata, test_strata) = (pick(n_val, &mut rng), pick(n_test, &mut rng));
    let (mut val, mut test, mut rest) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..strata {
        let mut members = order[s * n_scenes / strata..(s + 1) * n_scenes / strata].to_vec();
        members.shuffle(&mut rng);
        if val_strata.contains(&s) {
            val.extend(members.pop());
        }
        if test_strata.contains(&s) {
            test.extend(members.pop());
        }
        rest.extend(members);
    }
    // strata of one scene cannot serve both held-out splits
    rest.shuffle(&mut rng);
    while val.len() < n_val {
        val.push(rest.pop().expect("enough scenes"));
    }
    while test.len() < n_test {
        test.push(rest.pop().expect("enough scenes"));
    }
    let sorted = |mut v: Vec<usize>| {
        v.sort_unstable();
        v
    };
    Ok(DatasetManifest {
        seed,
        spec: spec.clone(),
        fractions,
        scene_seeds,
        train: sorted(rest),
        val: sorted(val),
        test: sorted(test),
    })
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.scene_seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scene_seeds.is_empty()
    }

    pub fn ids(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn scene_spec(&self, id: usize) -> SceneSpec {
        SceneSpec {
            seed: self.scene_seeds[id],
            ..self.spec.clone()
        }
    }

    /// FNV-1a over the generator settings, hex encoded.
    pub fn spec_hash(&self) -> String {
        let mut kv = KeyValues::new();
        self.spec.write_kv(&mut kv, "");
        kv.set("seed", self.seed);
        kv.set("scenes", self.len());
        let h = crate::model::fnv1a(kv.render().as_bytes());
        format!("{h:016x}")
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("seed", self.seed);
        kv.set("scenes", self.len());
        kv.set("fractions", join(&[self.fractions.0, self.fractions.1, self.fractions.2]));
        self.spec.write_kv(&mut kv, "spec.");
        kv.set("spec_hash", self.spec_hash());
        kv.set("scene_seeds", join(&self.scene_seeds));
        kv.set("train", join(&self.train));
        kv.set("val", join(&self.val));
        kv.set("test", join(&self.test));
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut spec = SceneSpec::default();
        spec.update_from_kv(kv, "spec.")?;
        spec.validate()?;
        let f: Vec<f64> = kv.list("fractions")?.ok_or_else(|| Error::config("fractions", "missing"))?;
        let [ft, fv, fs] = f[..] else {
            return Err(Error::config("fractions", "expected three values"));
        };
        let need = |k: &str| -> Result<Vec<usize>> { kv.list(k)?.ok_or_else(|| Error::config(k, "missing")) };
        let m = Self {
            seed: kv.require("seed")?,
            spec,
            fractions: (ft, fv, fs),
            scene_seeds: kv.list("scene_seeds")?.ok_or_else(|| Error::config("scene_seeds", "missing"))?,
            train: need("train")?,
            val: need("val")?,
            test: need("test")?,
        };
        if kv.require::<usize>("scenes")? != m.len() {
            return Err(Error::config("scenes", "does not match the number of scene seeds"));
        }
        let mut all: Vec<usize> = m.train.iter().chain(&m.val).chain(&m.test).copied().collect();
        all.sort_unstable();
        if all != (0..m.len()).collect::<Vec<_>>() {
            return Err(Error::config("train", "splits must partition the scene ids"));
        }
        let stored: String = kv.require("spec_hash")?;
        if stored != m.spec_hash() {
            return Err(Error::config("spec_hash", format!("{stored} does not match the settings ({})", m.spec_hash())));
        }
        Ok(m)
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join("manifest.txt");
        std::fs::write(&path, self.to_kv().render()).map_err(|e| Error::io(&path, e))
    }

    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join("manifest.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_kv(&KeyValues::parse(&text)?)
    }

    /// Reads the bundles of one split, in id order.
    pub fn load_split(&self, root: &Path, split: Split) -> Result<Vec<(usize, ModalityBundle)>> {
        self.ids(split)
            .par_iter()
            .map(|&id| read_bundle(&scene_dir(root, id)).map(|b| (id, b)))
            .collect()
    }
}

pub fn scene_dir(root: &Path, id: usize) -> PathBuf {
    root.join(format!("scene_{id:04}"))
}

const FILES: [(&str, DType); 5] = [
    ("lr_ntl", DType::F32),
    ("hr_ntl", DType::F32),
    ("dmo", DType::F32),
    ("dem", DType::F32),
    ("isp", DType::U8),
];

pub fn write_bundle(bundle: &ModalityBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rasters = [&bundle.lr_ntl, &bundle.hr_ntl, &bundle.dmo, &bundle.dem, &bundle.isp];
    for ((name, dtype), r) in FILES.iter().zip(rasters) {
        r.write(&dir.join(format!("{name}.dlt")), *dtype)?;
    }
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<ModalityBundle> {
    let read = |name: &str| Raster::read(&dir.join(format!("{name}.dlt")));
    let b = ModalityBundle {
        lr_ntl: read("lr_ntl")?,
        hr_ntl: read("hr_ntl")?,
        dmo: read("dmo")?,
        dem: read("dem")?,
        isp: read("isp")?,
    };
    let hr = (b.hr_ntl.height, b.hr_ntl.width);
    let bad = [&b.dmo, &b.dem, &b.isp].iter().any(|r| (r.height, r.width) != hr)
        || [&b.lr_ntl, &b.hr_ntl, &b.dem, &b.isp].iter().any(|r| r.bands != 1)
        || b.lr_ntl.height == 0
        || hr.0 % b.lr_ntl.height != 0
        || hr.0 / b.lr_ntl.height * b.lr_ntl.width != hr.1;
    if bad {
        return Err(Error::Data(format!("{}: inconsistent raster sizes", dir.display())));
    }
    if b.isp.data.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data(format!("{}: ISP is not binary", dir.display())));
    }
    Ok(b)
}

/// Summary of a generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub scenes: usize,
    /// Fraction of HR NTL pixels that are exactly zero, over all scenes.
    pub dark_fraction: f64,
    /// Unlit-to-lit ISP pixel ratio over all scenes.
    pub isp_zero_ratio: f64,
}

/// Generates every scene of `manifest` under `root` and writes the
/// manifest last. Scenes are independent and built in parallel.
pub fn generate_dataset(root: &Path, manifest: &DatasetManifest) -> Result<DatasetStats> {
    manifest.spec.validate()?;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let counts = (0..manifest.len())
        .into_par_iter()
        .map(|id| {
            let b = generate_scene(&manifest.scene_spec(id));
            write_bundle(&b, &scene_dir(root, id))?;
            let dark = b.hr_ntl.data.iter().filter(|&&v| v == 0.0).count();
            let lit = b.isp.data.iter().filter(|&&v| v == 1.0).count();
            Ok((dark, lit, b.hr_ntl.data.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    manifest.write(root)?;
    let (dark, lit, total) = counts.iter().fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    Ok(DatasetStats {
        scenes: manifest.len(),
        dark_fraction: dark as f64 / total as f64,
        isp_zero_ratio: (total - lit) as f64 / lit as f64,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (a, b) = (sorted(a), sorted(b));
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}
