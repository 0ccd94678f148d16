//! `DLCK` checkpoint files.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "DLCK" version
//! header_len header_bytes        # key=value lines: model.*, adam.*, step, extras
//! { name_len name rank dims[rank] f32[prod(dims)] }*   # until end of file
//! ```
//!
//! Parameter records come first in model order, followed by the Adam
//! moment buffers as `adam.m.<name>` and `adam.v.<name>` when present.

use std::path::Path;

use deeplight_tensor::{Adam, AdamConfig, ParamStore, Tensor};

use super::{plan, ModelState};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::kv::KeyValues;

pub const MAGIC: &[u8; 4] = b"DLCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: ModelState,
    pub optimizer: Option<Adam>,
    /// Training steps completed when the checkpoint was written.
    pub step: u64,
    /// Free-form header entries (run name, metrics, ...).
    pub meta: KeyValues,
}

impl Checkpoint {
    pub fn new(state: ModelState) -> Self {
        Self {
            state,
            optimizer: None,
            step: 0,
            meta: KeyValues::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = self.meta.clone();
        self.state.config.write_kv(&mut header, "model.");
        header.set("step", self.step);
        if let Some(opt) = &self.optimizer {
            let c = opt.config;
            header.set("adam.lr", c.lr);
            header.set("adam.beta1", c.beta1);
            header.set("adam.beta2", c.beta2);
            header.set("adam.eps", c.eps);
            header.set("adam.step", opt.steps_taken());
        }
        let text = header.render();

        let mut out = Vec::with_capacity(16 + text.len() + 4 * self.state.num_parameters());
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, text.len() as u32);
        out.extend_from_slice(text.as_bytes());
        for (name, p) in self.state.params.iter() {
            put_record(&mut out, name, p.value.shape(), p.value.data());
        }
        if let Some(opt) = &self.optimizer {
            let moments = [("m", opt.first_moments()), ("v", opt.second_moments())];
            for (tag, bufs) in moments {
                for ((name, p), buf) in self.state.params.iter().zip(bufs) {
                    put_record(&mut out, &format!("adam.{tag}.{name}"), p.value.shape(), buf);
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // write-then-rename so an interrupted save never clobbers the old file
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != MAGIC {
            return Err(r.error(0, "bad magic, not a DLCK checkpoint"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.error(4, format!("unsupported version {version}")));
        }
        let len = r.u32()? as usize;
        let at = r.pos;
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| r.error(at as u64, "header is not UTF-8"))?;
        let mut meta = KeyValues::parse(text)?;

        let mut config = ModelConfig::default();
        config.update_from_kv(&meta, "model.")?;
        config.validate()?;
        let step = meta.get::<u64>("step")?.unwrap_or(0);
        let adam = match meta.get::<u64>("adam.step")? {
            Some(s) => Some((
                AdamConfig {
                    lr: meta.require("adam.lr")?,
                    beta1: meta.require("adam.beta1")?,
                    beta2: meta.require("adam.beta2")?,
                    eps: meta.require("adam.eps")?,
                },
                s,
            )),
            None => None,
        };
        meta.retain(|k| !(k.starts_with("model.") || k.starts_with("adam.") || k == "step"));

        let specs = plan(&config);
        let mut params = ParamStore::new();
        for spec in &specs {
            let (name, t, at) = r.record()?;
            if name != spec.name || t.shape() != spec.shape.as_slice() {
                return Err(r.error(
                    at,
                    format!("expected `{}` {:?}, found `{name}` {:?}", spec.name, spec.shape, t.shape()),
                ));
            }
            params.insert(name, t)?;
        }
        let optimizer = match adam {
            Some((cfg, s)) => {
                let mut bufs = [Vec::new(), Vec::new()];
                for (tag, buf) in ["m", "v"].iter().zip(&mut bufs) {
                    for spec in &specs {
                        let (name, t, at) = r.record()?;
                        let want = format!("adam.{tag}.{}", spec.name);
                        if name != want || t.shape() != spec.shape.as_slice() {
                            return Err(r.error(at, format!("expected `{want}` {:?}, found `{name}`", spec.shape)));
                        }
                        buf.push(t.into_vec());
                    }
                }
                let [m, v] = bufs;
                Some(Adam::from_parts(cfg, s, m, v))
            }
            None => None,
        };
        if r.pos != bytes.len() {
            return Err(r.error(r.pos as u64, "trailing bytes after last record"));
        }
        Ok(Self {
            state: ModelState { config, params },
            optimizer,
            step,
            meta,
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_u32(out, d as u32);
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn error(&self, offset: u64, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.error(self.pos as u64, format!("truncated: need {n} bytes")));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// One named tensor, plus the offset its record starts at.
    fn record(&mut self) -> Result<(String, Tensor, u64)> {
        let at = self.pos as u64;
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec()).map_err(|_| self.error(at, "record name is not UTF-8"))?;
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(self.error(at, format!("implausible rank {rank} for `{name}`")));
        }
        let dims = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel: usize = dims.iter().product();
        let raw = self.take(numel.checked_mul(4).ok_or_else(|| self.error(at, "size overflow"))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((name, Tensor::new(&dims, data)?, at))
    }
}
