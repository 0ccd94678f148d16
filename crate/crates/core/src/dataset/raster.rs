//! Band-major rasters and the `DLT1` file format.
//!
//! ```text
//! "DLT1" version:u32 bands:u32 height:u32 width:u32 dtype:u32 payload
//! ```
//!
//! Integers are little-endian. `dtype` 0 stores f32 samples, 1 stores u8;
//! the payload is band-major, then row-major.

use std::path::Path;

use deeplight_tensor::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DLT1";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    U8 = 1,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(bands: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != bands * height * width {
            return Err(Error::Data(format!(
                "{} samples for a {bands}x{height}x{width} raster",
                data.len()
            )));
        }
        Ok(Self {
            bands,
            height,
            width,
            data,
        })
    }

    pub fn zeros(bands: usize, height: usize, width: usize) -> Self {
        Self {
            bands,
            height,
            width,
            data: vec![0.0; bands * height * width],
        }
    }

    pub fn from_fn(bands: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(bands * height * width);
        for b in 0..bands {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(b, y, x));
                }
            }
        }
        Self {
            bands,
            height,
            width,
            data,
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn band(&self, b: usize) -> &[f32] {
        &self.data[b * self.plane_len()..(b + 1) * self.plane_len()]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, b: usize, y: usize, x: usize) -> f32 {
        self.data[(b * self.height + y) * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// `1×bands×h×w` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[1, self.bands, self.height, self.width], self.data.clone()).expect("raster shape")
    }

    /// Accepts `bands×h×w` or `1×bands×h×w`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [b, h, w] | [1, b, h, w] => Self::new(b, h, w, t.data().to_vec()),
            _ => Err(Error::Data(format!("cannot view a {:?} tensor as a raster", t.shape()))),
        }
    }

    pub fn to_bytes(&self, dtype: DType) -> Result<Vec<u8>> {
        let width = if dtype == DType::U8 { 1 } else { 4 };
        let mut out = Vec::with_capacity(HEADER_LEN + width * self.data.len());
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.bands as u32, self.height as u32, self.width as u32, dtype as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        match dtype {
            DType::F32 => self.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            DType::U8 => {
                for &v in &self.data {
                    if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                        return Err(Error::Data(format!("{v} is not representable as u8")));
                    }
                    out.push(v as u8);
                }
            }
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path, dtype: DType) -> Result<()> {
        std::fs::write(path, self.to_bytes(dtype)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |offset: usize, msg: String| Error::Format {
            path: path.to_path_buf(),
            offset: offset as u64,
            msg,
        };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(fail(0, "bad magic, not a DLT1 raster".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(fail(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != VERSION {
            return Err(fail(4, format!("unsupported version {}", word(0))));
        }
        let (bands, height, width) = (word(1) as usize, word(2) as usize, word(3) as usize);
        let dtype = match word(4) {
            0 => DType::F32,
            1 => DType::U8,
            d => return Err(fail(20, format!("unknown dtype {d}"))),
        };
        let n = bands
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| fail(8, "raster dimensions overflow".into()))?;
        let size = if dtype == DType::U8 { 1 } else { 4 };
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < n * size {
            return Err(fail(
                bytes.len(),
                format!("truncated payload: {} of {} bytes", payload.len(), n * size),
            ));
        }
        if payload.len() > n * size {
            return Err(fail(HEADER_LEN + n * size, "trailing bytes after payload".into()));
        }
        let data = match dtype {
            DType::F32 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            DType::U8 => payload.iter().map(|&b| b as f32).collect(),
        };
        Self::new(bands, height, width, data)
    }
}
