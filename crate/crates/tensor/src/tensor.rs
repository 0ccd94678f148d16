use std::fmt;
use std::sync::Arc;

use crate::error::{dim_err, Result, TensorError};

/// Dense row-major `f32` array.
///
/// Storage is reference counted so cloning a tensor (for example when a
/// parameter is bound into a graph as a leaf) does not copy the payload.
/// Mutation goes through [`Tensor::data_mut`], which copies on write.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "tensor",
                expected: format!("{numel} elements for shape {shape:?}"),
                got: format!("{} elements", data.len()),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; numel]),
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self::full(&[], value)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f32) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new((0..numel).map(&mut f).collect()),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<f32> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Option<f32> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                expected: format!("{} elements", self.numel()),
                got: format!("{shape:?}"),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    /// Unpacks an `N×C×H×W` shape.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(dim_err(op, format!("expected NCHW tensor, got shape {:?}", self.shape))),
        }
    }

    /// Slice of one image plane `[n, c]` of an NCHW tensor.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let (cs, hw) = (self.shape[1], self.shape[2] * self.shape[3]);
        let start = (n * cs + c) * hw;
        &self.data[start..start + hw]
    }

    /// Copies sample `n` of a batched tensor out as a batch of one.
    pub fn sample(&self, n: usize) -> Result<Self> {
        let batch = *self
            .shape
            .first()
            .ok_or_else(|| dim_err("sample", "rank-0 tensor has no batch axis"))?;
        if n >= batch {
            return Err(dim_err("sample", format!("index {n} out of batch {batch}")));
        }
        let per = self.numel() / batch;
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Self::new(&shape, self.data[n * per..(n + 1) * per].to_vec())
    }

    /// Stacks equally shaped tensors along a new leading batch axis, or
    /// along the existing one when every input already has batch 1.
    pub fn stack_batch(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| dim_err("stack_batch", "no tensors to stack"))?;
        let inner: &[usize] = if first.shape.first() == Some(&1) {
            &first.shape[1..]
        } else {
            &first.shape
        };
        let mut data = Vec::with_capacity(first.numel() * items.len());
        for t in items {
            if t.numel() != first.numel() {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_batch",
                    expected: format!("{:?}", first.shape),
                    got: format!("{:?}", t.shape),
                });
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(inner);
        Self::new(&shape, data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&v| f(v)).collect()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f32> = self.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &preview)
            .finish()
    }
}
