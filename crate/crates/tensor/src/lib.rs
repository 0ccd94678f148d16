//! Minimal reverse-mode automatic differentiation over dense `f32` tensors,
//! limited to the operators a convolutional multi-modal super-resolution
//! network needs: plain and deformable convolution, affine grids and
//! bilinear grid sampling, bilinear resizing, pixel shuffle, and a handful
//! of elementwise and reduction operations.
//!
//! ```
//! use deeplight_tensor::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.variable(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq);
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
//! ```

mod error;
mod gemm;
pub mod gradcheck;
mod graph;
pub mod ops;
mod optim;
mod params;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, Param, ParamStore};
pub use tensor::Tensor;

/// Logistic function, numerically stable for large `|v|`.
pub fn sigmoid(v: f32) -> f32 {
    graph::sigmoid(v)
}
