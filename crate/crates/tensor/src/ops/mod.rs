//! Functional kernels behind the graph operations. These run without
//! recording anything and are usable on plain tensors.

pub(crate) mod bilinear;
pub mod conv;
pub mod spatial;

pub use conv::{conv2d, deformable_conv2d};
pub use spatial::{affine_grid, grid_sample, pixel_shuffle, pixel_unshuffle, resize_bilinear};
