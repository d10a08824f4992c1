//! Forward and backward kernels on plain tensors. The graph in [`crate::Graph`]
//! records which kernel produced each node and replays the matching backward.

mod conv;
mod norm;
mod sample;

pub use conv::{conv2d_backward, conv2d_forward, ConvGeom, ConvGrads};
pub use norm::{
    avg_pool2_backward, avg_pool2_forward, channel_norm_backward, channel_norm_forward,
    CHANNEL_NORM_EPS,
};
pub use sample::{
    border_cell, grid_warp_backward, grid_warp_branches, grid_warp_forward, resize_backward,
    resize_forward, Cell,
};
