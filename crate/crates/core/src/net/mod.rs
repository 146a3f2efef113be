//! A small U-Net style despeckling network with hand-written forward and
//! backward passes, an Adam optimizer and a binary checkpoint format.

mod checkpoint;
mod model;
mod ops;
mod tensor;

pub use checkpoint::Checkpoint;
pub use model::{
    add_gradients, scale_gradients, AdamConfig, ConvLayer, ForwardCache, Gradients, NetworkParams,
    NetworkSpec, LEAKY_SLOPE,
};
pub use ops::{
    concat_channels, conv2d_backward, conv2d_forward, leaky_relu_inplace, maxpool2,
    maxpool2_backward, split_channels, upsample2_backward, upsample2_nearest, ConvGrads, Kernel,
    PoolMask,
};
pub use tensor::Tensor;
