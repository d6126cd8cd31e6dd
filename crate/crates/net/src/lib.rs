//! Differentiable tensor operators and the neural networks built on them:
//! a reverse-mode tape over `[n, c, w, h, d]` tensors, a convolutional
//! adversarial autoencoder for log-conductivity fields, and a dense
//! encoder-decoder surrogate of the flow-and-transport forward model.

mod blocks;
pub mod caae;
pub mod checkpoint;
pub mod container;
pub mod densed;
mod error;
pub mod gemm;
mod layer;
mod ops;
mod opt;
mod tape;

pub use blocks::{Decoding, DenseBlock, Encoding, Rrdb, UpConv};
pub use error::{NetError, Result};
pub use layer::{draw_weights, BatchNorm3, BindCtx, Conv3, Fc, Init, Mode, Module, Param, TConv3};
pub use opt::{apply_grads, Optimizer};
pub use tape::{conv3_output_dims, tconv3_output_dims, Grads, Tape, Var, T5};
