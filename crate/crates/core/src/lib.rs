//! Tensor contraction layers for convolutional networks.
//!
//! A tensor contraction layer (TCL) multiplies an activation tensor by one
//! factor matrix per mode instead of flattening it into a fully-connected
//! layer. This crate provides the tensor algebra, layers with hand-written
//! backward passes, a small training loop and closed-form parameter and FLOP
//! counts.
//!
//! ```
//! use rand::SeedableRng;
//! use rand_chacha::ChaCha8Rng;
//! use tcl::layers::{FactorInit, Layer, Phase, TclLayer};
//! use tcl::DenseTensor;
//!
//! let mut rng = ChaCha8Rng::seed_from_u64(0);
//! let mut tcl = TclLayer::new(&[256, 3, 3], &[128, 3, 3], FactorInit::Gaussian, &mut rng)?;
//! let x = DenseTensor::random_normal(&[4, 256, 3, 3], 1.0, &mut rng);
//! assert_eq!(tcl.forward(&x, Phase::Train)?.shape(), &[4, 128, 3, 3]);
//! assert_eq!(tcl.param_count(), 256 * 128 + 3 * 3 + 3 * 3);
//! # Ok::<(), tcl::Error>(())
//! ```
//!
//! Modules:
//!
//! * [`tensor`]: dense tensors, unfoldings, n-mode and Kronecker products
//! * [`layers`]: TCL, fully-connected, convolution, pooling, batch norm, loss
//! * [`network`]: layer stacks, presets and momentum SGD
//! * [`analysis`]: parameter, FLOP and space-savings accounting
//! * [`data`]: IDX files and synthetic datasets
//! * [`run`]: config files, metrics files and reproducible runs

pub mod analysis;
pub mod data;
pub mod error;
pub mod layers;
pub mod network;
pub mod run;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::DenseTensor;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/tcl.md")]
    mod tcl {}
    #[doc = include_str!("../../../book/src/costs.md")]
    mod costs {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
