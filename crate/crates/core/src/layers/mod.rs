//! Trainable layers with hand-derived backward passes.
//!
//! Every activation carries the batch as its first mode. Backward passes take
//! the layer input together with the upstream gradient and are otherwise
//! pure, so the same layer can be differentiated at any input. Parameter
//! gradients are summed over the batch; scaling by `1/batch` happens once, in
//! the loss.

mod activation;
mod batchnorm;
mod conv;
pub mod gradcheck;
mod linear;
mod loss;
mod pool;
mod tcl;

pub use activation::{Flatten, Relu};
pub use batchnorm::{BatchNorm, BN_EPSILON, BN_MOMENTUM};
pub use conv::Conv2d;
pub use gradcheck::{grad_check, grad_check_report, gradient_suite, GradCheckReport, SuiteEntry};
pub use linear::{linear_backward, linear_forward, Linear};
pub use loss::softmax_cross_entropy;
pub use pool::MaxPool2d;
pub use tcl::{FactorInit, TclLayer};

use crate::error::Result;
use crate::tensor::DenseTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Gradient of a scalar loss with respect to a layer's input and to each of
/// its parameters, in the order returned by [`Layer::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub input: DenseTensor,
    pub params: Vec<DenseTensor>,
}

impl LayerGrad {
    pub fn all_finite(&self) -> bool {
        self.input.all_finite() && self.params.iter().all(DenseTensor::all_finite)
    }
}

pub trait Layer: Send {
    fn kind(&self) -> &'static str;

    /// Per-sample output shape (batch mode excluded).
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    fn forward(&mut self, x: &DenseTensor, phase: Phase) -> Result<DenseTensor>;

    /// Differentiates the training-phase forward pass at `x`.
    fn backward(&self, x: &DenseTensor, upstream: &DenseTensor) -> Result<LayerGrad>;

    fn params(&self) -> Vec<&DenseTensor> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut DenseTensor> {
        Vec::new()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

pub(crate) fn batch_shape(batch: usize, sample: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(sample.len() + 1);
    s.push(batch);
    s.extend_from_slice(sample);
    s
}
