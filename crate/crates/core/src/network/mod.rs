//! Layer stacks built from a [`NetworkConfig`], and their training loop.

pub mod config;
pub mod presets;
mod train;

pub use train::{
    argmax, evaluate, fit, learning_rate_at, sgd_update, top1_accuracy, train_epoch, EpochRecord, Precision, Sgd,
    TrainConfig, TrainMetrics,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{BatchNorm, Conv2d, Flatten, Layer, LayerGrad, Linear, MaxPool2d, Phase, Relu, TclLayer};
use crate::tensor::DenseTensor;
use config::{LayerSpec, NetworkConfig, ResolvedLayer};

/// A concrete layer of a built network.
#[derive(Clone, Debug)]
pub enum Module {
    Conv(Conv2d),
    MaxPool(MaxPool2d),
    Relu(Relu),
    BatchNorm(BatchNorm),
    Flatten(Flatten),
    Tcl(TclLayer),
    Linear(Linear),
}

impl Module {
    pub fn layer(&self) -> &dyn Layer {
        match self {
            Module::Conv(l) => l,
            Module::MaxPool(l) => l,
            Module::Relu(l) => l,
            Module::BatchNorm(l) => l,
            Module::Flatten(l) => l,
            Module::Tcl(l) => l,
            Module::Linear(l) => l,
        }
    }

    pub fn layer_mut(&mut self) -> &mut dyn Layer {
        match self {
            Module::Conv(l) => l,
            Module::MaxPool(l) => l,
            Module::Relu(l) => l,
            Module::BatchNorm(l) => l,
            Module::Flatten(l) => l,
            Module::Tcl(l) => l,
            Module::Linear(l) => l,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    config: NetworkConfig,
    resolved: Vec<ResolvedLayer>,
    modules: Vec<Module>,
}

/// Inputs of every layer from one forward pass, followed by the logits.
#[derive(Clone, Debug)]
pub struct Trace {
    pub activations: Vec<DenseTensor>,
}

impl Trace {
    pub fn logits(&self) -> &DenseTensor {
        self.activations
            .last()
            .expect("a trace holds at least the network input")
    }
}

impl Network {
    /// Initializes every layer from a ChaCha8 stream seeded with `seed`, in
    /// stack order.
    pub fn build(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let resolved = config.resolve()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modules = Vec::with_capacity(resolved.len());
        for (i, r) in resolved.iter().enumerate() {
            let ctx = |e: Error| Error::Config(format!("layer {i} ({}): {e}", r.spec));
            let input = &r.input_shape;
            let module = match &r.spec {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => Module::Conv(
                    Conv2d::new(input[0], *out_channels, *kernel, *stride, *padding, &mut rng).map_err(ctx)?,
                ),
                LayerSpec::MaxPool { window } => Module::MaxPool(MaxPool2d::new(*window).map_err(ctx)?),
                LayerSpec::Relu => Module::Relu(Relu),
                LayerSpec::BatchNorm => Module::BatchNorm(BatchNorm::new(input[0])),
                LayerSpec::Flatten => Module::Flatten(Flatten),
                LayerSpec::Tcl { ranks } => {
                    Module::Tcl(TclLayer::new(input, ranks, config.tcl_init, &mut rng).map_err(ctx)?)
                }
                LayerSpec::Fc { hidden: n } | LayerSpec::Classifier { classes: n } => {
                    Module::Linear(Linear::new(input.iter().product(), *n, &mut rng))
                }
            };
            modules.push(module);
        }
        Ok(Self {
            config: config.clone(),
            resolved,
            modules,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn resolved(&self) -> &[ResolvedLayer] {
        &self.resolved
    }

    pub fn modules(&self) -> &[Module] {
        &self.modules
    }

    pub fn modules_mut(&mut self) -> &mut [Module] {
        &mut self.modules
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.resolved.iter().map(|r| r.name.as_str())
    }

    pub fn module(&self, name: &str) -> Option<&Module> {
        let i = self.resolved.iter().position(|r| r.name == name)?;
        Some(&self.modules[i])
    }

    pub fn module_mut(&mut self, name: &str) -> Option<&mut Module> {
        let i = self.resolved.iter().position(|r| r.name == name)?;
        Some(&mut self.modules[i])
    }

    pub fn param_count(&self) -> usize {
        self.modules.iter().map(|m| m.layer().param_count()).sum()
    }

    pub fn classes(&self) -> usize {
        self.resolved.last().map_or(0, |r| r.output_shape[0])
    }

    /// Copies parameters from every layer of `other` whose name and parameter
    /// shapes match a layer here. Returns the names that were copied.
    pub fn copy_matching_params(&mut self, other: &Network) -> Vec<String> {
        let mut copied = Vec::new();
        for (r, m) in self.resolved.iter().zip(&mut self.modules) {
            let Some(src) = other.module(&r.name) else { continue };
            let src = src.layer().params();
            let dst = m.layer_mut().params_mut();
            if src.is_empty() || src.len() != dst.len() || src.iter().zip(&dst).any(|(s, d)| s.shape() != d.shape()) {
                continue;
            }
            for (d, s) in dst.into_iter().zip(src) {
                d.data_mut().copy_from_slice(s.data());
            }
            copied.push(r.name.clone());
        }
        copied
    }

    fn check_input(&self, x: &DenseTensor) -> Result<()> {
        if x.order() != self.config.input_shape.len() + 1 || x.shape()[1..] != self.config.input_shape[..] {
            return Err(Error::shape(format!(
                "network expects (batch, {:?}) input, got {:?}",
                self.config.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &DenseTensor, phase: Phase) -> Result<Trace> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.modules.len() + 1);
        activations.push(x.clone());
        for (r, m) in self.resolved.iter().zip(&mut self.modules) {
            let input = activations.last().expect("input pushed above");
            let y = m
                .layer_mut()
                .forward(input, phase)
                .map_err(|e| with_layer(e, &r.name))?;
            activations.push(y);
        }
        Ok(Trace { activations })
    }

    pub fn logits(&mut self, x: &DenseTensor, phase: Phase) -> Result<DenseTensor> {
        self.check_input(x)?;
        let mut a = x.clone();
        for (r, m) in self.resolved.iter().zip(&mut self.modules) {
            a = m.layer_mut().forward(&a, phase).map_err(|e| with_layer(e, &r.name))?;
        }
        Ok(a)
    }

    /// Parameter gradients of every layer, in stack order, given the
    /// gradient of the loss with respect to the logits.
    pub fn backward(&self, trace: &Trace, upstream: &DenseTensor) -> Result<Vec<Vec<DenseTensor>>> {
        let mut grads = vec![Vec::new(); self.modules.len()];
        let mut up = upstream.clone();
        for i in (0..self.modules.len()).rev() {
            let name = &self.resolved[i].name;
            let LayerGrad { input, params } = self.modules[i]
                .layer()
                .backward(&trace.activations[i], &up)
                .map_err(|e| with_layer(e, name))?;
            grads[i] = params;
            up = input;
        }
        Ok(grads)
    }

    /// Sets every batch norm to its exact evaluation-phase identity.
    pub fn set_batchnorm_passthrough(&mut self) {
        for m in &mut self.modules {
            if let Module::BatchNorm(bn) = m {
                bn.set_passthrough();
            }
        }
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn round_params_to_f32(&mut self) {
        for m in &mut self.modules {
            for p in m.layer_mut().params_mut() {
                for v in p.data_mut() {
                    *v = *v as f32 as f64;
                }
            }
        }
    }
}

fn with_layer(e: Error, name: &str) -> Error {
    match e {
        Error::Shape(msg) => Error::Shape(format!("{name}: {msg}")),
        Error::Numeric(msg) => Error::Numeric(format!("{name}: {msg}")),
        other => other,
    }
}
