use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::FactorInit;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool {
        window: usize,
    },
    Relu,
    BatchNorm,
    Flatten,
    Tcl {
        ranks: Vec<usize>,
    },
    Fc {
        hidden: usize,
    },
    Classifier {
        classes: usize,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Relu => "relu",
            LayerSpec::BatchNorm => "batchnorm",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Tcl { .. } => "tcl",
            LayerSpec::Fc { .. } => "fc",
            LayerSpec::Classifier { .. } => "classifier",
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        let spatial = |what: &str| -> std::result::Result<(usize, usize, usize), String> {
            match input {
                [c, h, w] => Ok((*c, *h, *w)),
                _ => Err(format!("{what} needs a (C, H, W) input, got {input:?}")),
            }
        };
        match self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (_, h, w) = spatial("conv")?;
                if *out_channels == 0 || *kernel == 0 || *stride == 0 {
                    return Err("conv sizes must be positive".into());
                }
                let out = |n: usize| {
                    let padded = n + 2 * padding;
                    (padded >= *kernel).then(|| (padded - kernel) / stride + 1)
                };
                match (out(h), out(w)) {
                    (Some(oh), Some(ow)) => Ok(vec![*out_channels, oh, ow]),
                    _ => Err(format!("{kernel}x{kernel} kernel does not fit {input:?}")),
                }
            }
            LayerSpec::MaxPool { window } => {
                let (c, h, w) = spatial("maxpool")?;
                if *window == 0 || h < *window || w < *window {
                    return Err(format!("{window}x{window} pooling does not fit {input:?}"));
                }
                Ok(vec![c, h / window, w / window])
            }
            LayerSpec::Relu | LayerSpec::BatchNorm => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Tcl { ranks } => {
                if ranks.len() != input.len() {
                    return Err(format!("TCL ranks {ranks:?} do not match input {input:?}"));
                }
                if ranks.contains(&0) {
                    return Err("TCL ranks must be positive".into());
                }
                Ok(ranks.clone())
            }
            LayerSpec::Fc { hidden: n } | LayerSpec::Classifier { classes: n } => {
                if *n == 0 {
                    return Err(format!("{} needs at least one output", self.kind()));
                }
                Ok(vec![*n])
            }
        }
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => write!(f, "conv({out_channels},{kernel},{stride},{padding})"),
            LayerSpec::MaxPool { window } => write!(f, "maxpool({window})"),
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::BatchNorm => f.write_str("batchnorm"),
            LayerSpec::Flatten => f.write_str("flatten"),
            LayerSpec::Tcl { ranks } => write!(f, "tcl({})", join(ranks)),
            LayerSpec::Fc { hidden } => write!(f, "fc({hidden})"),
            LayerSpec::Classifier { classes } => write!(f, "classifier({classes})"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) if s.ends_with(')') => {
                let args = s[open + 1..s.len() - 1]
                    .split(',')
                    .map(|a| {
                        a.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Config(format!("bad layer argument {a:?} in {s:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (s[..open].trim(), args)
            }
            Some(_) => return Err(Error::Config(format!("unbalanced parentheses in {s:?}"))),
            None => (s, Vec::new()),
        };
        let arity = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} takes {n} arguments, got {s:?}")))
            }
        };
        let spec = match name {
            "conv" => {
                arity(4)?;
                LayerSpec::Conv {
                    out_channels: args[0],
                    kernel: args[1],
                    stride: args[2],
                    padding: args[3],
                }
            }
            "maxpool" => {
                arity(1)?;
                LayerSpec::MaxPool { window: args[0] }
            }
            "relu" => {
                arity(0)?;
                LayerSpec::Relu
            }
            "batchnorm" => {
                arity(0)?;
                LayerSpec::BatchNorm
            }
            "flatten" => {
                arity(0)?;
                LayerSpec::Flatten
            }
            "tcl" if !args.is_empty() => LayerSpec::Tcl { ranks: args },
            "fc" => {
                arity(1)?;
                LayerSpec::Fc { hidden: args[0] }
            }
            "classifier" => {
                arity(1)?;
                LayerSpec::Classifier { classes: args[0] }
            }
            _ => return Err(Error::Config(format!("unknown layer {s:?}"))),
        };
        Ok(spec)
    }
}

/// Parses a comma-separated layer list such as `conv(8,3,1,1), relu, fc(10)`.
pub fn parse_layer_list(s: &str) -> Result<Vec<LayerSpec>> {
    let mut items = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                items.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(Error::Config(format!("unbalanced parentheses in {s:?}")));
        }
    }
    items.push(&s[start..]);
    items
        .into_iter()
        .filter(|i| !i.trim().is_empty())
        .map(str::parse)
        .collect()
}

pub fn format_layer_list(layers: &[LayerSpec]) -> String {
    layers.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Baseline,
    AddedTcl,
    Substitute1,
    Substitute2,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::AddedTcl => "added-tcl",
            Variant::Substitute1 => "substitute-1",
            Variant::Substitute2 => "substitute-2",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "baseline" => Ok(Variant::Baseline),
            "added-tcl" => Ok(Variant::AddedTcl),
            "substitute-1" => Ok(Variant::Substitute1),
            "substitute-2" => Ok(Variant::Substitute2),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Declarative layer stack. Batch-norm layers around every TCL are inserted
/// when the stack is resolved unless `bn_around_tcl` is turned off.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub variant: Variant,
    pub bn_around_tcl: bool,
    pub tcl_init: FactorInit,
}

/// A layer of a resolved stack with its generated name and shapes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolvedLayer {
    pub name: String,
    pub spec: LayerSpec,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
}

impl NetworkConfig {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, variant: Variant) -> Self {
        Self {
            input_shape,
            layers,
            variant,
            bn_around_tcl: true,
            tcl_init: FactorInit::Gaussian,
        }
    }

    /// The layer list with batch norms inserted around each TCL.
    pub fn expanded_layers(&self) -> Vec<LayerSpec> {
        if !self.bn_around_tcl {
            return self.layers.clone();
        }
        let mut out: Vec<LayerSpec> = Vec::with_capacity(self.layers.len() + 4);
        for (i, spec) in self.layers.iter().enumerate() {
            if matches!(spec, LayerSpec::Tcl { .. }) {
                if out.last() != Some(&LayerSpec::BatchNorm) {
                    out.push(LayerSpec::BatchNorm);
                }
                out.push(spec.clone());
                if self.layers.get(i + 1) != Some(&LayerSpec::BatchNorm) {
                    out.push(LayerSpec::BatchNorm);
                }
            } else {
                out.push(spec.clone());
            }
        }
        out
    }

    /// Expands, names and shape-checks the stack.
    pub fn resolve(&self) -> Result<Vec<ResolvedLayer>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Config(format!("invalid input shape {:?}", self.input_shape)));
        }
        let layers = self.expanded_layers();
        let n_classifiers = layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Classifier { .. }))
            .count();
        if n_classifiers != 1 || !matches!(layers.last(), Some(LayerSpec::Classifier { .. })) {
            return Err(Error::Config(
                "the stack must end with exactly one classifier layer".into(),
            ));
        }
        let mut counters = std::collections::HashMap::new();
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(layers.len());
        for (i, spec) in layers.into_iter().enumerate() {
            let output = spec
                .output_shape(&shape)
                .map_err(|e| Error::Config(format!("layer {i} ({spec}): {e}")))?;
            let name = match spec {
                LayerSpec::Classifier { .. } => "classifier".to_string(),
                _ => {
                    let n = counters.entry(spec.kind()).or_insert(0);
                    *n += 1;
                    format!("{}{}", spec.kind(), n)
                }
            };
            out.push(ResolvedLayer {
                name,
                spec,
                input_shape: shape,
                output_shape: output.clone(),
            });
            shape = output;
        }
        Ok(out)
    }

    pub fn classes(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            LayerSpec::Classifier { classes } => Some(*classes),
            _ => None,
        })
    }
}
