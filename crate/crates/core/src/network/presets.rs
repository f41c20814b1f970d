//! Named architectures.
//!
//! The `alexnet-cifar-*` and `vgg-cifar-*` presets put the fully-connected
//! heads of the CIFAR100 experiments on a reduced convolution stack that
//! turns a 3×32×32 image into a (256, 3, 3) or (512, 3, 3) activation. The
//! `alexnet-imagenet-*` presets are heads only: their input is the final
//! activation itself, read either as (256, 5, 5) or as (256, 6, 6).
//! `synth-*` presets are small enough to train on one core in seconds.

use super::config::{LayerSpec, NetworkConfig, Variant};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: String,
    pub config: NetworkConfig,
    /// Preset the space savings of this one are measured against.
    pub baseline: String,
}

/// Fully-connected head variants, described by the layers that follow the
/// final activation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Head {
    Baseline { hidden: usize },
    Added { ranks: Vec<usize>, hidden: usize },
    Substitute1 { ranks: Vec<usize>, hidden: usize },
    Substitute2 { first: Vec<usize>, second: Vec<usize> },
}

impl Head {
    pub fn variant(&self) -> Variant {
        match self {
            Head::Baseline { .. } => Variant::Baseline,
            Head::Added { .. } => Variant::AddedTcl,
            Head::Substitute1 { .. } => Variant::Substitute1,
            Head::Substitute2 { .. } => Variant::Substitute2,
        }
    }

    /// Hidden FC and TCL layers each followed by a ReLU, an added TCL by
    /// nothing; batch norms are added at resolution time.
    pub fn layers(&self, classes: usize) -> Vec<LayerSpec> {
        use LayerSpec::*;
        let mut out = Vec::new();
        match self {
            Head::Baseline { hidden } => {
                out.extend([Fc { hidden: *hidden }, Relu, Fc { hidden: *hidden }, Relu]);
            }
            Head::Added { ranks, hidden } => {
                out.push(Tcl { ranks: ranks.clone() });
                out.extend([Fc { hidden: *hidden }, Relu, Fc { hidden: *hidden }, Relu]);
            }
            Head::Substitute1 { ranks, hidden } => {
                out.extend([Tcl { ranks: ranks.clone() }, Relu, Fc { hidden: *hidden }, Relu]);
            }
            Head::Substitute2 { first, second } => {
                out.extend([Tcl { ranks: first.clone() }, Relu, Tcl { ranks: second.clone() }, Relu]);
            }
        }
        out.push(Classifier { classes });
        out
    }
}

/// Reduced convolution stack: 3×32×32 → (channels, 3, 3).
pub fn cifar_conv_stack(channels: usize) -> Vec<LayerSpec> {
    use LayerSpec::*;
    vec![
        Conv {
            out_channels: 64,
            kernel: 5,
            stride: 2,
            padding: 2,
        },
        Relu,
        MaxPool { window: 2 },
        Conv {
            out_channels: 128,
            kernel: 3,
            stride: 1,
            padding: 1,
        },
        Relu,
        Conv {
            out_channels: channels,
            kernel: 3,
            stride: 1,
            padding: 0,
        },
        Relu,
        MaxPool { window: 2 },
    ]
}

/// Small stack for 3×8×8 inputs: → (8, 4, 4).
pub fn synth_conv_stack() -> Vec<LayerSpec> {
    use LayerSpec::*;
    vec![
        Conv {
            out_channels: 8,
            kernel: 3,
            stride: 1,
            padding: 1,
        },
        Relu,
        MaxPool { window: 2 },
    ]
}

struct Family {
    prefix: &'static str,
    input: Vec<usize>,
    stack: Vec<LayerSpec>,
    heads: Vec<(String, Variant, Vec<LayerSpec>)>,
}

fn with_classes(heads: Vec<(String, Head)>, classes: usize) -> Vec<(String, Variant, Vec<LayerSpec>)> {
    heads
        .into_iter()
        .map(|(name, head)| (name, head.variant(), head.layers(classes)))
        .collect()
}

fn spatial(activation: &[usize], channels: usize) -> Vec<usize> {
    let mut r = activation.to_vec();
    r[0] = channels;
    r
}

/// Table-style head family: size-preserving and two reduced channel counts
/// with proportionally fewer hidden units, plus two double substitutions.
fn cifar_heads(act: &[usize], ch: [usize; 3], second_sub2: usize) -> Vec<(String, Head)> {
    let hidden = [4096, 3072, 2048];
    let mut heads = vec![("baseline".to_string(), Head::Baseline { hidden: 4096 })];
    for i in 0..3 {
        let head = Head::Added {
            ranks: spatial(act, ch[i]),
            hidden: hidden[i],
        };
        heads.push((format!("added-{}", ch[i]), head));
    }
    for i in 0..3 {
        let head = Head::Substitute1 {
            ranks: spatial(act, ch[i]),
            hidden: hidden[i],
        };
        heads.push((format!("sub1-{}", ch[i]), head));
    }
    for (first, second) in [(ch[0], ch[0]), (ch[1], second_sub2)] {
        let head = Head::Substitute2 {
            first: spatial(act, first),
            second: spatial(act, second),
        };
        heads.push((format!("sub2-{first}"), head));
    }
    heads
}

fn families() -> Vec<Family> {
    let alex = [256, 3, 3];
    let vgg = [512, 3, 3];
    let mut fams = vec![
        Family {
            prefix: "alexnet-cifar",
            input: vec![3, 32, 32],
            stack: cifar_conv_stack(256),
            heads: with_classes(cifar_heads(&alex, [256, 192, 128], 144), 100),
        },
        Family {
            prefix: "vgg-cifar",
            input: vec![3, 32, 32],
            stack: cifar_conv_stack(512),
            heads: with_classes(cifar_heads(&vgg, [512, 384, 256], 288), 100),
        },
    ];
    for side in [5, 6] {
        let act = vec![256, side, side];
        fams.push(Family {
            prefix: if side == 5 {
                "alexnet-imagenet-5x5"
            } else {
                "alexnet-imagenet-6x6"
            },
            input: act.clone(),
            stack: Vec::new(),
            heads: with_classes(
                vec![
                    ("baseline".into(), Head::Baseline { hidden: 4096 }),
                    (
                        "added-256".into(),
                        Head::Added {
                            ranks: act.clone(),
                            hidden: 4096,
                        },
                    ),
                    (
                        "added-200".into(),
                        Head::Added {
                            ranks: spatial(&act, 200),
                            hidden: 3276,
                        },
                    ),
                    (
                        "sub1-256".into(),
                        Head::Substitute1 {
                            ranks: act.clone(),
                            hidden: 4096,
                        },
                    ),
                ],
                1000,
            ),
        });
    }
    use LayerSpec::*;
    fams.push(Family {
        prefix: "synth",
        input: vec![3, 8, 8],
        stack: synth_conv_stack(),
        heads: vec![
            (
                "baseline".into(),
                Variant::Baseline,
                vec![Fc { hidden: 128 }, Relu, Classifier { classes: 3 }],
            ),
            (
                "sub1".into(),
                Variant::Substitute1,
                vec![Tcl { ranks: vec![8, 4, 4] }, Relu, Classifier { classes: 3 }],
            ),
        ],
    });
    fams
}

pub fn all_presets() -> Vec<Preset> {
    let mut out = Vec::new();
    for fam in families() {
        let baseline = format!("{}-baseline", fam.prefix);
        for (key, variant, head) in fam.heads {
            let mut layers = fam.stack.clone();
            layers.extend(head);
            out.push(Preset {
                name: format!("{}-{}", fam.prefix, key),
                config: NetworkConfig::new(fam.input.clone(), layers, variant),
                baseline: baseline.clone(),
            });
        }
    }
    out
}

pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = all_presets().into_iter().map(|p| p.name).collect();
    names.extend(["alexnet-cifar-head".to_string(), "vgg-cifar-head".to_string()]);
    names
}

pub fn preset(name: &str) -> Result<Preset> {
    let lookup = match name {
        "alexnet-cifar-head" => "alexnet-cifar-baseline",
        "vgg-cifar-head" => "vgg-cifar-baseline",
        other => other,
    };
    all_presets()
        .into_iter()
        .find(|p| p.name == lookup)
        .ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))
}
