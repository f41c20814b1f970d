//! Flat `key = value` run configuration with dotted keys.
//!
//! ```text
//! # comments start with '#'
//! network.preset = synth-sub1
//! train.epochs = 30
//! train.lr = 0.01
//! data.source = synth
//! output.dir = runs/sub1
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::layers::FactorInit;
use crate::network::config::{format_layer_list, parse_layer_list, NetworkConfig, Variant};
use crate::network::presets::preset;
use crate::network::TrainConfig;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Every key a configuration may set.
pub const KEYS: &[&str] = &[
    "run.version",
    "network.preset",
    "network.input_shape",
    "network.layers",
    "network.variant",
    "network.bn_around_tcl",
    "network.tcl_init",
    "train.epochs",
    "train.batch_size",
    "train.lr",
    "train.momentum",
    "train.weight_decay",
    "train.lr_decay",
    "train.lr_milestones",
    "train.seed",
    "train.precision",
    "data.source",
    "data.classes",
    "data.train_samples",
    "data.test_samples",
    "data.shape",
    "data.noise",
    "data.seed",
    "data.train_images",
    "data.train_labels",
    "data.test_images",
    "data.test_labels",
    "data.standardize",
    "output.dir",
    "output.wall_time",
];

pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got {raw:?}",
                i + 1
            )));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown key {k:?}", i + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
        }
    }
    Ok(map)
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    Synth(SynthSpec),
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        classes: Option<usize>,
    },
}

/// A fully resolved run: every hyperparameter is explicit.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub version: String,
    /// Preset the network was taken from, if any; explicit network keys
    /// override its fields.
    pub preset: Option<String>,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub data: DataSpec,
    /// Standardize inputs per channel with training-split statistics.
    pub standardize: bool,
    pub output_dir: PathBuf,
    /// Include wall-clock seconds in the metrics records.
    pub wall_time: bool,
}

pub const DEFAULT_PRESET: &str = "synth-baseline";

fn parse<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        })
        .transpose()
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let inner = v.trim().trim_start_matches('(').trim_end_matches(')');
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {s:?} in {v:?}")))
        })
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn init_name(init: FactorInit) -> &'static str {
    match init {
        FactorInit::Gaussian => "gaussian",
        FactorInit::Identity => "identity",
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    format!("({})", v.iter().map(T::to_string).collect::<Vec<_>>().join(", "))
}

impl RunManifest {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map(&parse_key_values(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| map.get(k).map(String::as_str);

        let preset_name = match (get("network.preset"), get("network.layers")) {
            (Some(p), _) => Some(p.to_string()),
            (None, None) => Some(DEFAULT_PRESET.to_string()),
            (None, Some(_)) => None,
        };
        let mut network = match &preset_name {
            Some(p) => preset(p)?.config,
            None => NetworkConfig::new(Vec::new(), Vec::new(), Variant::Baseline),
        };
        if let Some(v) = get("network.input_shape") {
            network.input_shape = parse_list("network.input_shape", v)?;
        }
        if let Some(v) = get("network.layers") {
            network.layers = parse_layer_list(v)?;
        }
        if let Some(v) = parse(map, "network.variant")? {
            network.variant = v;
        }
        if let Some(v) = get("network.bn_around_tcl") {
            network.bn_around_tcl = parse_bool("network.bn_around_tcl", v)?;
        }
        if let Some(v) = get("network.tcl_init") {
            network.tcl_init = match v {
                "gaussian" => FactorInit::Gaussian,
                "identity" => FactorInit::Identity,
                _ => return Err(Error::Config(format!("network.tcl_init: unknown init {v:?}"))),
            };
        }
        if network.input_shape.is_empty() {
            return Err(Error::Config(
                "network.input_shape is required with network.layers".into(),
            ));
        }
        network.resolve()?;

        let d = TrainConfig::default();
        let train = TrainConfig {
            epochs: parse(map, "train.epochs")?.unwrap_or(d.epochs),
            batch_size: parse(map, "train.batch_size")?.unwrap_or(d.batch_size),
            learning_rate: parse(map, "train.lr")?.unwrap_or(d.learning_rate),
            momentum: parse(map, "train.momentum")?.unwrap_or(d.momentum),
            weight_decay: parse(map, "train.weight_decay")?.unwrap_or(d.weight_decay),
            lr_decay: parse(map, "train.lr_decay")?.unwrap_or(d.lr_decay),
            lr_milestones: match get("train.lr_milestones") {
                Some(v) => parse_list("train.lr_milestones", v)?,
                None => d.lr_milestones,
            },
            seed: parse(map, "train.seed")?.unwrap_or(d.seed),
            precision: parse(map, "train.precision")?.unwrap_or(d.precision),
        };
        train.validate()?;

        let data = match get("data.source").unwrap_or("synth") {
            "synth" => {
                let d = SynthSpec::default();
                let spec = SynthSpec {
                    classes: parse(map, "data.classes")?.unwrap_or(d.classes),
                    train_samples: parse(map, "data.train_samples")?.unwrap_or(d.train_samples),
                    test_samples: parse(map, "data.test_samples")?.unwrap_or(d.test_samples),
                    shape: match get("data.shape") {
                        Some(v) => parse_list("data.shape", v)?,
                        None => d.shape,
                    },
                    noise: parse(map, "data.noise")?.unwrap_or(d.noise),
                    seed: parse(map, "data.seed")?.unwrap_or(d.seed),
                };
                spec.validate()?;
                DataSpec::Synth(spec)
            }
            "idx" => {
                let path = |k: &str| {
                    get(k)
                        .map(PathBuf::from)
                        .ok_or_else(|| Error::Config(format!("{k} is required for data.source = idx")))
                };
                DataSpec::Idx {
                    train_images: path("data.train_images")?,
                    train_labels: path("data.train_labels")?,
                    test_images: path("data.test_images")?,
                    test_labels: path("data.test_labels")?,
                    classes: parse(map, "data.classes")?,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "data.source must be synth or idx, got {other:?}"
                )))
            }
        };

        Ok(Self {
            version: get("run.version").unwrap_or(VERSION).to_string(),
            preset: preset_name,
            network,
            train,
            data,
            standardize: get("data.standardize")
                .map(|v| parse_bool("data.standardize", v))
                .transpose()?
                .unwrap_or(true),
            output_dir: get("output.dir").map_or_else(|| PathBuf::from("runs/default"), PathBuf::from),
            wall_time: get("output.wall_time")
                .map(|v| parse_bool("output.wall_time", v))
                .transpose()?
                .unwrap_or(false),
        })
    }

    /// Every key, explicitly. Parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("run.version", self.version.clone());
        if let Some(p) = &self.preset {
            kv("network.preset", p.clone());
        }
        let n = &self.network;
        kv("network.input_shape", join(&n.input_shape));
        kv("network.layers", format_layer_list(&n.layers));
        kv("network.variant", n.variant.to_string());
        kv("network.bn_around_tcl", n.bn_around_tcl.to_string());
        kv("network.tcl_init", init_name(n.tcl_init).to_string());
        let t = &self.train;
        kv("train.epochs", t.epochs.to_string());
        kv("train.batch_size", t.batch_size.to_string());
        kv("train.lr", t.learning_rate.to_string());
        kv("train.momentum", t.momentum.to_string());
        kv("train.weight_decay", t.weight_decay.to_string());
        kv("train.lr_decay", t.lr_decay.to_string());
        kv("train.lr_milestones", join(&t.lr_milestones));
        kv("train.seed", t.seed.to_string());
        kv("train.precision", t.precision.to_string());
        match &self.data {
            DataSpec::Synth(d) => {
                kv("data.source", "synth".into());
                kv("data.classes", d.classes.to_string());
                kv("data.train_samples", d.train_samples.to_string());
                kv("data.test_samples", d.test_samples.to_string());
                kv("data.shape", join(&d.shape));
                kv("data.noise", d.noise.to_string());
                kv("data.seed", d.seed.to_string());
            }
            DataSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                classes,
            } => {
                kv("data.source", "idx".into());
                if let Some(c) = classes {
                    kv("data.classes", c.to_string());
                }
                kv("data.train_images", train_images.display().to_string());
                kv("data.train_labels", train_labels.display().to_string());
                kv("data.test_images", test_images.display().to_string());
                kv("data.test_labels", test_labels.display().to_string());
            }
        }
        kv("data.standardize", self.standardize.to_string());
        kv("output.dir", self.output_dir.display().to_string());
        kv("output.wall_time", self.wall_time.to_string());
        s
    }
}
