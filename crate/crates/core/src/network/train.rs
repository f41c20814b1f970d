use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Network, Trace};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::{softmax_cross_entropy, Phase};
use crate::tensor::DenseTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::Config(format!("precision must be f32 or f64, got {other:?}"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Factor applied to the learning rate at each milestone.
    pub lr_decay: f64,
    /// Milestones as fractions of `epochs`.
    pub lr_milestones: Vec<f64>,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 128,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_decay: 0.1,
            lr_milestones: vec![0.5, 0.75],
            seed: 0,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.epochs == 0 {
            return bad("train.epochs must be at least 1");
        }
        if self.batch_size < 2 {
            return bad("train.batch_size must be at least 2");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("train.lr must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("train.momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("train.weight_decay must be finite and non-negative");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return bad("train.lr_decay must be positive");
        }
        if self.lr_milestones.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return bad("train.lr_milestones must be fractions in [0, 1]");
        }
        Ok(())
    }
}

/// Learning rate in effect during 1-based `epoch`.
pub fn learning_rate_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    let passed = cfg
        .lr_milestones
        .iter()
        .filter(|&&m| epoch > (m * cfg.epochs as f64).round() as usize)
        .count();
    cfg.learning_rate * cfg.lr_decay.powi(passed as i32)
}

/// One momentum-SGD step on a single tensor:
/// `v <- momentum * v - lr * (g + weight_decay * w)`, `w <- w + v`.
pub fn sgd_update(
    w: &mut DenseTensor,
    v: &mut DenseTensor,
    g: &DenseTensor,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    w.same_shape(g)?;
    w.same_shape(v)?;
    if !g.all_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    for ((wi, vi), &gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
        *vi = momentum * *vi - lr * (gi + weight_decay * *wi);
        *wi += *vi;
    }
    Ok(())
}

/// Momentum buffers for every parameter of a network.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<DenseTensor>>,
}

impl Sgd {
    pub fn new(net: &Network, momentum: f64, weight_decay: f64) -> Self {
        let velocity = net
            .modules()
            .iter()
            .map(|m| {
                m.layer()
                    .params()
                    .iter()
                    .map(|p| DenseTensor::zeros(p.shape()))
                    .collect()
            })
            .collect();
        Self {
            momentum,
            weight_decay,
            velocity,
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &[Vec<DenseTensor>], lr: f64) -> Result<()> {
        let names: Vec<String> = net.names().map(str::to_string).collect();
        if grads.len() != net.len() {
            return Err(Error::shape("one gradient list per layer is required"));
        }
        for (i, m) in net.modules_mut().iter_mut().enumerate() {
            for (k, w) in m.layer_mut().params_mut().into_iter().enumerate() {
                sgd_update(
                    w,
                    &mut self.velocity[i][k],
                    &grads[i][k],
                    lr,
                    self.momentum,
                    self.weight_decay,
                )
                .map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!("{}: {msg} in parameter {k}", names[i])),
                    Error::Shape(msg) => Error::Shape(format!("{}: {msg}", names[i])),
                    other => other,
                })?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_top1: f64,
    pub test_top1: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainMetrics {
    pub records: Vec<EpochRecord>,
    /// File holding the parameter report of the trained network, if written.
    pub param_report: Option<std::path::PathBuf>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn top1_accuracy(logits: &DenseTensor, labels: &[usize]) -> Result<f64> {
    Ok(correct(logits, labels)? as f64 / labels.len() as f64)
}

fn correct(logits: &DenseTensor, labels: &[usize]) -> Result<usize> {
    if logits.order() != 2 || logits.rows() != labels.len() || labels.is_empty() {
        return Err(Error::shape(format!(
            "logits {:?} do not match {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    Ok(logits
        .data()
        .chunks(logits.cols())
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count())
}

/// Batch boundaries over `n` samples; a trailing batch of one sample is
/// merged into the previous batch so batch norm always sees two.
fn batch_ranges(n: usize, batch: usize) -> Vec<std::ops::Range<usize>> {
    let mut ranges: Vec<_> = (0..n).step_by(batch).map(|s| s..(s + batch).min(n)).collect();
    if ranges.len() > 1 && ranges.last().is_some_and(|r| r.len() == 1) {
        let last = ranges.pop().expect("checked above");
        ranges.last_mut().expect("checked above").end = last.end;
    }
    ranges
}

/// Runs one shuffled pass of SGD. The shuffle for `epoch` comes from its own
/// ChaCha8 stream of `cfg.seed`. Returns the sample-weighted mean training
/// loss and the training top-1 of the train-phase logits.
pub fn train_epoch(
    net: &mut Network,
    opt: &mut Sgd,
    data: &Dataset,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(f64, f64)> {
    let n = data.len();
    if cfg.batch_size > n {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {n} training samples",
            cfg.batch_size
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    let lr = learning_rate_at(cfg, epoch);

    let (mut loss_sum, mut hits) = (0.0, 0);
    for range in batch_ranges(n, cfg.batch_size) {
        let idx = &order[range];
        let (x, labels) = data.batch(idx)?;
        let trace: Trace = net.forward(&x, Phase::Train)?;
        let (loss, up) = softmax_cross_entropy(trace.logits(), &labels)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite training loss in epoch {epoch}")));
        }
        loss_sum += loss * idx.len() as f64;
        hits += correct(trace.logits(), &labels)?;
        let grads = net.backward(&trace, &up)?;
        opt.step(net, &grads, lr)?;
        if cfg.precision == Precision::F32 {
            net.round_params_to_f32();
        }
    }
    Ok((loss_sum / n as f64, hits as f64 / n as f64))
}

/// Evaluation-phase mean loss and top-1 over a dataset.
pub fn evaluate(net: &mut Network, data: &Dataset) -> Result<(f64, f64)> {
    const CHUNK: usize = 256;
    let n = data.len();
    let (mut loss_sum, mut hits) = (0.0, 0);
    let all: Vec<usize> = (0..n).collect();
    for chunk in all.chunks(CHUNK) {
        let (x, labels) = data.batch(chunk)?;
        let logits = net.logits(&x, Phase::Eval)?;
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        hits += correct(&logits, &labels)?;
    }
    Ok((loss_sum / n as f64, hits as f64 / n as f64))
}

/// Trains for `cfg.epochs` epochs, evaluating on `test` after each and
/// handing every record to `on_epoch` before the next epoch starts.
pub fn fit(
    net: &mut Network,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    let mut opt = Sgd::new(net, cfg.momentum, cfg.weight_decay);
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let (train_loss, train_top1) = train_epoch(net, &mut opt, train, cfg, epoch)?;
        let (_, test_top1) = evaluate(net, test)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            train_top1,
            test_top1,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record)?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(w: f64, v: f64, lr: f64, mu: f64) -> (f64, f64) {
        let mut wt = DenseTensor::vector(vec![w]).unwrap();
        let mut vt = DenseTensor::vector(vec![v]).unwrap();
        let g = DenseTensor::vector(vec![2.0 * w]).unwrap();
        sgd_update(&mut wt, &mut vt, &g, lr, mu, 0.0).unwrap();
        (wt.data()[0], vt.data()[0])
    }

    #[test]
    fn quadratic_hand_iteration() {
        let (w, v) = step(1.0, 0.0, 0.1, 0.9);
        assert!((w - 0.8).abs() < 1e-15 && (v + 0.2).abs() < 1e-15);
        let (w, v) = step(w, v, 0.1, 0.9);
        assert!((v + 0.34).abs() < 1e-15);
        assert!((w - 0.46).abs() < 1e-15);
    }

    #[test]
    fn plain_and_zero_gradient_steps() {
        let mut w = DenseTensor::vector(vec![1.0, -2.0]).unwrap();
        let mut v = DenseTensor::zeros(&[2]);
        let g = DenseTensor::vector(vec![0.5, 0.25]).unwrap();
        sgd_update(&mut w, &mut v, &g, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(w.data(), &[1.0 - 0.05, -2.0 - 0.025]);
        let before = w.clone();
        let mut v = DenseTensor::zeros(&[2]);
        sgd_update(&mut w, &mut v, &DenseTensor::zeros(&[2]), 0.1, 0.0, 0.0).unwrap();
        assert_eq!(w, before);
        let nan = DenseTensor::vector(vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(
            sgd_update(&mut w, &mut v, &nan, 0.1, 0.0, 0.0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn step_decay_schedule() {
        let cfg = TrainConfig {
            epochs: 4,
            learning_rate: 1.0,
            ..TrainConfig::default()
        };
        let lrs: Vec<f64> = (1..=4).map(|e| learning_rate_at(&cfg, e)).collect();
        assert_eq!(lrs[0], 1.0);
        assert_eq!(lrs[1], 1.0);
        assert!((lrs[2] - 0.1).abs() < 1e-15);
        assert!((lrs[3] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lowest_class() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        let logits = DenseTensor::filled(&[4, 3], 0.5);
        assert_eq!(top1_accuracy(&logits, &[0, 1, 2, 0]).unwrap(), 0.5);
    }

    #[test]
    fn batches_never_leave_a_single_sample() {
        let r = batch_ranges(9, 4);
        assert_eq!(r, vec![0..4, 4..9]);
        assert_eq!(batch_ranges(8, 4), vec![0..4, 4..8]);
        assert_eq!(batch_ranges(3, 4), vec![0..3]);
    }
}
