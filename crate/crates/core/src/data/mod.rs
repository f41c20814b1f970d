//! Datasets: in-memory image tensors, the IDX binary format and a synthetic
//! template generator.

mod idx;
mod synth;

pub use idx::{load_idx, parse_idx, write_idx_images, write_idx_labels, IdxArray};
pub use synth::{synth_dataset, SynthSpec};

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Images of shape `(N, C, H, W)` with one label each.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: DenseTensor,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
    channel_mean: Vec<f64>,
    channel_std: Vec<f64>,
}

impl Dataset {
    pub fn new(images: DenseTensor, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if images.order() != 4 {
            return Err(Error::shape(format!(
                "images must be (N, C, H, W), got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Label {
                label,
                classes: num_classes,
            });
        }
        let (channel_mean, channel_std) = channel_stats(&images);
        Ok(Self {
            images,
            labels,
            num_classes,
            split,
            channel_mean,
            channel_std,
        })
    }

    pub fn images(&self) -> &DenseTensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(C, H, W)`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    pub fn channel_mean(&self) -> &[f64] {
        &self.channel_mean
    }

    /// Population standard deviation per channel.
    pub fn channel_std(&self) -> &[f64] {
        &self.channel_std
    }

    /// `(x - mean) / std` per channel, using the given statistics. Channels
    /// with zero spread are only centred.
    pub fn standardized(&self, mean: &[f64], std: &[f64]) -> Result<Self> {
        let c = self.sample_shape()[0];
        if mean.len() != c || std.len() != c {
            return Err(Error::shape(format!("need {c} channel statistics")));
        }
        let inner: usize = self.sample_shape()[1..].iter().product();
        let mut images = self.images.clone();
        for (i, v) in images.data_mut().iter_mut().enumerate() {
            let ch = (i / inner) % c;
            let s = if std[ch] > 0.0 { std[ch] } else { 1.0 };
            *v = (*v - mean[ch]) / s;
        }
        Self::new(images, self.labels.clone(), self.num_classes, self.split)
    }

    pub fn round_to_f32(&self) -> Self {
        let mut out = self.clone();
        for v in out.images.data_mut() {
            *v = *v as f32 as f64;
        }
        out
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let (images, labels) = self.batch(&idx)?;
        Self::new(images, labels, self.num_classes, self.split)
    }

    /// Gathers the samples at `indices` into one batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(DenseTensor, Vec<usize>)> {
        let per: usize = self.sample_shape().iter().product();
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::shape(format!(
                    "sample {i} out of range for {} samples",
                    self.len()
                )));
            }
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        Ok((DenseTensor::new(shape, data)?, labels))
    }
}

fn channel_stats(images: &DenseTensor) -> (Vec<f64>, Vec<f64>) {
    let s = images.shape();
    let (n, c, inner) = (s[0], s[1], s[2] * s[3]);
    let count = (n * inner) as f64;
    let mut mean = vec![0.0; c];
    let mut sq = vec![0.0; c];
    for (i, &v) in images.data().iter().enumerate() {
        mean[(i / inner) % c] += v;
    }
    for m in &mut mean {
        *m /= count;
    }
    for (i, &v) in images.data().iter().enumerate() {
        let ch = (i / inner) % c;
        sq[ch] += (v - mean[ch]).powi(2);
    }
    let std = sq.into_iter().map(|s| (s / count).sqrt()).collect();
    (mean, std)
}
