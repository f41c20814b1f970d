use super::{Layer, LayerGrad, Phase};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the previous running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Batch normalization with one feature per channel (mode 2).
///
/// Statistics are taken over the batch and every trailing mode, so an input
/// of shape `(B, C, H, W)` is normalized per channel over `B·H·W` values and
/// a `(B, F)` input per feature over the batch.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    gamma: DenseTensor,
    beta: DenseTensor,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

struct Stats {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: DenseTensor::filled(&[channels], 1.0),
            beta: DenseTensor::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &DenseTensor {
        &self.gamma
    }

    pub fn beta(&self) -> &DenseTensor {
        &self.beta
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    pub fn set_affine(&mut self, gamma: DenseTensor, beta: DenseTensor) -> Result<()> {
        if gamma.shape() != self.gamma.shape() || beta.shape() != self.beta.shape() {
            return Err(Error::shape(
                "batch norm affine parameters must have one entry per channel",
            ));
        }
        self.gamma = gamma;
        self.beta = beta;
        Ok(())
    }

    /// Makes the evaluation-phase map exactly the identity: unit scale, zero
    /// shift, zero running mean and running variance `1 - ε`.
    pub fn set_passthrough(&mut self) {
        let c = self.channels();
        self.gamma = DenseTensor::filled(&[c], 1.0);
        self.beta = DenseTensor::zeros(&[c]);
        self.running_mean = vec![0.0; c];
        self.running_var = vec![1.0 - BN_EPSILON; c];
    }

    /// `(batch, channels, inner)` view sizes.
    fn layout(&self, x: &DenseTensor) -> Result<(usize, usize, usize)> {
        if x.order() < 2 || x.shape()[1] != self.channels() {
            return Err(Error::shape(format!(
                "batch norm over {} channels got {:?}",
                self.channels(),
                x.shape()
            )));
        }
        let inner = x.shape()[2..].iter().product();
        Ok((x.shape()[0], self.channels(), inner))
    }

    fn batch_stats(&self, x: &DenseTensor) -> Result<Stats> {
        let (b, c, inner) = self.layout(x)?;
        if b < 2 {
            return Err(Error::DegenerateBatch(b));
        }
        let n = (b * inner) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        let d = x.data();
        for s in 0..b {
            for (ch, m) in mean.iter_mut().enumerate() {
                let off = (s * c + ch) * inner;
                *m += d[off..off + inner].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for s in 0..b {
            for (ch, (v, m)) in var.iter_mut().zip(&mean).enumerate() {
                let off = (s * c + ch) * inner;
                *v += d[off..off + inner].iter().map(|x| (x - m).powi(2)).sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= n);
        Ok(Stats { mean, var })
    }

    fn normalize(&self, x: &DenseTensor, mean: &[f64], var: &[f64]) -> Result<DenseTensor> {
        let (b, c, inner) = self.layout(x)?;
        let mut out = x.clone();
        let d = out.data_mut();
        for s in 0..b {
            for ch in 0..c {
                let inv = 1.0 / (var[ch] + BN_EPSILON).sqrt();
                let (g, bt) = (self.gamma.data()[ch], self.beta.data()[ch]);
                let off = (s * c + ch) * inner;
                for v in &mut d[off..off + inner] {
                    *v = g * ((*v - mean[ch]) * inv) + bt;
                }
            }
        }
        Ok(out)
    }
}

impl Layer for BatchNorm {
    fn kind(&self) -> &'static str {
        "batchnorm"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.first() != Some(&self.channels()) {
            return Err(Error::shape(format!(
                "batch norm over {} channels cannot take {input:?}",
                self.channels()
            )));
        }
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &DenseTensor, phase: Phase) -> Result<DenseTensor> {
        match phase {
            Phase::Train => {
                let stats = self.batch_stats(x)?;
                let y = self.normalize(x, &stats.mean, &stats.var)?;
                for ch in 0..self.channels() {
                    self.running_mean[ch] = BN_MOMENTUM * self.running_mean[ch] + (1.0 - BN_MOMENTUM) * stats.mean[ch];
                    self.running_var[ch] = BN_MOMENTUM * self.running_var[ch] + (1.0 - BN_MOMENTUM) * stats.var[ch];
                }
                Ok(y)
            }
            Phase::Eval => self.normalize(x, &self.running_mean, &self.running_var),
        }
    }

    fn backward(&self, x: &DenseTensor, upstream: &DenseTensor) -> Result<LayerGrad> {
        x.same_shape(upstream)?;
        let (b, c, inner) = self.layout(x)?;
        let stats = self.batch_stats(x)?;
        let n = (b * inner) as f64;
        let (xd, ud) = (x.data(), upstream.data());

        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        let inv: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
        for s in 0..b {
            for ch in 0..c {
                let off = (s * c + ch) * inner;
                for i in off..off + inner {
                    let xhat = (xd[i] - stats.mean[ch]) * inv[ch];
                    dgamma[ch] += ud[i] * xhat;
                    dbeta[ch] += ud[i];
                }
            }
        }

        // dx = γ/(nσ) · (n·dy − Σdy − x̂·Σ(dy·x̂))
        let mut dx = vec![0.0; xd.len()];
        for s in 0..b {
            for ch in 0..c {
                let scale = self.gamma.data()[ch] * inv[ch] / n;
                let off = (s * c + ch) * inner;
                for i in off..off + inner {
                    let xhat = (xd[i] - stats.mean[ch]) * inv[ch];
                    dx[i] = scale * (n * ud[i] - dbeta[ch] - xhat * dgamma[ch]);
                }
            }
        }
        Ok(LayerGrad {
            input: DenseTensor::new(x.shape().to_vec(), dx)?,
            params: vec![DenseTensor::vector(dgamma)?, DenseTensor::vector(dbeta)?],
        })
    }

    fn params(&self) -> Vec<&DenseTensor> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut DenseTensor> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_features_map_to_beta() {
        let mut bn = BatchNorm::new(2);
        bn.set_affine(
            DenseTensor::vector(vec![3.0, -1.0]).unwrap(),
            DenseTensor::vector(vec![0.5, 2.0]).unwrap(),
        )
        .unwrap();
        let x = DenseTensor::from_fn(&[4, 2, 3], |i| if i[1] == 0 { 7.0 } else { -2.5 }).unwrap();
        let y = bn.forward(&x, Phase::Train).unwrap();
        for (idx, v) in y.data().iter().enumerate() {
            let ch = (idx / 3) % 2;
            assert_eq!(*v, [0.5, 2.0][ch]);
        }
    }

    #[test]
    fn normalized_output_has_unit_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut bn = BatchNorm::new(3);
        let x = DenseTensor::random_normal(&[5, 3, 2, 2], 4.0, &mut rng).map(|v| v + 1.5);
        let y = bn.forward(&x, Phase::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..y.len())
                .filter(|i| (i / 4) % 3 == ch)
                .map(|i| y.data()[i])
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-10);
            // ε in the denominator shrinks the variance by var/(var+ε).
            let raw: Vec<f64> = (0..x.len())
                .filter(|i| (i / 4) % 3 == ch)
                .map(|i| x.data()[i])
                .collect();
            let rm = raw.iter().sum::<f64>() / n;
            let rv = raw.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / n;
            assert!((var - rv / (rv + BN_EPSILON)).abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn running_stats_and_eval() {
        let mut bn = BatchNorm::new(1);
        let x = DenseTensor::matrix(2, 1, vec![1.0, 3.0]).unwrap();
        bn.forward(&x, Phase::Train).unwrap();
        assert!((bn.running_mean()[0] - 0.2).abs() < 1e-15);
        assert!((bn.running_var()[0] - 0.9 * 1.0 - 0.1 * 1.0).abs() < 1e-15);
        let y = bn.forward(&x, Phase::Eval).unwrap();
        let inv = 1.0 / (bn.running_var()[0] + BN_EPSILON).sqrt();
        assert!((y.data()[0] - (1.0 - 0.2) * inv).abs() < 1e-15);
    }

    #[test]
    fn passthrough_is_identity_in_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut bn = BatchNorm::new(4);
        bn.set_passthrough();
        let x = DenseTensor::random_normal(&[3, 4, 2], 1.0, &mut rng);
        let y = bn.forward(&x, Phase::Eval).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn degenerate_batch() {
        let mut bn = BatchNorm::new(2);
        let x = DenseTensor::zeros(&[1, 2, 3]);
        assert!(matches!(bn.forward(&x, Phase::Train), Err(Error::DegenerateBatch(1))));
        assert!(bn.forward(&x, Phase::Eval).is_ok());
    }
}
