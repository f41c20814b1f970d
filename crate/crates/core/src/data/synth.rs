use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Class-template images with additive Gaussian noise.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// `(C, H, W)`.
    pub shape: Vec<usize>,
    /// Standard deviation of the per-pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            train_samples: 200,
            test_samples: 60,
            shape: vec![3, 8, 8],
            noise: 0.1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.train_samples == 0 || self.test_samples == 0 {
            return Err(Error::Config(
                "synthetic class and sample counts must be positive".into(),
            ));
        }
        if self.shape.len() != 3 || self.shape.contains(&0) {
            return Err(Error::Config(format!(
                "synthetic shape must be (C, H, W), got {:?}",
                self.shape
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("synthetic noise must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// One uniform `[0, 1]` template per class, drawn first from the seed.
    pub fn templates(&self) -> Result<Vec<DenseTensor>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..self.classes)
            .map(|_| DenseTensor::from_fn(&self.shape, |_| rng.random::<f64>()).expect("validated shape"))
            .collect())
    }
}

/// Train and test splits. Sample `i` of a split has label `i mod classes`;
/// its pixels are the template plus noise, clipped to `[0, 1]`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<(Dataset, Dataset)> {
    let templates = spec.templates()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let mut make = |n: usize, split: Split| -> Result<Dataset> {
        let per: usize = spec.shape.iter().product();
        let mut data = Vec::with_capacity(n * per);
        let labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
        for &label in &labels {
            for &t in templates[label].data() {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push((t + spec.noise * z).clamp(0.0, 1.0));
            }
        }
        let mut shape = vec![n];
        shape.extend_from_slice(&spec.shape);
        Dataset::new(DenseTensor::new(shape, data)?, labels, spec.classes, split)
    };
    let train = make(spec.train_samples, Split::Train)?;
    let test = make(spec.test_samples, Split::Test)?;
    Ok((train, test))
}
