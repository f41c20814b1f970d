use super::{Layer, LayerGrad, Phase};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Non-overlapping max pooling: square window, stride equal to the window.
/// Trailing rows/columns that do not fill a window are dropped. Ties go to
/// the first maximum in row-major scan order.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    window: usize,
}

impl MaxPool2d {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::shape("pooling window must be positive"));
        }
        Ok(Self { window })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    fn out_hw(&self, shape: &[usize]) -> Result<(usize, usize)> {
        if shape.len() != 4 || shape[2] < self.window || shape[3] < self.window {
            return Err(Error::shape(format!(
                "{0}x{0} max pool cannot take {shape:?}",
                self.window
            )));
        }
        Ok((shape[2] / self.window, shape[3] / self.window))
    }

    /// Flat input offset of the winning entry for every output position.
    fn argmax(&self, x: &DenseTensor) -> Result<(Vec<usize>, Vec<usize>)> {
        let s = x.shape();
        let (oh, ow) = self.out_hw(s)?;
        let (h, w) = (s[2], s[3]);
        let planes = s[0] * s[1];
        let mut winners = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let base = p * h * w;
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut best = base + oi * self.window * w + oj * self.window;
                    for a in 0..self.window {
                        for b in 0..self.window {
                            let idx = base + (oi * self.window + a) * w + oj * self.window + b;
                            if x.data()[idx] > x.data()[best] {
                                best = idx;
                            }
                        }
                    }
                    winners.push(best);
                }
            }
        }
        Ok((winners, vec![s[0], s[1], oh, ow]))
    }
}

impl Layer for MaxPool2d {
    fn kind(&self) -> &'static str {
        "maxpool"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut full = vec![1];
        full.extend_from_slice(input);
        let (oh, ow) = self.out_hw(&full)?;
        Ok(vec![input[0], oh, ow])
    }

    fn forward(&mut self, x: &DenseTensor, _phase: Phase) -> Result<DenseTensor> {
        let (winners, shape) = self.argmax(x)?;
        DenseTensor::new(shape, winners.iter().map(|&i| x.data()[i]).collect())
    }

    fn backward(&self, x: &DenseTensor, upstream: &DenseTensor) -> Result<LayerGrad> {
        let (winners, shape) = self.argmax(x)?;
        if upstream.shape() != shape {
            return Err(Error::shape(format!(
                "max pool upstream gradient must be {shape:?}, got {:?}",
                upstream.shape()
            )));
        }
        let mut dx = DenseTensor::zeros(x.shape());
        for (&i, &u) in winners.iter().zip(upstream.data()) {
            dx.data_mut()[i] += u;
        }
        Ok(LayerGrad {
            input: dx,
            params: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn each_output_is_its_window_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DenseTensor::random_normal(&[2, 3, 4, 4], 1.0, &mut rng);
        let y = MaxPool2d::new(2).unwrap().forward(&x, Phase::Train).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 2]);
        for b in 0..2 {
            for c in 0..3 {
                for i in 0..2 {
                    for j in 0..2 {
                        let mut m = f64::NEG_INFINITY;
                        for a in 0..2 {
                            for bb in 0..2 {
                                m = m.max(x.get(&[b, c, 2 * i + a, 2 * j + bb]));
                            }
                        }
                        assert_eq!(y.get(&[b, c, i, j]), m);
                    }
                }
            }
        }
    }

    #[test]
    fn odd_sizes_drop_the_remainder() {
        let x = DenseTensor::from_fn(&[1, 1, 3, 3], |i| (i[2] * 3 + i[3]) as f64).unwrap();
        let y = MaxPool2d::new(2).unwrap().forward(&x, Phase::Train).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn ties_route_to_first_entry() {
        let pool = MaxPool2d::new(2).unwrap();
        let x = DenseTensor::filled(&[1, 1, 2, 2], 1.0);
        let g = pool.backward(&x, &DenseTensor::filled(&[1, 1, 1, 1], 5.0)).unwrap();
        assert_eq!(g.input.data(), &[5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn window_too_large() {
        let mut pool = MaxPool2d::new(3).unwrap();
        assert!(pool.forward(&DenseTensor::zeros(&[1, 1, 2, 2]), Phase::Train).is_err());
        assert!(MaxPool2d::new(0).is_err());
    }
}
