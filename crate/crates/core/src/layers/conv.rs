use rand::Rng;

use super::{Layer, LayerGrad, Phase};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// 2-D convolution over NCHW activations with square kernels, a single
/// stride and symmetric zero padding.
#[derive(Clone, Debug)]
pub struct Conv2d {
    weights: DenseTensor,
    bias: DenseTensor,
    stride: usize,
    padding: usize,
}

struct Geometry {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    oh: usize,
    ow: usize,
}

fn out_size(n: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = n + 2 * padding;
    (padded >= k).then(|| (padded - k) / stride + 1)
}

impl Conv2d {
    /// He-normal weights, zero bias.
    pub fn new<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let std = (2.0 / (c_in * kernel * kernel) as f64).sqrt();
        let weights = DenseTensor::random_normal(&[c_out, c_in, kernel, kernel], std, rng);
        Self::from_parts(weights, DenseTensor::zeros(&[c_out]), stride, padding)
    }

    pub fn from_parts(weights: DenseTensor, bias: DenseTensor, stride: usize, padding: usize) -> Result<Self> {
        if weights.order() != 4 || weights.shape()[2] != weights.shape()[3] {
            return Err(Error::shape(format!(
                "conv kernel must be (C_out, C_in, k, k), got {:?}",
                weights.shape()
            )));
        }
        if bias.shape() != [weights.shape()[0]] {
            return Err(Error::shape("conv bias needs one entry per output channel"));
        }
        if stride == 0 {
            return Err(Error::shape("conv stride must be positive"));
        }
        Ok(Self {
            weights,
            bias,
            stride,
            padding,
        })
    }

    pub fn weights(&self) -> &DenseTensor {
        &self.weights
    }

    fn geometry(&self, shape: &[usize]) -> Result<Geometry> {
        let ws = self.weights.shape();
        if shape.len() != 4 || shape[1] != ws[1] {
            return Err(Error::shape(format!(
                "conv with {} input channels got {shape:?}",
                ws[1]
            )));
        }
        let k = ws[2];
        let (oh, ow) = match (
            out_size(shape[2], k, self.stride, self.padding),
            out_size(shape[3], k, self.stride, self.padding),
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::shape(format!(
                    "{k}x{k} kernel with padding {} does not fit {shape:?}",
                    self.padding
                )))
            }
        };
        Ok(Geometry {
            batch: shape[0],
            c_in: shape[1],
            h: shape[2],
            w: shape[3],
            c_out: ws[0],
            k,
            oh,
            ow,
        })
    }

    /// Input coordinate for output position `o` and kernel offset `t`, if it
    /// falls inside the unpadded input.
    fn source(&self, o: usize, t: usize, n: usize) -> Option<usize> {
        (o * self.stride + t).checked_sub(self.padding).filter(|&i| i < n)
    }
}

impl Layer for Conv2d {
    fn kind(&self) -> &'static str {
        "conv"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut full = vec![1];
        full.extend_from_slice(input);
        let g = self.geometry(&full)?;
        Ok(vec![g.c_out, g.oh, g.ow])
    }

    fn forward(&mut self, x: &DenseTensor, _phase: Phase) -> Result<DenseTensor> {
        let g = self.geometry(x.shape())?;
        let (xd, wd) = (x.data(), self.weights.data());
        let mut out = vec![0.0; g.batch * g.c_out * g.oh * g.ow];
        for b in 0..g.batch {
            for co in 0..g.c_out {
                let plane = &mut out[((b * g.c_out + co) * g.oh) * g.ow..((b * g.c_out + co + 1) * g.oh) * g.ow];
                plane.fill(self.bias.data()[co]);
                for ci in 0..g.c_in {
                    let xin = &xd[((b * g.c_in + ci) * g.h) * g.w..((b * g.c_in + ci + 1) * g.h) * g.w];
                    for ki in 0..g.k {
                        for kj in 0..g.k {
                            let wv = wd[((co * g.c_in + ci) * g.k + ki) * g.k + kj];
                            for oi in 0..g.oh {
                                let Some(i) = self.source(oi, ki, g.h) else { continue };
                                for oj in 0..g.ow {
                                    if let Some(j) = self.source(oj, kj, g.w) {
                                        plane[oi * g.ow + oj] += wv * xin[i * g.w + j];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        DenseTensor::new(vec![g.batch, g.c_out, g.oh, g.ow], out)
    }

    fn backward(&self, x: &DenseTensor, upstream: &DenseTensor) -> Result<LayerGrad> {
        let g = self.geometry(x.shape())?;
        if upstream.shape() != [g.batch, g.c_out, g.oh, g.ow] {
            return Err(Error::shape(format!(
                "conv upstream gradient must be {:?}, got {:?}",
                [g.batch, g.c_out, g.oh, g.ow],
                upstream.shape()
            )));
        }
        let (xd, wd, ud) = (x.data(), self.weights.data(), upstream.data());
        let mut dx = vec![0.0; xd.len()];
        let mut dw = vec![0.0; wd.len()];
        let mut db = vec![0.0; g.c_out];
        for b in 0..g.batch {
            for co in 0..g.c_out {
                let up = &ud[((b * g.c_out + co) * g.oh) * g.ow..((b * g.c_out + co + 1) * g.oh) * g.ow];
                db[co] += up.iter().sum::<f64>();
                for ci in 0..g.c_in {
                    let base = ((b * g.c_in + ci) * g.h) * g.w;
                    for ki in 0..g.k {
                        for kj in 0..g.k {
                            let widx = ((co * g.c_in + ci) * g.k + ki) * g.k + kj;
                            let wv = wd[widx];
                            let mut acc = 0.0;
                            for oi in 0..g.oh {
                                let Some(i) = self.source(oi, ki, g.h) else { continue };
                                for oj in 0..g.ow {
                                    if let Some(j) = self.source(oj, kj, g.w) {
                                        let u = up[oi * g.ow + oj];
                                        acc += u * xd[base + i * g.w + j];
                                        dx[base + i * g.w + j] += u * wv;
                                    }
                                }
                            }
                            dw[widx] += acc;
                        }
                    }
                }
            }
        }
        Ok(LayerGrad {
            input: DenseTensor::new(x.shape().to_vec(), dx)?,
            params: vec![
                DenseTensor::new(self.weights.shape().to_vec(), dw)?,
                DenseTensor::vector(db)?,
            ],
        })
    }

    fn params(&self) -> Vec<&DenseTensor> {
        vec![&self.weights, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut DenseTensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct definition with explicit zero padding.
    fn conv_oracle(x: &DenseTensor, w: &DenseTensor, b: &[f64], s: usize, p: usize) -> DenseTensor {
        let (n, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (co, k) = (w.shape()[0], w.shape()[2]);
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (wd + 2 * p - k) / s + 1;
        DenseTensor::from_fn(&[n, co, oh, ow], |i| {
            let mut acc = b[i[1]];
            for c in 0..ci {
                for a in 0..k {
                    for bb in 0..k {
                        let (r, q) = (
                            (i[2] * s + a) as isize - p as isize,
                            (i[3] * s + bb) as isize - p as isize,
                        );
                        if r >= 0 && q >= 0 && (r as usize) < h && (q as usize) < wd {
                            acc += w.get(&[i[1], c, a, bb]) * x.get(&[i[0], c, r as usize, q as usize]);
                        }
                    }
                }
            }
            acc
        })
        .unwrap()
    }

    #[test]
    fn matches_direct_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (s, p) in [(1, 0), (1, 1), (2, 1), (2, 0)] {
            let mut conv = Conv2d::new(2, 3, 3, s, p, &mut rng).unwrap();
            conv.bias = DenseTensor::vector(vec![0.1, -0.2, 0.3]).unwrap();
            let x = DenseTensor::random_normal(&[2, 2, 5, 5], 1.0, &mut rng);
            let y = conv.forward(&x, Phase::Train).unwrap();
            let o = conv_oracle(&x, &conv.weights, conv.bias.data(), s, p);
            assert_eq!(y.shape(), o.shape());
            assert!(y.max_abs_diff(&o) < 1e-12);
            assert_eq!(conv.output_shape(&[2, 5, 5]).unwrap(), y.shape()[1..].to_vec());
        }
    }

    #[test]
    fn one_by_one_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = DenseTensor::identity(3).reshape(vec![3, 3, 1, 1]).unwrap();
        let mut conv = Conv2d::from_parts(w, DenseTensor::zeros(&[3]), 1, 0).unwrap();
        let x = DenseTensor::random_normal(&[2, 3, 4, 4], 1.0, &mut rng);
        assert_eq!(conv.forward(&x, Phase::Train).unwrap(), x);
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut conv = Conv2d::new(2, 3, 5, 1, 0, &mut rng).unwrap();
        assert!(conv.forward(&DenseTensor::zeros(&[1, 2, 3, 3]), Phase::Train).is_err());
        assert!(conv.forward(&DenseTensor::zeros(&[1, 3, 6, 6]), Phase::Train).is_err());
        assert!(Conv2d::new(2, 3, 3, 0, 0, &mut rng).is_err());
    }
}
