use rand::Rng;

use super::{Layer, LayerGrad, Phase};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// `x · Wᵀ + b` for `x` of shape `(batch, D)`, `W` of shape `(H, D)`.
pub fn linear_forward(weights: &DenseTensor, bias: &DenseTensor, x: &DenseTensor) -> Result<DenseTensor> {
    let (h, d) = check(weights, bias)?;
    if x.order() != 2 || x.shape()[1] != d {
        return Err(Error::shape(format!(
            "linear layer with {d} inputs got {:?}",
            x.shape()
        )));
    }
    let batch = x.shape()[0];
    let w = weights.data();
    let mut out = vec![0.0; batch * h];
    for b in 0..batch {
        let row = &x.data()[b * d..(b + 1) * d];
        for j in 0..h {
            let wr = &w[j * d..(j + 1) * d];
            out[b * h + j] = bias.data()[j] + row.iter().zip(wr).map(|(a, c)| a * c).sum::<f64>();
        }
    }
    DenseTensor::matrix(batch, h, out)
}

/// Gradients `[dW, db]` and the input gradient for [`linear_forward`].
pub fn linear_backward(
    weights: &DenseTensor,
    bias: &DenseTensor,
    x: &DenseTensor,
    upstream: &DenseTensor,
) -> Result<LayerGrad> {
    let (h, d) = check(weights, bias)?;
    if x.order() != 2 || x.shape()[1] != d {
        return Err(Error::shape(format!(
            "linear layer with {d} inputs got {:?}",
            x.shape()
        )));
    }
    let batch = x.shape()[0];
    if upstream.shape() != [batch, h] {
        return Err(Error::shape(format!(
            "linear upstream gradient must be [{batch}, {h}], got {:?}",
            upstream.shape()
        )));
    }
    let dw = upstream.transpose()?.matmul(x)?;
    let mut db = vec![0.0; h];
    for row in upstream.data().chunks(h) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let dx = upstream.matmul(weights)?;
    Ok(LayerGrad {
        input: dx,
        params: vec![dw, DenseTensor::vector(db)?],
    })
}

fn check(weights: &DenseTensor, bias: &DenseTensor) -> Result<(usize, usize)> {
    if weights.order() != 2 || bias.shape() != [weights.shape()[0]] {
        return Err(Error::shape(format!(
            "linear weights {:?} and bias {:?} disagree",
            weights.shape(),
            bias.shape()
        )));
    }
    Ok((weights.shape()[0], weights.shape()[1]))
}

/// Fully-connected layer. Inputs of any order are flattened past the batch
/// mode, and the input gradient is returned in the original shape.
#[derive(Clone, Debug)]
pub struct Linear {
    weights: DenseTensor,
    bias: DenseTensor,
}

impl Linear {
    /// He-normal weights, zero bias.
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        Self {
            weights: DenseTensor::random_normal(&[outputs, inputs], std, rng),
            bias: DenseTensor::zeros(&[outputs]),
        }
    }

    pub fn from_parts(weights: DenseTensor, bias: DenseTensor) -> Result<Self> {
        check(&weights, &bias)?;
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &DenseTensor {
        &self.weights
    }

    pub fn bias(&self) -> &DenseTensor {
        &self.bias
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    fn flat(&self, x: &DenseTensor) -> Result<DenseTensor> {
        if x.order() < 2 {
            return Err(Error::shape(format!(
                "linear input needs a batch mode, got {:?}",
                x.shape()
            )));
        }
        let batch = x.shape()[0];
        x.clone().reshape(vec![batch, x.len() / batch])
    }
}

impl Layer for Linear {
    fn kind(&self) -> &'static str {
        "fc"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let n: usize = input.iter().product();
        if n != self.inputs() {
            return Err(Error::shape(format!(
                "linear layer with {} inputs cannot take {input:?}",
                self.inputs()
            )));
        }
        Ok(vec![self.outputs()])
    }

    fn forward(&mut self, x: &DenseTensor, _phase: Phase) -> Result<DenseTensor> {
        linear_forward(&self.weights, &self.bias, &self.flat(x)?)
    }

    fn backward(&self, x: &DenseTensor, upstream: &DenseTensor) -> Result<LayerGrad> {
        let mut g = linear_backward(&self.weights, &self.bias, &self.flat(x)?, upstream)?;
        g.input = g.input.reshape(x.shape().to_vec())?;
        Ok(g)
    }

    fn params(&self) -> Vec<&DenseTensor> {
        vec![&self.weights, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut DenseTensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}
