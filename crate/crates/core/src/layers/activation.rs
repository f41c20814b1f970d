use super::{Layer, LayerGrad, Phase};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

#[derive(Clone, Copy, Debug, Default)]
pub struct Relu;

impl Layer for Relu {
    fn kind(&self) -> &'static str {
        "relu"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, x: &DenseTensor, _phase: Phase) -> Result<DenseTensor> {
        Ok(x.map(|v| v.max(0.0)))
    }

    fn backward(&self, x: &DenseTensor, upstream: &DenseTensor) -> Result<LayerGrad> {
        x.same_shape(upstream)?;
        let data = x
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(&v, &u)| if v > 0.0 { u } else { 0.0 })
            .collect();
        Ok(LayerGrad {
            input: DenseTensor::new(x.shape().to_vec(), data)?,
            params: Vec::new(),
        })
    }
}

/// Collapses every non-batch mode into one.
#[derive(Clone, Copy, Debug, Default)]
pub struct Flatten;

impl Layer for Flatten {
    fn kind(&self) -> &'static str {
        "flatten"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(vec![input.iter().product()])
    }

    fn forward(&mut self, x: &DenseTensor, _phase: Phase) -> Result<DenseTensor> {
        if x.order() < 2 {
            return Err(Error::shape(format!("flatten needs a batch mode, got {:?}", x.shape())));
        }
        let b = x.shape()[0];
        x.clone().reshape(vec![b, x.len() / b])
    }

    fn backward(&self, x: &DenseTensor, upstream: &DenseTensor) -> Result<LayerGrad> {
        if upstream.len() != x.len() {
            return Err(Error::shape("flatten upstream gradient size differs from input"));
        }
        Ok(LayerGrad {
            input: upstream.clone().reshape(x.shape().to_vec())?,
            params: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_masks_non_positive_inputs() {
        let x = DenseTensor::vector(vec![-1.0, 0.0, 2.0]).unwrap();
        let mut r = Relu;
        assert_eq!(r.forward(&x, Phase::Train).unwrap().data(), &[0.0, 0.0, 2.0]);
        let g = r
            .backward(&x, &DenseTensor::vector(vec![5.0, 5.0, 5.0]).unwrap())
            .unwrap();
        assert_eq!(g.input.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn flatten_roundtrip() {
        let x = DenseTensor::zeros(&[2, 3, 4]);
        let mut f = Flatten;
        let y = f.forward(&x, Phase::Train).unwrap();
        assert_eq!(y.shape(), &[2, 12]);
        assert_eq!(f.backward(&x, &y).unwrap().input.shape(), x.shape());
    }
}
