//! The tensor contraction layer.
//!
//! For an activation of shape `(batch, D_1, ..., D_N)` the layer learns one
//! projection `V(k)` of shape `(R_k, D_k)` per non-batch mode and outputs the
//! core `X ×_2 V(1) ×_3 ... ×_{N+1} V(N)` of shape `(batch, R_1, ..., R_N)`.
//! The batch mode is never contracted.
//!
//! Two backward routes are provided. [`Layer::backward`] works entirely with
//! mode products; [`TclLayer::backward_matricized`] builds the unfolded
//! identity `G_[n] = V(n) X_[n] (⊗_{j≠n} V(j))ᵀ` with explicit Kronecker
//! chains. They share no code beyond the tensor primitives and are checked
//! against each other in tests.

use rand::Rng;

use super::{batch_shape, Layer, LayerGrad, Phase};
use crate::error::{Error, Result};
use crate::tensor::{contract_modes, fold, kronecker_chain, unfold, DenseTensor, FactorSet, UnfoldedMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorInit {
    /// Zero-mean Gaussian with standard deviation `sqrt(2 / (D_k + R_k))`.
    Gaussian,
    /// Identity factors; only valid when every `R_k == D_k`.
    Identity,
}

#[derive(Clone, Debug)]
pub struct TclLayer {
    input_dims: Vec<usize>,
    factors: Vec<DenseTensor>,
}

impl TclLayer {
    pub fn new<R: Rng + ?Sized>(input_dims: &[usize], ranks: &[usize], init: FactorInit, rng: &mut R) -> Result<Self> {
        if input_dims.len() != ranks.len() || input_dims.is_empty() {
            return Err(Error::Config(format!(
                "TCL ranks {ranks:?} do not match input dims {input_dims:?}"
            )));
        }
        if let Some(k) = ranks.iter().position(|&r| r == 0) {
            return Err(Error::Config(format!("TCL rank for mode {} is zero", k + 1)));
        }
        let factors = input_dims
            .iter()
            .zip(ranks)
            .map(|(&d, &r)| match init {
                FactorInit::Gaussian => {
                    let std = (2.0 / (d + r) as f64).sqrt();
                    Ok(DenseTensor::random_normal(&[r, d], std, rng))
                }
                FactorInit::Identity if r == d => Ok(DenseTensor::identity(d)),
                FactorInit::Identity => Err(Error::Config(format!(
                    "identity initialization needs ranks equal to input dims, got {ranks:?} for {input_dims:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_factors(input_dims, factors)
    }

    pub fn from_factors(input_dims: &[usize], factors: Vec<DenseTensor>) -> Result<Self> {
        if factors.len() != input_dims.len() {
            return Err(Error::shape(format!(
                "{} factors for {} contracted modes",
                factors.len(),
                input_dims.len()
            )));
        }
        for (k, (f, &d)) in factors.iter().zip(input_dims).enumerate() {
            if f.order() != 2 || f.shape()[1] != d {
                return Err(Error::shape(format!(
                    "factor for mode {} has shape {:?}, expected (R, {d})",
                    k + 1,
                    f.shape()
                )));
            }
        }
        Ok(Self {
            input_dims: input_dims.to_vec(),
            factors,
        })
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.shape()[0]).collect()
    }

    pub fn factors(&self) -> &[DenseTensor] {
        &self.factors
    }

    /// The full factor set for a given batch size, batch mode skipped.
    pub fn factor_set(&self, batch: usize) -> Result<FactorSet> {
        let mut fs = vec![None];
        fs.extend(self.factors.iter().cloned().map(Some));
        FactorSet::new(batch_shape(batch, &self.input_dims), fs)
    }

    fn check_input(&self, x: &DenseTensor) -> Result<usize> {
        if x.order() != self.input_dims.len() + 1 || x.shape()[1..] != self.input_dims[..] {
            return Err(Error::shape(format!(
                "TCL expects (batch, {:?}), got {:?}",
                self.input_dims,
                x.shape()
            )));
        }
        Ok(x.shape()[0])
    }

    fn check_upstream(&self, batch: usize, upstream: &DenseTensor) -> Result<()> {
        let expected = batch_shape(batch, &self.ranks());
        if upstream.shape() != expected {
            return Err(Error::shape(format!(
                "TCL upstream gradient must be {expected:?}, got {:?}",
                upstream.shape()
            )));
        }
        Ok(())
    }

    /// Contracts every non-batch mode except `skip` (1-based over the full
    /// tensor, 0 for none) with `factors`.
    fn contract_except(&self, x: &DenseTensor, factors: &[&DenseTensor], skip: usize) -> Result<DenseTensor> {
        let mut refs: Vec<Option<&DenseTensor>> = vec![None];
        for (k, f) in factors.iter().enumerate() {
            refs.push(if k + 2 == skip { None } else { Some(*f) });
        }
        let order: Vec<usize> = (1..=x.order()).collect();
        let mut macs = 0;
        contract_modes(x, &refs, &order, &mut macs)
    }

    /// The layer's forward map; identical in training and evaluation.
    pub fn contract(&self, x: &DenseTensor) -> Result<DenseTensor> {
        self.check_input(x)?;
        let refs: Vec<&DenseTensor> = self.factors.iter().collect();
        self.contract_except(x, &refs, 0)
    }

    /// Same gradients as [`Layer::backward`], computed from unfoldings and
    /// Kronecker chains instead of mode products.
    pub fn backward_matricized(&self, x: &DenseTensor, upstream: &DenseTensor) -> Result<LayerGrad> {
        let batch = self.check_input(x)?;
        self.check_upstream(batch, upstream)?;
        let eye = DenseTensor::identity(batch);
        let full_order = self.input_dims.len() + 1;

        // Chain over every full mode except `n`: identity on the batch mode.
        let chain = |n: usize| -> Result<DenseTensor> {
            let mats = (1..=full_order)
                .filter(|&j| j != n)
                .map(|j| if j == 1 { &eye } else { &self.factors[j - 2] });
            kronecker_chain(mats)
        };

        let mut params = Vec::with_capacity(self.factors.len());
        for (k, factor) in self.factors.iter().enumerate() {
            let n = k + 2;
            let k_chain = chain(n)?;
            let u_n = unfold(upstream, n)?.into_matrix();
            let x_n = unfold(x, n)?.into_matrix();
            // dL/dV(n) = U_[n] K X_[n]ᵀ
            let grad = u_n.matmul(&k_chain)?.matmul(&x_n.transpose()?)?;
            debug_assert_eq!(grad.shape(), factor.shape());
            params.push(grad);
        }

        // dL/dX_[2] = V(1)ᵀ U_[2] K, folded back along the first contracted mode.
        let k_chain = chain(2)?;
        let u_2 = unfold(upstream, 2)?.into_matrix();
        let dx2 = self.factors[0].transpose()?.matmul(&u_2)?.matmul(&k_chain)?;
        let input = fold(&UnfoldedMatrix::from_matrix(dx2, 2, x.shape())?)?;
        Ok(LayerGrad { input, params })
    }
}

impl Layer for TclLayer {
    fn kind(&self) -> &'static str {
        "tcl"
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input != self.input_dims {
            return Err(Error::shape(format!(
                "TCL built for {:?} cannot take {input:?}",
                self.input_dims
            )));
        }
        Ok(self.ranks())
    }

    fn forward(&mut self, x: &DenseTensor, _phase: Phase) -> Result<DenseTensor> {
        self.contract(x)
    }

    fn backward(&self, x: &DenseTensor, upstream: &DenseTensor) -> Result<LayerGrad> {
        let batch = self.check_input(x)?;
        self.check_upstream(batch, upstream)?;
        let refs: Vec<&DenseTensor> = self.factors.iter().collect();

        let mut params = Vec::with_capacity(self.factors.len());
        for k in 0..self.factors.len() {
            let n = k + 2;
            // x with every other mode already contracted: mode n still has size D_k.
            let partial = self.contract_except(x, &refs, n)?;
            let u_n = unfold(upstream, n)?.into_matrix();
            let p_n = unfold(&partial, n)?.into_matrix();
            params.push(u_n.matmul(&p_n.transpose()?)?);
        }

        let transposed = self
            .factors
            .iter()
            .map(DenseTensor::transpose)
            .collect::<Result<Vec<_>>>()?;
        let trefs: Vec<&DenseTensor> = transposed.iter().collect();
        let input = self.contract_except(upstream, &trefs, 0)?;
        Ok(LayerGrad { input, params })
    }

    fn params(&self) -> Vec<&DenseTensor> {
        self.factors.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut DenseTensor> {
        self.factors.iter_mut().collect()
    }
}
