//! Central finite-difference verification of analytic gradients.
//!
//! The checked loss is a random projection `L(x) = <P, f(x)>` with `P` drawn
//! from a seeded standard normal, so the upstream gradient handed to the
//! layer's backward pass is exactly `P`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    softmax_cross_entropy, BatchNorm, Conv2d, FactorInit, Flatten, Layer, Linear, MaxPool2d, Phase, Relu, TclLayer,
};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const FD_STEP: f64 = 1e-5;
/// Largest number of parameters a layer may have at check scale.
pub const MAX_CHECKED_PARAMS: usize = 10_000;
/// Gradient magnitudes below this are compared on an absolute scale: at step
/// `1e-5` the finite-difference round-off alone is around `1e-11 * |L|`.
pub const SCALE_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(SCALE_FLOOR)
}

/// Central-difference gradient of `f` at `point`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> Result<f64>, point: &[f64], step: f64) -> Result<Vec<f64>> {
    let mut p = point.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + step;
        let plus = f(&p)?;
        p[i] = orig - step;
        let minus = f(&p)?;
        p[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss while perturbing entry {i}")));
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Where the worst error occurred, e.g. `input[3]` or `param1[0]`.
    pub worst_entry: String,
    pub entries_checked: usize,
}

pub fn grad_check(layer: &mut dyn Layer, x: &DenseTensor, seed: u64) -> Result<f64> {
    grad_check_report(layer, x, seed).map(|r| r.max_relative_error)
}

pub fn grad_check_report(layer: &mut dyn Layer, x: &DenseTensor, seed: u64) -> Result<GradCheckReport> {
    let n_params = layer.param_count();
    if n_params > MAX_CHECKED_PARAMS {
        return Err(Error::Config(format!(
            "{} layer has {n_params} parameters; gradient checks are limited to {MAX_CHECKED_PARAMS}",
            layer.kind()
        )));
    }
    let y = layer.forward(x, Phase::Train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projection = DenseTensor::random_normal(y.shape(), 1.0, &mut rng);
    let analytic = layer.backward(x, &projection)?;
    if !analytic.all_finite() {
        return Err(Error::Numeric(format!(
            "{} backward produced non-finite values",
            layer.kind()
        )));
    }

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_entry: String::new(),
        entries_checked: 0,
    };
    let mut record = |name: &str, a: &[f64], n: &[f64]| {
        for (i, (&av, &nv)) in a.iter().zip(n).enumerate() {
            let e = relative_error(av, nv);
            if e > report.max_relative_error || report.worst_entry.is_empty() {
                report.max_relative_error = e;
                report.worst_entry = format!("{name}[{i}]");
            }
        }
        report.entries_checked += a.len();
    };

    let shape = x.shape().to_vec();
    let numeric_input = central_difference(
        |p| {
            let xp = DenseTensor::new(shape.clone(), p.to_vec())?;
            layer.forward(&xp, Phase::Train)?.dot(&projection)
        },
        x.data(),
        FD_STEP,
    )?;
    record("input", analytic.input.data(), &numeric_input);

    for (k, grad) in analytic.params.iter().enumerate() {
        let original = layer.params()[k].data().to_vec();
        let numeric = central_difference(
            |p| {
                layer.params_mut()[k].data_mut().copy_from_slice(p);
                layer.forward(x, Phase::Train)?.dot(&projection)
            },
            &original,
            FD_STEP,
        );
        layer.params_mut()[k].data_mut().copy_from_slice(&original);
        record(&format!("param{k}"), grad.data(), &numeric?);
    }
    Ok(report)
}

/// Tolerance for layers whose outputs are linear in every checked entry, and
/// for the softmax cross-entropy.
pub const TIGHT_TOLERANCE: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;

/// Result of checking one layer type.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteEntry {
    pub layer: &'static str,
    pub shape: Vec<usize>,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

/// Inputs bounded away from zero, so ReLU kinks stay out of the
/// finite-difference stencil.
fn away_from_zero(x: DenseTensor) -> DenseTensor {
    x.map(|v| if v >= 0.0 { v + 0.05 } else { v - 0.05 })
}

/// Distinct, well-separated values in random order, so every pooling window
/// has a unique maximum.
fn without_ties(shape: &[usize], rng: &mut ChaCha8Rng) -> Result<DenseTensor> {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.005 * n as f64).collect();
    values.shuffle(rng);
    DenseTensor::new(shape.to_vec(), values)
}

/// Worst relative error of the softmax cross-entropy gradient with respect
/// to the logits.
pub fn softmax_grad_check(logits: &DenseTensor, labels: &[usize]) -> Result<f64> {
    let (_, analytic) = softmax_cross_entropy(logits, labels)?;
    let shape = logits.shape().to_vec();
    let numeric = central_difference(
        |p| Ok(softmax_cross_entropy(&DenseTensor::new(shape.clone(), p.to_vec())?, labels)?.0),
        logits.data(),
        FD_STEP,
    )?;
    Ok(analytic
        .data()
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max))
}

/// Checks every layer type on small random shapes drawn from `seed`.
pub fn gradient_suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut run = |layer: &mut dyn Layer, x: DenseTensor, tolerance: f64, rng: &mut ChaCha8Rng| -> Result<()> {
        let check_seed = rng.random();
        out.push(SuiteEntry {
            layer: layer.kind(),
            shape: x.shape().to_vec(),
            max_relative_error: grad_check(layer, &x, check_seed)?,
            tolerance,
        });
        Ok(())
    };

    let mut tcl = TclLayer::new(&[3, 4, 4], &[2, 2, 2], FactorInit::Gaussian, &mut rng)?;
    let x = DenseTensor::random_normal(&[2, 3, 4, 4], 1.0, &mut rng);
    run(&mut tcl, x, TIGHT_TOLERANCE, &mut rng)?;

    let mut fc = Linear::new(6, 4, &mut rng);
    let x = DenseTensor::random_normal(&[3, 6], 1.0, &mut rng);
    run(&mut fc, x, TIGHT_TOLERANCE, &mut rng)?;

    let mut bn = BatchNorm::new(3);
    let gamma = DenseTensor::random_normal(&[3], 1.0, &mut rng);
    let beta = DenseTensor::random_normal(&[3], 1.0, &mut rng);
    bn.set_affine(gamma, beta)?;
    let x = DenseTensor::random_normal(&[4, 3, 2, 2], 1.0, &mut rng);
    run(&mut bn, x, TOLERANCE, &mut rng)?;

    let mut conv = Conv2d::new(2, 3, 3, 1, 1, &mut rng)?;
    let x = DenseTensor::random_normal(&[2, 2, 5, 5], 1.0, &mut rng);
    run(&mut conv, x, TOLERANCE, &mut rng)?;

    let mut pool = MaxPool2d::new(2)?;
    let x = without_ties(&[2, 2, 4, 4], &mut rng)?;
    run(&mut pool, x, TOLERANCE, &mut rng)?;

    let x = away_from_zero(DenseTensor::random_normal(&[3, 2, 3], 1.0, &mut rng));
    run(&mut Relu, x, TOLERANCE, &mut rng)?;

    let x = DenseTensor::random_normal(&[2, 2, 3], 1.0, &mut rng);
    run(&mut Flatten, x, TOLERANCE, &mut rng)?;

    let logits = DenseTensor::random_normal(&[4, 5], 2.0, &mut rng);
    let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..5)).collect();
    out.push(SuiteEntry {
        layer: "softmax",
        shape: vec![4, 5],
        max_relative_error: softmax_grad_check(&logits, &labels)?,
        tolerance: TIGHT_TOLERANCE,
    });
    Ok(out)
}
