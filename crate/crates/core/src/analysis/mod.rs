//! Closed-form parameter and FLOP accounting.
//!
//! One FLOP is one scalar multiply-accumulate. Space savings compare the
//! "fully-connected block" of two networks: hidden FC weights, TCL factors
//! and classifier weights, all without biases. Convolution, batch-norm and
//! bias parameters appear in the per-layer totals but not in the block.

mod tables;

pub use tables::{reproduce_table, TableRow, TABLE_IDS};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::network::config::{LayerSpec, NetworkConfig};
use crate::tensor::check_permutation;

fn check_dims(dims: &[usize], ranks: &[usize]) -> Result<()> {
    if dims.len() != ranks.len() {
        return Err(Error::Config(format!(
            "{} input dims but {} ranks",
            dims.len(),
            ranks.len()
        )));
    }
    if dims.is_empty() || dims.contains(&0) || ranks.contains(&0) {
        return Err(Error::Config("dims and ranks must be positive".into()));
    }
    Ok(())
}

fn product(v: &[usize]) -> u64 {
    v.iter().map(|&d| d as u64).product()
}

/// `sum_k D_k * R_k`.
pub fn tcl_param_count(dims: &[usize], ranks: &[usize]) -> Result<u64> {
    check_dims(dims, ranks)?;
    Ok(dims.iter().zip(ranks).map(|(&d, &r)| (d * r) as u64).sum())
}

/// `H * prod_k D_k`, plus `H` bias terms when `with_bias`.
pub fn fc_param_count(dims: &[usize], hidden: usize, with_bias: bool) -> u64 {
    let h = hidden as u64;
    h * product(dims) + if with_bias { h } else { 0 }
}

/// Multiply-accumulates of a TCL whose mode products are applied in `order`
/// (1-based permutation). Mode `k`'s product costs `R_k * D_k` times the
/// current sizes of all other modes: ranks for modes already contracted,
/// input dims for the rest.
pub fn tcl_flops(dims: &[usize], ranks: &[usize], order: &[usize]) -> Result<u64> {
    check_dims(dims, ranks)?;
    check_permutation(order, dims.len())?;
    let mut current: Vec<u64> = dims.iter().map(|&d| d as u64).collect();
    let mut total = 0;
    for &mode in order {
        let k = mode - 1;
        let others: u64 = current
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, &v)| v)
            .product();
        total += ranks[k] as u64 * dims[k] as u64 * others;
        current[k] = ranks[k] as u64;
    }
    Ok(total)
}

/// Ascending-order cost in the summed form
/// `sum_k prod_{i<=k} R_i * prod_{j>=k} D_j`.
pub fn tcl_flops_closed_form(dims: &[usize], ranks: &[usize]) -> Result<u64> {
    check_dims(dims, ranks)?;
    Ok((0..dims.len())
        .map(|k| product(&ranks[..=k]) * product(&dims[k..]))
        .sum())
}

/// Cheapest application order and its cost. Exhaustive; intended for the
/// small orders that occur in practice.
pub fn tcl_flops_best_order(dims: &[usize], ranks: &[usize]) -> Result<(Vec<usize>, u64)> {
    check_dims(dims, ranks)?;
    let mut order: Vec<usize> = (1..=dims.len()).collect();
    let mut best = (order.clone(), tcl_flops(dims, ranks, &order)?);
    while next_permutation(&mut order) {
        let cost = tcl_flops(dims, ranks, &order)?;
        if cost < best.1 {
            best = (order.clone(), cost);
        }
    }
    Ok(best)
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len())
        .rev()
        .find(|&j| v[j] > v[i - 1])
        .expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// `H * prod_i D_i`.
pub fn fc_flops(dims: &[usize], hidden: usize) -> u64 {
    hidden as u64 * product(dims)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub kind: &'static str,
    pub params: u64,
    pub flops: u64,
    /// Share of `params` counted in the fully-connected block.
    pub fc_block_params: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub label: String,
    pub layers: Vec<LayerCost>,
    pub total_params: u64,
    pub total_flops: u64,
    pub fc_block_params: u64,
    /// Savings against `baseline`, when one was attached.
    pub savings: Option<(String, f64)>,
}

impl CostReport {
    pub fn from_config(label: &str, config: &NetworkConfig) -> Result<Self> {
        let mut layers = Vec::new();
        for layer in config.resolve()? {
            let input = &layer.input_shape;
            let out = &layer.output_shape;
            let (params, flops, block) = match &layer.spec {
                LayerSpec::Conv { kernel, .. } => {
                    let (c_out, c_in) = (out[0] as u64, input[0] as u64);
                    let w = c_out * c_in * (*kernel as u64).pow(2);
                    (w + c_out, w * out[1] as u64 * out[2] as u64, 0)
                }
                LayerSpec::BatchNorm => (2 * input[0] as u64, 0, 0),
                LayerSpec::Tcl { ranks } => {
                    let p = tcl_param_count(input, ranks)?;
                    let order: Vec<usize> = (1..=input.len()).collect();
                    (p, tcl_flops(input, ranks, &order)?, p)
                }
                LayerSpec::Fc { hidden: h } | LayerSpec::Classifier { classes: h } => (
                    fc_param_count(input, *h, true),
                    fc_flops(input, *h),
                    fc_param_count(input, *h, false),
                ),
                LayerSpec::MaxPool { .. } | LayerSpec::Relu | LayerSpec::Flatten => (0, 0, 0),
            };
            layers.push(LayerCost {
                name: layer.name,
                kind: layer.spec.kind(),
                params,
                flops,
                fc_block_params: block,
            });
        }
        Ok(Self {
            label: label.to_string(),
            total_params: layers.iter().map(|l| l.params).sum(),
            total_flops: layers.iter().map(|l| l.flops).sum(),
            fc_block_params: layers.iter().map(|l| l.fc_block_params).sum(),
            layers,
            savings: None,
        })
    }

    pub fn with_savings_against(mut self, baseline: &CostReport) -> Result<Self> {
        let s = space_savings(baseline, &self)?;
        self.savings = Some((baseline.label.clone(), s));
        Ok(self)
    }

    /// One `layer` record per layer, then `total` and, if attached, `savings`.
    pub fn to_records(&self) -> String {
        let mut s = String::new();
        for l in &self.layers {
            let _ = writeln!(
                s,
                "layer name={} kind={} params={} flops={} fc_block_params={}",
                l.name, l.kind, l.params, l.flops, l.fc_block_params
            );
        }
        let _ = writeln!(
            s,
            "total label={} params={} flops={} fc_block_params={}",
            self.label, self.total_params, self.total_flops, self.fc_block_params
        );
        if let Some((base, v)) = &self.savings {
            let _ = writeln!(s, "savings baseline={base} fraction={v:.16e} percent={:.2}%", 100.0 * v);
        }
        s
    }
}

/// `1 - n_modified / n_baseline` over fully-connected-block parameters.
pub fn space_savings(baseline: &CostReport, modified: &CostReport) -> Result<f64> {
    if baseline.fc_block_params == 0 {
        return Err(Error::UndefinedBaseline);
    }
    Ok(1.0 - modified.fc_block_params as f64 / baseline.fc_block_params as f64)
}
