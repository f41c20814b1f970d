#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tcl::DenseTensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], seed: u64) -> DenseTensor {
    DenseTensor::random_normal(shape, 1.0, &mut rng(seed))
}

/// `max |a - b| / max |b|`, absolute when `b` is all zeros.
pub fn rel_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let scale = b.max_abs();
    let d = a.max_abs_diff(b);
    if scale > 0.0 {
        d / scale
    } else {
        d
    }
}

/// `sum_d m[r, d] * x[..., d, ...]`, entry by entry.
pub fn mode_product_oracle(x: &DenseTensor, m: &DenseTensor, mode: usize) -> DenseTensor {
    let n = mode - 1;
    let mut shape = x.shape().to_vec();
    shape[n] = m.shape()[0];
    DenseTensor::from_fn(&shape, |idx| {
        let mut src = idx.to_vec();
        (0..x.shape()[n])
            .map(|d| {
                src[n] = d;
                m.get(&[idx[n], d]) * x.get(&src)
            })
            .sum()
    })
    .unwrap()
}

/// Naive mode product that counts every multiply-accumulate it executes.
pub fn counting_mode_product(x: &DenseTensor, m: &DenseTensor, mode: usize, macs: &mut u64) -> DenseTensor {
    let n = mode - 1;
    let mut shape = x.shape().to_vec();
    shape[n] = m.shape()[0];
    DenseTensor::from_fn(&shape, |idx| {
        let mut src = idx.to_vec();
        let mut acc = 0.0;
        for d in 0..x.shape()[n] {
            src[n] = d;
            acc += m.get(&[idx[n], d]) * x.get(&src);
            *macs += 1;
        }
        acc
    })
    .unwrap()
}

/// Every shape of order 1 to 4 with dims in 1..=8.
pub fn all_shapes() -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..4 {
        frontier = frontier
            .iter()
            .flat_map(|s| (1..=8).map(move |d| [s.clone(), vec![d]].concat()))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

/// Executes the contraction with a naive counting mode product.
pub fn measured_macs(dims: &[usize], ranks: &[usize], order: &[usize], seed: u64) -> u64 {
    let mut x = random(dims, seed);
    let mut macs = 0;
    for &mode in order {
        let m = random(&[ranks[mode - 1], dims[mode - 1]], seed ^ mode as u64);
        x = counting_mode_product(&x, &m, mode, &mut macs);
    }
    macs
}
