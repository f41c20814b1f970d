mod common;

use common::{mode_product_oracle, random, rel_diff, rng};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use tcl::layers::{FactorInit, Layer, Phase, TclLayer};
use tcl::tensor::{
    fold, kronecker_chain, mode_product, multi_mode_product, multi_mode_product_ordered, unfold, FactorSet,
    UnfoldedMatrix,
};
use tcl::DenseTensor;

const EQ4_TOLERANCE: f64 = 1e-10;
const ORDER_TOLERANCE: f64 = 1e-12;

fn shape(max_order: usize, max_dim: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..=max_dim, 1..=max_order)
}

fn dims_and_ranks(
    min_order: usize,
    max_order: usize,
    max_dim: usize,
) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    prop::collection::vec((1..=max_dim, 1..=max_dim), min_order..=max_order).prop_map(|v| v.into_iter().unzip())
}

fn factors_for(shape: &[usize], ranks: &[usize], seed: u64) -> FactorSet {
    let fs = shape
        .iter()
        .zip(ranks)
        .enumerate()
        .map(|(k, (&d, &r))| Some(random(&[r, d], seed.wrapping_add(1 + k as u64))))
        .collect();
    FactorSet::new(shape.to_vec(), fs).unwrap()
}

fn batched(batch: usize, dims: &[usize]) -> Vec<usize> {
    let mut s = vec![batch];
    s.extend_from_slice(dims);
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn unfold_fold_roundtrip(shape in shape(5, 6), seed in any::<u64>()) {
        let x = random(&shape, seed);
        for n in 1..=shape.len() {
            let u = unfold(&x, n).unwrap();
            prop_assert_eq!(u.rows() * u.cols(), x.len());
            prop_assert_eq!(&fold(&u).unwrap(), &x);
        }
    }

    #[test]
    fn unfold_only_permutes_entries(shape in shape(4, 5)) {
        let x = DenseTensor::from_fn(&shape, |i| i.iter().fold(0usize, |acc, &d| acc * 10 + d) as f64).unwrap();
        let mut all = x.data().to_vec();
        all.sort_by(f64::total_cmp);
        for n in 1..=shape.len() {
            let mut seen = unfold(&x, n).unwrap().data().to_vec();
            seen.sort_by(f64::total_cmp);
            prop_assert_eq!(&seen, &all);
        }
    }

    #[test]
    fn mode_product_matches_elementwise_oracle(shape in shape(4, 5), r in 1usize..5, seed in any::<u64>()) {
        let x = random(&shape, seed);
        for n in 1..=shape.len() {
            let m = random(&[r, shape[n - 1]], seed ^ n as u64);
            let got = mode_product(&x, &m, n).unwrap();
            prop_assert!(rel_diff(&got, &mode_product_oracle(&x, &m, n)) < 1e-13);
            let product = m.matmul(&unfold(&x, n).unwrap().to_matrix()).unwrap();
            let via_unfold = fold(&UnfoldedMatrix::from_matrix(product, n, got.shape()).unwrap()).unwrap();
            prop_assert_eq!(got, via_unfold);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matricized_tucker_identity((shape, ranks) in dims_and_ranks(3, 4, 5), seed in any::<u64>()) {
        let x = random(&shape, seed);
        let fs = factors_for(&shape, &ranks, seed);
        let g = multi_mode_product(&x, &fs).unwrap();
        for n in 1..=shape.len() {
            let others = (1..=shape.len()).filter(|&k| k != n).map(|k| fs.factor(k).unwrap());
            let kron = kronecker_chain(others).unwrap();
            let rhs = fs.factor(n).unwrap()
                .matmul(&unfold(&x, n).unwrap().to_matrix()).unwrap()
                .matmul(&kron.transpose().unwrap()).unwrap();
            let lhs = unfold(&g, n).unwrap().to_matrix();
            prop_assert!(rel_diff(&lhs, &rhs) < EQ4_TOLERANCE, "mode {}: {}", n, rel_diff(&lhs, &rhs));
        }
    }

    #[test]
    fn application_order_does_not_matter((shape, ranks) in dims_and_ranks(1, 4, 5), seed in any::<u64>(), perm_seed in any::<u64>()) {
        let x = random(&shape, seed);
        let fs = factors_for(&shape, &ranks, seed);
        let ascending = multi_mode_product(&x, &fs).unwrap();
        let mut order: Vec<usize> = (1..=shape.len()).collect();
        order.shuffle(&mut rng(perm_seed));
        let shuffled = multi_mode_product_ordered(&x, &fs, &order).unwrap();
        prop_assert!(rel_diff(&shuffled, &ascending) < ORDER_TOLERANCE);
    }

    #[test]
    fn contraction_is_linear((shape, ranks) in dims_and_ranks(1, 4, 5), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (x, y) = (random(&shape, seed), random(&shape, seed.wrapping_add(99)));
        let fs = factors_for(&shape, &ranks, seed);
        let lhs = multi_mode_product(&x.axpby(a, &y, b).unwrap(), &fs).unwrap();
        let rhs = multi_mode_product(&x, &fs).unwrap()
            .axpby(a, &multi_mode_product(&y, &fs).unwrap(), b).unwrap();
        prop_assert!(rel_diff(&lhs, &rhs) < ORDER_TOLERANCE);
    }

    #[test]
    fn tcl_forward_is_linear((dims, ranks) in dims_and_ranks(1, 3, 4), batch in 1usize..4, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut layer = TclLayer::new(&dims, &ranks, FactorInit::Gaussian, &mut rng(seed)).unwrap();
        let shape = batched(batch, &dims);
        let (x, y) = (random(&shape, seed ^ 1), random(&shape, seed ^ 2));
        let lhs = layer.forward(&x.axpby(a, &y, b).unwrap(), Phase::Train).unwrap();
        let fx = layer.forward(&x, Phase::Train).unwrap();
        let fy = layer.forward(&y, Phase::Train).unwrap();
        prop_assert!(rel_diff(&lhs, &fx.axpby(a, &fy, b).unwrap()) < ORDER_TOLERANCE);
    }

    #[test]
    fn identity_tcl_is_exact_identity(dims in shape(3, 5), batch in 1usize..4, seed in any::<u64>()) {
        let mut layer = TclLayer::new(&dims, &dims, FactorInit::Identity, &mut rng(0)).unwrap();
        let x = random(&batched(batch, &dims), seed);
        prop_assert_eq!(layer.forward(&x, Phase::Eval).unwrap(), x);
    }

    #[test]
    fn tcl_backward_routes_agree((dims, ranks) in dims_and_ranks(1, 3, 4), batch in 1usize..4, seed in any::<u64>()) {
        let layer = TclLayer::new(&dims, &ranks, FactorInit::Gaussian, &mut rng(seed)).unwrap();
        let x = random(&batched(batch, &dims), seed ^ 3);
        let up = random(&batched(batch, &ranks), seed ^ 4);
        let a = layer.backward(&x, &up).unwrap();
        let b = layer.backward_matricized(&x, &up).unwrap();
        prop_assert!(rel_diff(&a.input, &b.input) < EQ4_TOLERANCE);
        for (ga, gb) in a.params.iter().zip(&b.params) {
            prop_assert!(rel_diff(ga, gb) < EQ4_TOLERANCE);
        }
    }

    #[test]
    fn tcl_param_count_is_sum_of_products((dims, ranks) in dims_and_ranks(1, 4, 8)) {
        let layer = TclLayer::new(&dims, &ranks, FactorInit::Gaussian, &mut rng(0)).unwrap();
        let expected = tcl::analysis::tcl_param_count(&dims, &ranks).unwrap();
        prop_assert_eq!(layer.param_count() as u64, expected);
    }
}

#[test]
fn unfold_examples() {
    let x = DenseTensor::from_fn(&[2, 2, 2], |i| (i[0] * 4 + i[1] * 2 + i[2]) as f64).unwrap();
    assert_eq!(unfold(&x, 1).unwrap().data(), &[0., 1., 2., 3., 4., 5., 6., 7.]);
    assert_eq!(unfold(&x, 2).unwrap().data(), &[0., 1., 4., 5., 2., 3., 6., 7.]);
    let v = DenseTensor::vector(vec![1., 2., 3.]).unwrap();
    let u = unfold(&v, 1).unwrap();
    assert_eq!((u.rows(), u.cols()), (3, 1));
    assert!(unfold(&x, 0).is_err() && unfold(&x, 4).is_err());
}

#[test]
fn tcl_example_shapes() {
    let mut r = rng(0);
    let mut layer = TclLayer::from_factors(
        &[256, 3, 3],
        vec![
            random(&[128, 256], 1),
            DenseTensor::identity(3),
            DenseTensor::identity(3),
        ],
    )
    .unwrap();
    let x = random(&[1, 256, 3, 3], 2);
    assert_eq!(layer.forward(&x, Phase::Train).unwrap().shape(), &[1, 128, 3, 3]);

    let mut summing = TclLayer::from_factors(
        &[2, 2, 2],
        vec![
            DenseTensor::matrix(1, 2, vec![1.0, 1.0]).unwrap(),
            DenseTensor::identity(2),
            DenseTensor::identity(2),
        ],
    )
    .unwrap();
    let x = DenseTensor::from_fn(&[1, 2, 2, 2], |i| (i[1] * 4 + i[2] * 2 + i[3]) as f64).unwrap();
    let y = summing.forward(&x, Phase::Train).unwrap();
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert_eq!(y.data(), &[4.0, 6.0, 8.0, 10.0]);

    let layer = TclLayer::new(&[3, 4, 4], &[2, 2, 2], FactorInit::Gaussian, &mut r).unwrap();
    let g = layer
        .backward(&random(&[2, 3, 4, 4], 3), &DenseTensor::zeros(&[2, 2, 2, 2]))
        .unwrap();
    assert!(g.input.max_abs() == 0.0 && g.params.iter().all(|p| p.max_abs() == 0.0));
}
