mod common;

use common::{all_shapes, measured_macs, random, rng};
use rand::seq::SliceRandom;
use rand::Rng;
use tcl::analysis::{
    fc_flops, fc_param_count, reproduce_table, space_savings, tcl_flops, tcl_flops_best_order, tcl_flops_closed_form,
    tcl_param_count, CostReport,
};
use tcl::network::presets::{all_presets, preset};
use tcl::network::Network;
use tcl::tensor::contract_modes;

#[test]
fn flop_formula_equals_instrumented_execution() {
    let mut r = rng(11);
    let shapes = all_shapes();
    assert_eq!(shapes.len(), 8 + 64 + 512 + 4096);
    for dims in shapes {
        let ranks: Vec<usize> = dims.iter().map(|_| r.random_range(1..=8)).collect();
        let ascending: Vec<usize> = (1..=dims.len()).collect();
        let mut shuffled = ascending.clone();
        shuffled.shuffle(&mut r);
        for order in [&ascending, &shuffled] {
            let formula = tcl_flops(&dims, &ranks, order).unwrap();
            assert_eq!(
                formula,
                measured_macs(&dims, &ranks, order, 5),
                "{dims:?} {ranks:?} {order:?}"
            );
        }
        assert_eq!(
            tcl_flops(&dims, &ranks, &ascending).unwrap(),
            tcl_flops_closed_form(&dims, &ranks).unwrap()
        );
    }
}

#[test]
fn library_counter_agrees_with_naive_counter() {
    let dims = [8, 8, 8];
    let ranks = [2, 2, 2];
    let x = random(&dims, 1);
    let ms: Vec<_> = (0..3).map(|k| random(&[2, 8], 10 + k)).collect();
    let refs: Vec<_> = ms.iter().map(Some).collect();
    let mut macs = 0;
    contract_modes(&x, &refs, &[1, 2, 3], &mut macs).unwrap();
    assert_eq!(macs, measured_macs(&dims, &ranks, &[1, 2, 3], 1));
    assert_eq!(macs, 2 * 8 * 64 + 2 * 2 * 8 * 8 + 2 * 2 * 2 * 8);
}

#[test]
fn best_order_never_exceeds_ascending() {
    let mut r = rng(3);
    for _ in 0..300 {
        let n = r.random_range(1..=4);
        let dims: Vec<usize> = (0..n).map(|_| r.random_range(1..=8)).collect();
        let ranks: Vec<usize> = (0..n).map(|_| r.random_range(1..=8)).collect();
        let (order, best) = tcl_flops_best_order(&dims, &ranks).unwrap();
        assert!(best <= tcl_flops_closed_form(&dims, &ranks).unwrap());
        assert_eq!(best, tcl_flops(&dims, &ranks, &order).unwrap());
    }
}

#[test]
fn size_preserving_tcl_beats_equal_fc() {
    for dims in all_shapes() {
        let prod: usize = dims.iter().product();
        let sum: usize = dims.iter().sum();
        let tcl = tcl_flops_closed_form(&dims, &dims).unwrap();
        let fc = fc_flops(&dims, prod);
        if prod > sum {
            assert!(tcl < fc, "{dims:?}: {tcl} vs {fc}");
        }
        assert_eq!(tcl, sum as u64 * prod as u64);
    }
}

#[test]
fn headline_counts() {
    assert_eq!(fc_param_count(&[256, 7, 7], 4096, false), 51_380_224);
    assert_eq!(tcl_param_count(&[256, 7, 7], &[128, 5, 5]).unwrap(), 32_838);
    assert_eq!(tcl_param_count(&[256, 7, 7], &[256, 7, 7]).unwrap(), 65_634);
    assert_eq!(
        fc_param_count(&[9216], 4096, true) + fc_param_count(&[4096], 4096, true),
        54_534_144
    );
    assert_eq!(
        fc_param_count(&[25088], 4096, true) + fc_param_count(&[4096], 4096, true),
        119_545_856
    );
    assert_eq!(tcl_flops(&[2, 3], &[2, 3], &[1, 2]).unwrap(), 30);
    assert_eq!(fc_flops(&[2, 3], 6), 36);
}

#[test]
fn built_networks_match_closed_form_counts() {
    for p in all_presets() {
        let report = CostReport::from_config(&p.name, &p.config).unwrap();
        let net = Network::build(&p.config, 0).unwrap();
        assert_eq!(net.param_count() as u64, report.total_params, "{}", p.name);
        for (layer, cost) in net.modules().iter().zip(&report.layers) {
            assert_eq!(
                layer.layer().param_count() as u64,
                cost.params,
                "{} {}",
                p.name,
                cost.name
            );
        }
    }
}

#[test]
fn savings_against_self_is_zero() {
    for p in all_presets() {
        let r = CostReport::from_config(&p.name, &p.config).unwrap();
        assert_eq!(space_savings(&r, &r).unwrap(), 0.0);
    }
    let base = preset("alexnet-cifar-baseline").unwrap();
    let base = CostReport::from_config(&base.name, &base.config).unwrap();
    assert_eq!(base.fc_block_params, 2304 * 4096 + 4096 * 4096 + 4096 * 100);
}

#[test]
fn table_examples() {
    let t1 = reproduce_table(1).unwrap();
    let t2 = reproduce_table(2).unwrap();
    let find = |rows: &[tcl::analysis::TableRow], label: &str| {
        rows.iter()
            .find(|r| r.label == label)
            .unwrap_or_else(|| panic!("{label}"))
            .computed
    };
    assert!((find(&t1, "Added TCL (128,3,3) 2048/2048") - 74.49).abs() <= 0.005);
    assert!((find(&t2, "1 TCL substitution (512,3,3)/4096") - 45.8).abs() <= 0.005);
    assert!((find(&t1, "2 TCL substitutions (192,3,3)/(144,3,3)") - 99.22).abs() <= 0.005);
    assert!(reproduce_table(0).is_err());
}
