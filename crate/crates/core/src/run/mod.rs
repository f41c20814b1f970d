//! Configured training runs and their output files.
//!
//! A run directory holds `manifest.txt` (the fully resolved configuration),
//! `metrics.txt` (one record per completed epoch), `timing.txt` (wall-clock
//! seconds per epoch) and `report.txt` (the parameter and FLOP report).

pub mod config;
pub mod metrics;

pub use config::{parse_key_values, DataSpec, RunManifest, KEYS, VERSION};
pub use metrics::{format_record, parse_record, read_metrics, MetricsWriter};

use std::fmt::Write as _;
use std::path::Path;

use crate::analysis::CostReport;
use crate::data::{load_idx, synth_dataset, Dataset, Split};
use crate::error::{Error, Result};
use crate::network::presets::preset;
use crate::network::{fit, EpochRecord, Network, Precision, TrainMetrics};

pub fn load_data(data: &DataSpec) -> Result<(Dataset, Dataset)> {
    match data {
        DataSpec::Synth(spec) => synth_dataset(spec),
        DataSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            classes,
        } => {
            let train = load_idx(train_images, train_labels, *classes, Split::Train)?;
            let classes = Some(classes.unwrap_or(train.num_classes()));
            let test = load_idx(test_images, test_labels, classes, Split::Test)?;
            Ok((train, test))
        }
    }
}

/// Builds the network and the (standardized, precision-rounded) datasets.
pub fn prepare(m: &RunManifest) -> Result<(Network, Dataset, Dataset)> {
    let (mut train, mut test) = load_data(&m.data)?;
    if train.sample_shape() != &m.network.input_shape[..] {
        return Err(Error::Config(format!(
            "network input {:?} does not match data samples {:?}",
            m.network.input_shape,
            train.sample_shape()
        )));
    }
    let classes = m.network.classes().unwrap_or(0);
    if classes != train.num_classes() {
        return Err(Error::Config(format!(
            "classifier has {classes} outputs but the data has {} classes",
            train.num_classes()
        )));
    }
    if m.standardize {
        let (mean, std) = (train.channel_mean().to_vec(), train.channel_std().to_vec());
        train = train.standardized(&mean, &std)?;
        test = test.standardized(&mean, &std)?;
    }
    let mut net = Network::build(&m.network, m.train.seed)?;
    if m.train.precision == Precision::F32 {
        train = train.round_to_f32();
        test = test.round_to_f32();
        net.round_params_to_f32();
    }
    Ok((net, train, test))
}

/// Cost report of the manifest's network, with savings against its preset's
/// baseline when there is one.
pub fn cost_report(m: &RunManifest) -> Result<CostReport> {
    let label = m.preset.clone().unwrap_or_else(|| "custom".into());
    let report = CostReport::from_config(&label, &m.network)?;
    let Some(p) = &m.preset else { return Ok(report) };
    let base = preset(&preset(p)?.baseline)?;
    let base_report = CostReport::from_config(&base.name, &base.config)?;
    report.with_savings_against(&base_report)
}

/// Runs `m`, writing the run directory as epochs complete. `on_epoch` sees
/// each record after it has been flushed to `metrics.txt`; an error from it
/// stops the run.
pub fn run_training_with(
    m: &RunManifest,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainMetrics> {
    let dir = &m.output_dir;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("manifest.txt"), m.to_text())?;
    let report_path = dir.join("report.txt");
    std::fs::write(&report_path, cost_report(m)?.to_records())?;

    let (mut net, train, test) = prepare(m)?;
    let mut metrics = MetricsWriter::create(&dir.join("metrics.txt"), m.wall_time)?;
    let mut timing = String::new();
    let records = fit(&mut net, &train, &test, &m.train, |r| {
        metrics.write(r)?;
        let _ = writeln!(timing, "epoch={} wall_seconds={:.6}", r.epoch, r.wall_seconds);
        std::fs::write(dir.join("timing.txt"), &timing)?;
        on_epoch(r)
    })?;
    Ok(TrainMetrics {
        records,
        param_report: Some(report_path),
    })
}

pub fn run_training(m: &RunManifest) -> Result<TrainMetrics> {
    run_training_with(m, |_| Ok(()))
}

/// Trains without touching the file system.
pub fn train_in_memory(m: &RunManifest) -> Result<Vec<EpochRecord>> {
    let (mut net, train, test) = prepare(m)?;
    fit(&mut net, &train, &test, &m.train, |_| Ok(()))
}

pub fn manifest_in(dir: &Path) -> Result<RunManifest> {
    RunManifest::load(&dir.join("manifest.txt"))
}
