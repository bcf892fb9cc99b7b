use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::config::{print_config, DatasetConfig, ExperimentConfig};
use crate::data::{gen_synthetic, load_idx, partition, Dataset, PartitionSpec};
use crate::error::{Error, Result};
use crate::federation::{init_clients, run, RoundMetrics};
use crate::seed::{derive_seed, Purpose};

/// Column names of the metrics CSV.
pub const CSV_HEADER: [&str; 7] = ["round", "scope", "client_id", "arch", "accuracy", "loss", "wall_ms"];

/// Best and final global accuracy of a finished run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub rounds: usize,
    pub best_accuracy: f64,
    pub best_round: usize,
    pub final_accuracy: f64,
}

/// Train and test sets described by the config.
pub fn load_datasets(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &config.dataset {
        DatasetConfig::Synthetic {
            classes,
            train_per_class,
            test_per_class,
            shape,
        } => {
            let all = gen_synthetic(
                *classes,
                train_per_class + test_per_class,
                *shape,
                derive_seed(config.seed, Purpose::Synthetic, 0, 0),
            );
            // Samples cycle through the classes, so both splits stay balanced.
            let cut = classes * train_per_class;
            let train: Vec<usize> = (0..cut).collect();
            let test: Vec<usize> = (cut..all.len()).collect();
            Ok((all.subset(&train)?, all.subset(&test)?))
        }
        DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_limit,
            test_limit,
            downsample,
        } => {
            let source = load_idx(train_images, train_labels)?;
            let (train, test) = match (test_images, test_labels) {
                (Some(ti), Some(tl)) => {
                    let train = match train_limit {
                        Some(n) => source.take(*n)?,
                        None => source,
                    };
                    let test = load_idx(ti, tl)?;
                    let test = match test_limit {
                        Some(n) => test.take(*n)?,
                        None => test,
                    };
                    (train, test)
                }
                _ => {
                    let (n_train, n_test) = (train_limit.unwrap(), test_limit.unwrap());
                    if n_train + n_test > source.len() {
                        return Err(Error::config(
                            "dataset.test_limit",
                            format!("{n_train} + {n_test} samples requested but the file holds {}", source.len()),
                        ));
                    }
                    let train: Vec<usize> = (0..n_train).collect();
                    let test: Vec<usize> = (n_train..n_train + n_test).collect();
                    (source.subset(&train)?, source.subset(&test)?)
                }
            };
            let classes = train.num_classes().max(test.num_classes());
            let (train, test) = (train.with_num_classes(classes)?, test.with_num_classes(classes)?);
            if *downsample > 1 {
                Ok((train.downsample(*downsample)?, test.downsample(*downsample)?))
            } else {
                Ok((train, test))
            }
        }
    }
}

fn csv_error(e: csv::Error, path: &Path) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn format_row(r: &RoundMetrics, wall_time: bool) -> Vec<[String; 7]> {
    let wall = if wall_time { format!("{:.3}", r.wall_ms) } else { String::new() };
    let mut rows: Vec<[String; 7]> = r
        .clients
        .iter()
        .map(|c| {
            [
                r.round.to_string(),
                "client".into(),
                c.client_id.to_string(),
                c.arch.to_string(),
                c.accuracy.to_string(),
                c.loss.to_string(),
                wall.clone(),
            ]
        })
        .collect();
    rows.push([
        r.round.to_string(),
        "global".into(),
        String::new(),
        r.global.arch.as_ref().map(ToString::to_string).unwrap_or_default(),
        r.global.accuracy.to_string(),
        r.global.loss.to_string(),
        wall,
    ]);
    rows
}

/// Run the configured experiment, streaming one CSV block per round to `out`.
///
/// Data is loaded and checked before `out` is created, so a bad config
/// leaves no file behind. Each round is flushed as soon as it completes.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let (train, test) = load_datasets(config)?;
    let archs = config.client_archs();
    for (i, g) in config.clients.iter().enumerate() {
        if g.arch.input_shape() != train.shape() || g.arch.num_classes() != train.num_classes() {
            return Err(Error::config(
                format!("clients[{i}].arch"),
                format!(
                    "expects {} inputs and {} classes but the data has {} and {}",
                    g.arch.input_shape(),
                    g.arch.num_classes(),
                    train.shape(),
                    train.num_classes()
                ),
            ));
        }
    }
    let shards = partition(
        &train,
        &PartitionSpec {
            scheme: config.scheme,
            num_clients: config.num_clients,
            seed: derive_seed(config.seed, Purpose::Partition, 0, 0),
        },
    )?;
    let mut clients = init_clients(shards.into_iter().map(Arc::new).collect(), &archs, config.seed)?;
    let hp = config.hyperparams();
    hp.validate()?;

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut sink = BufWriter::new(file);
    let digest = Sha256::digest(print_config(config).as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let meta = format!(
        "# fedmorph {}\n# config_sha256 {hex}\n# seed {}\n# strategy {}\n# dataset {}\n",
        env!("CARGO_PKG_VERSION"),
        config.seed,
        config.strategy,
        config.dataset_name
    );
    sink.write_all(meta.as_bytes()).map_err(|e| Error::io(out, e))?;
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(CSV_HEADER).map_err(|e| csv_error(e, out))?;
    writer.flush().map_err(|e| Error::io(out, e))?;

    let wall_time = config.wall_time;
    let outcome = run(config.strategy, &mut clients, &hp, &test, &mut |r: &RoundMetrics| {
        for row in format_row(r, wall_time) {
            writer.write_record(&row).map_err(|e| csv_error(e, out))?;
        }
        writer.flush().map_err(|e| Error::io(out, e))
    })?;

    let mut best = (f64::NEG_INFINITY, 0);
    for r in &outcome.metrics {
        if r.global.accuracy > best.0 {
            best = (r.global.accuracy, r.round);
        }
    }
    Ok(RunSummary {
        rounds: outcome.metrics.len(),
        best_accuracy: best.0,
        best_round: best.1,
        final_accuracy: outcome.metrics.last().map_or(0.0, |r| r.global.accuracy),
    })
}
