//! Experiment configuration files.
//!
//! Configs are TOML. Top level: `strategy`, `seed`, optional `output` and
//! `wall_time`; sections `[dataset]`, `[partition]`, `[training]` and one
//! `[[clients]]` table per architecture group. See the README for every key.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::PartitionScheme;
use crate::error::{Error, Result};
use crate::federation::{Hyperparams, Strategy};
use crate::nn::{ArchitectureSpec, InputShape};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    /// Template-plus-noise data; the test split comes from the same templates.
    Synthetic {
        classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        shape: InputShape,
    },
    /// IDX files. Without test files the test split is the `test_limit`
    /// samples following the first `train_limit` training samples.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
        train_limit: Option<usize>,
        test_limit: Option<usize>,
        downsample: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientGroup {
    pub arch: ArchitectureSpec,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Record per-round wall time; off by default so output is reproducible.
    pub wall_time: bool,
    /// Label used to group runs in summaries.
    pub dataset_name: String,
    pub dataset: DatasetConfig,
    pub scheme: PartitionScheme,
    pub num_clients: usize,
    pub clients: Vec<ClientGroup>,
    pub training: Hyperparams,
}

impl ExperimentConfig {
    /// Architecture of every client, in client id order.
    pub fn client_archs(&self) -> Vec<ArchitectureSpec> {
        self.clients
            .iter()
            .flat_map(|g| std::iter::repeat_n(g.arch.clone(), g.count))
            .collect()
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            global_seed: self.seed,
            ..self.training.clone()
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    strategy: Option<String>,
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    wall_time: Option<bool>,
    dataset: Option<RawDataset>,
    partition: Option<RawPartition>,
    #[serde(default)]
    training: RawTraining,
    #[serde(default)]
    clients: Vec<RawClients>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    source: Option<String>,
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_per_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_per_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shape: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_images: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_images: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_labels: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_limit: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    downsample: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPartition {
    scheme: Option<String>,
    num_clients: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    rounds: Option<usize>,
    local_epochs: Option<usize>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    participation_rate: Option<f64>,
    data_fraction: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClients {
    arch: String,
    count: usize,
}

fn required<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(field, "missing required value"))
}

fn positive(v: Option<usize>, field: &str) -> Result<usize> {
    let v = required(v, field)?;
    if v == 0 {
        return Err(Error::config(field, "must be at least 1"));
    }
    Ok(v)
}

fn reject_extra<T>(v: &Option<T>, field: &str, source: &str) -> Result<()> {
    match v {
        Some(_) => Err(Error::config(field, format!("not used by the `{source}` source"))),
        None => Ok(()),
    }
}

fn validate(raw: RawConfig) -> Result<ExperimentConfig> {
    let strategy: Strategy = required(raw.strategy, "strategy")?.parse()?;
    let seed = raw.seed.unwrap_or(0);

    let ds = required(raw.dataset, "dataset")?;
    let source = required(ds.source, "dataset.source")?;
    let dataset = match source.as_str() {
        "synthetic" => {
            for (v, f) in [
                (&ds.train_images, "dataset.train_images"),
                (&ds.train_labels, "dataset.train_labels"),
                (&ds.test_images, "dataset.test_images"),
                (&ds.test_labels, "dataset.test_labels"),
            ] {
                reject_extra(v, f, "synthetic")?;
            }
            for (v, f) in [
                (&ds.train_limit, "dataset.train_limit"),
                (&ds.test_limit, "dataset.test_limit"),
                (&ds.downsample, "dataset.downsample"),
            ] {
                reject_extra(v, f, "synthetic")?;
            }
            let shape: InputShape = required(ds.shape, "dataset.shape")?
                .parse()
                .map_err(|e: Error| Error::config("dataset.shape", e.to_string()))?;
            if shape.is_empty() {
                return Err(Error::config("dataset.shape", "dimensions must be positive"));
            }
            let classes = positive(ds.classes, "dataset.classes")?;
            DatasetConfig::Synthetic {
                classes,
                train_per_class: positive(ds.train_per_class, "dataset.train_per_class")?,
                test_per_class: positive(ds.test_per_class, "dataset.test_per_class")?,
                shape,
            }
        }
        "idx" => {
            for (v, f) in [
                (&ds.classes, "dataset.classes"),
                (&ds.train_per_class, "dataset.train_per_class"),
                (&ds.test_per_class, "dataset.test_per_class"),
            ] {
                reject_extra(v, f, "idx")?;
            }
            reject_extra(&ds.shape, "dataset.shape", "idx")?;
            if ds.test_images.is_some() != ds.test_labels.is_some() {
                return Err(Error::config("dataset.test_labels", "test_images and test_labels go together"));
            }
            if ds.test_images.is_none() && (ds.train_limit.is_none() || ds.test_limit.is_none()) {
                return Err(Error::config(
                    "dataset.test_limit",
                    "without test files, train_limit and test_limit select disjoint splits and are required",
                ));
            }
            for (v, f) in [(ds.train_limit, "dataset.train_limit"), (ds.test_limit, "dataset.test_limit")] {
                if v == Some(0) {
                    return Err(Error::config(f, "must be at least 1"));
                }
            }
            let downsample = ds.downsample.unwrap_or(1);
            if downsample == 0 {
                return Err(Error::config("dataset.downsample", "must be at least 1"));
            }
            DatasetConfig::Idx {
                train_images: required(ds.train_images, "dataset.train_images")?,
                train_labels: required(ds.train_labels, "dataset.train_labels")?,
                test_images: ds.test_images,
                test_labels: ds.test_labels,
                train_limit: ds.train_limit,
                test_limit: ds.test_limit,
                downsample,
            }
        }
        other => {
            return Err(Error::config(
                "dataset.source",
                format!("unknown source `{other}`; expected one of synthetic, idx"),
            ))
        }
    };
    let dataset_name = ds.name.unwrap_or(source);

    let part = required(raw.partition, "partition")?;
    let num_clients = positive(part.num_clients, "partition.num_clients")?;
    let scheme = match part.scheme.as_deref().unwrap_or("iid") {
        "iid" => {
            reject_extra(&part.alpha, "partition.alpha", "iid")?;
            PartitionScheme::Iid
        }
        "label_skew" => {
            let alpha = required(part.alpha, "partition.alpha")?;
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::config("partition.alpha", format!("must be positive, got {alpha}")));
            }
            PartitionScheme::LabelSkew { alpha }
        }
        other => {
            return Err(Error::config(
                "partition.scheme",
                format!("unknown scheme `{other}`; expected one of iid, label_skew"),
            ))
        }
    };

    if raw.clients.is_empty() {
        return Err(Error::config("clients", "at least one [[clients]] entry is required"));
    }
    let mut clients = Vec::with_capacity(raw.clients.len());
    for (i, c) in raw.clients.into_iter().enumerate() {
        let arch: ArchitectureSpec =
            c.arch.parse().map_err(|e: Error| Error::config(format!("clients[{i}].arch"), e.to_string()))?;
        if c.count == 0 {
            return Err(Error::config(format!("clients[{i}].count"), "must be at least 1"));
        }
        clients.push(ClientGroup { arch, count: c.count });
    }
    let total: usize = clients.iter().map(|c| c.count).sum();
    if total != num_clients {
        return Err(Error::config(
            "clients",
            format!("client counts sum to {total} but partition.num_clients is {num_clients}"),
        ));
    }

    let defaults = Hyperparams::default();
    let t = raw.training;
    let training = Hyperparams {
        rounds: t.rounds.unwrap_or(defaults.rounds),
        local_epochs: t.local_epochs.unwrap_or(defaults.local_epochs),
        learning_rate: t.learning_rate.unwrap_or(defaults.learning_rate),
        batch_size: t.batch_size.unwrap_or(defaults.batch_size),
        participation_rate: t.participation_rate.unwrap_or(defaults.participation_rate),
        data_fraction: t.data_fraction.unwrap_or(defaults.data_fraction),
        global_seed: seed,
    };
    training.validate()?;

    Ok(ExperimentConfig {
        strategy,
        seed,
        output: raw.output,
        wall_time: raw.wall_time.unwrap_or(false),
        dataset_name,
        dataset,
        scheme,
        num_clients,
        clients,
        training,
    })
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::config("(file)", e.message().to_string()))?;
    validate(raw)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

/// Canonical TOML text with every default spelled out.
pub fn print_config(c: &ExperimentConfig) -> String {
    let mut ds = RawDataset {
        name: Some(c.dataset_name.clone()),
        ..RawDataset::default()
    };
    match &c.dataset {
        DatasetConfig::Synthetic {
            classes,
            train_per_class,
            test_per_class,
            shape,
        } => {
            ds.source = Some("synthetic".into());
            ds.classes = Some(*classes);
            ds.train_per_class = Some(*train_per_class);
            ds.test_per_class = Some(*test_per_class);
            ds.shape = Some(shape.to_string());
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
            ds.source = Some("idx".into());
            ds.train_images = Some(train_images.clone());
            ds.train_labels = Some(train_labels.clone());
            ds.test_images = test_images.clone();
            ds.test_labels = test_labels.clone();
            ds.train_limit = *train_limit;
            ds.test_limit = *test_limit;
            ds.downsample = Some(*downsample);
        }
    }
    let (scheme, alpha) = match c.scheme {
        PartitionScheme::Iid => ("iid", None),
        PartitionScheme::LabelSkew { alpha } => ("label_skew", Some(alpha)),
    };
    let t = &c.training;
    let raw = RawConfig {
        strategy: Some(c.strategy.to_string()),
        seed: Some(c.seed),
        output: c.output.clone(),
        wall_time: Some(c.wall_time),
        dataset: Some(ds),
        partition: Some(RawPartition {
            scheme: Some(scheme.into()),
            num_clients: Some(c.num_clients),
            alpha,
        }),
        training: RawTraining {
            rounds: Some(t.rounds),
            local_epochs: Some(t.local_epochs),
            learning_rate: Some(t.learning_rate),
            batch_size: Some(t.batch_size),
            participation_rate: Some(t.participation_rate),
            data_fraction: Some(t.data_fraction),
        },
        clients: c
            .clients
            .iter()
            .map(|g| RawClients {
                arch: g.arch.to_string(),
                count: g.count,
            })
            .collect(),
    };
    toml::to_string(&raw).expect("config serializes")
}
