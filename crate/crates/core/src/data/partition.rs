use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Redraws allowed when a label-skew draw leaves some client empty.
pub const MAX_SKEW_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionScheme {
    Iid,
    /// Per-class client proportions drawn from a symmetric Dirichlet.
    LabelSkew { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpec {
    pub scheme: PartitionScheme,
    pub num_clients: usize,
    pub seed: u64,
}

/// Client shards as index lists into `ds`, each sorted ascending.
pub fn partition_indices(ds: &Dataset, spec: &PartitionSpec) -> Result<Vec<Vec<usize>>> {
    let k = spec.num_clients;
    if k == 0 {
        return Err(Error::config("partition.num_clients", "must be at least 1"));
    }
    if k > ds.len() {
        return Err(Error::Input(format!("{k} clients but only {} samples", ds.len())));
    }
    let mut rng = seed::rng(spec.seed);
    let mut shards = match spec.scheme {
        PartitionScheme::Iid => {
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut rng);
            let (base, extra) = (ds.len() / k, ds.len() % k);
            let mut start = 0;
            (0..k)
                .map(|c| {
                    let size = base + usize::from(c < extra);
                    let shard = order[start..start + size].to_vec();
                    start += size;
                    shard
                })
                .collect()
        }
        PartitionScheme::LabelSkew { alpha } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::config("partition.alpha", format!("must be positive, got {alpha}")));
            }
            let gamma = Gamma::new(alpha, 1.0).unwrap();
            let mut by_class = vec![Vec::new(); ds.num_classes()];
            for (i, &l) in ds.labels().iter().enumerate() {
                by_class[l].push(i);
            }
            let mut attempt = 0;
            loop {
                if attempt == MAX_SKEW_RETRIES {
                    return Err(Error::config(
                        "partition.alpha",
                        format!("no label-skew draw gave every client a sample after {MAX_SKEW_RETRIES} tries"),
                    ));
                }
                attempt += 1;
                let mut shards = vec![Vec::new(); k];
                for members in &by_class {
                    let mut members = members.clone();
                    members.shuffle(&mut rng);
                    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
                    let total: f64 = draws.iter().sum();
                    let mut cum = 0.0;
                    let mut start = 0;
                    for (c, d) in draws.iter().enumerate() {
                        cum += d;
                        let end = if c + 1 == k || total == 0.0 {
                            members.len()
                        } else {
                            ((cum / total) * members.len() as f64).round() as usize
                        }
                        .clamp(start, members.len());
                        shards[c].extend_from_slice(&members[start..end]);
                        start = end;
                    }
                }
                if shards.iter().all(|s| !s.is_empty()) {
                    break shards;
                }
            }
        }
    };
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(shards)
}

pub fn partition(ds: &Dataset, spec: &PartitionSpec) -> Result<Vec<Dataset>> {
    partition_indices(ds, spec)?.iter().map(|idx| ds.subset(idx)).collect()
}

/// Size of a per-round subsample: `max(1, round(fraction * n))`.
pub fn subsample_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n)
}

/// Seeded sample without replacement, in shuffled order: with `fraction = 1`
/// this is a permutation of the shard.
pub fn round_subsample_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    order.truncate(subsample_size(n, fraction));
    order
}

pub fn round_subsample(shard: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Input(format!("subsample fraction {fraction} outside (0, 1]")));
    }
    shard.subset(&round_subsample_indices(shard.len(), fraction, seed))
}
