use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::aggregate::{average_slot, client_weights, fedavg};
use super::client::{local_train, sample_clients, ClientState, Hyperparams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::netchange::{net_change, union_arch};
use crate::nn::{evaluate, init_model, ArchitectureSpec, ModelParams};
use crate::seed::{self, Purpose};

/// How client models are combined between rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Grow every local model to the union architecture, average, trim back.
    FedAdp,
    /// Plain averaging; every client must share one architecture.
    FedAvg,
    /// Average only within groups of identical architectures.
    ClusteredFl,
    /// Average the common layer prefix across everyone and the rest within
    /// architecture groups.
    FlexiFed,
    /// No exchange at all.
    Standalone,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::FedAdp,
        Strategy::FedAvg,
        Strategy::ClusteredFl,
        Strategy::FlexiFed,
        Strategy::Standalone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FedAdp => "fedadp",
            Strategy::FedAvg => "fedavg",
            Strategy::ClusteredFl => "clustered_fl",
            Strategy::FlexiFed => "flexifed",
            Strategy::Standalone => "standalone",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let valid: Vec<_> = Strategy::ALL.iter().map(|v| v.name()).collect();
            Error::config("strategy", format!("unknown strategy `{s}`; expected one of {}", valid.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientMetrics {
    pub client_id: usize,
    pub arch: ArchitectureSpec,
    pub accuracy: f64,
    pub loss: f64,
}

/// Test metrics of the aggregated model(s). With several group models the
/// values are the sample-weighted mean over groups that trained this round,
/// and `arch` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMetrics {
    pub arch: Option<ArchitectureSpec>,
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    /// 1-based round index.
    pub round: usize,
    /// Participants in ascending client id order, evaluated with their own
    /// freshly trained model.
    pub clients: Vec<ClientMetrics>,
    pub global: GlobalMetrics,
    pub wall_ms: f64,
}

/// A model shared by a group of clients at the end of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupModel {
    pub members: Vec<usize>,
    pub model: ModelParams,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: Vec<RoundMetrics>,
    pub groups: Vec<GroupModel>,
}

/// Clients with shards `shards[k]` and architectures `archs[k]`, initialized
/// by trimming one seeded union-architecture model to each architecture.
pub fn init_clients(shards: Vec<Arc<Dataset>>, archs: &[ArchitectureSpec], global_seed: u64) -> Result<Vec<ClientState>> {
    if shards.len() != archs.len() {
        return Err(Error::dimension("client architectures", shards.len(), archs.len()));
    }
    let union = union_arch(archs).map_err(|e| Error::config("clients", e.to_string()))?;
    let global = init_model(&union, seed::derive_seed(global_seed, Purpose::Init, 0, 0));
    shards
        .into_iter()
        .zip(archs)
        .enumerate()
        .map(|(k, (shard, arch))| {
            let params = net_change(&global, arch, seed::derive_seed(global_seed, Purpose::Distribute, 0, k as u64))?;
            Ok(ClientState::new(k, shard, params))
        })
        .collect()
}

/// Number of leading layers whose specs are identical across `archs`.
pub fn common_prefix_len(archs: &[&ArchitectureSpec]) -> usize {
    let first = archs[0].layers();
    (0..first.len())
        .take_while(|&i| archs.iter().all(|a| a.layers().get(i) == Some(&first[i])))
        .count()
}

struct Group {
    members: Vec<usize>,
    model: ModelParams,
}

fn group_by_arch(clients: &[ClientState]) -> Vec<Group> {
    let mut groups: Vec<Group> = Vec::new();
    for (i, c) in clients.iter().enumerate() {
        match groups.iter_mut().find(|g| g.model.arch() == &c.arch) {
            Some(g) => g.members.push(i),
            None => groups.push(Group {
                members: vec![i],
                model: c.params.clone(),
            }),
        }
    }
    groups
}

fn initial_groups(strategy: Strategy, clients: &[ClientState], global_seed: u64) -> Result<Vec<Group>> {
    let everyone: Vec<usize> = (0..clients.len()).collect();
    Ok(match strategy {
        Strategy::FedAdp => {
            let archs: Vec<_> = clients.iter().map(|c| c.arch.clone()).collect();
            let union = union_arch(&archs).map_err(|e| Error::config("clients", e.to_string()))?;
            vec![Group {
                members: everyone,
                model: init_model(&union, seed::derive_seed(global_seed, Purpose::Init, 0, 0)),
            }]
        }
        Strategy::FedAvg => {
            if let Some(c) = clients.iter().find(|c| c.arch != clients[0].arch) {
                return Err(Error::config(
                    "clients",
                    format!("fedavg needs one architecture, client {} uses {}", c.client_id, c.arch),
                ));
            }
            vec![Group {
                members: everyone,
                model: clients[0].params.clone(),
            }]
        }
        Strategy::ClusteredFl | Strategy::FlexiFed => group_by_arch(clients),
        Strategy::Standalone => clients
            .iter()
            .enumerate()
            .map(|(i, c)| Group {
                members: vec![i],
                model: c.params.clone(),
            })
            .collect(),
    })
}

struct LocalResult {
    params: ModelParams,
    upload: Option<ModelParams>,
    metrics: ClientMetrics,
}

/// Run `strategy` for `hp.rounds` rounds, calling `observer` after each
/// round. Clients' `params` hold their latest local models afterwards.
///
/// Local training within a round runs on the rayon pool; aggregation folds
/// contributions in ascending client id order, so results do not depend on
/// the number of workers.
pub fn run(
    strategy: Strategy,
    clients: &mut [ClientState],
    hp: &Hyperparams,
    test_set: &Dataset,
    observer: &mut dyn FnMut(&RoundMetrics) -> Result<()>,
) -> Result<RunOutcome> {
    hp.validate()?;
    if clients.is_empty() {
        return Err(Error::config("clients", "at least one client is required"));
    }
    if let Some(w) = clients.windows(2).find(|w| w[0].client_id >= w[1].client_id) {
        return Err(Error::config(
            "clients",
            format!("client ids must be strictly ascending, found {} before {}", w[0].client_id, w[1].client_id),
        ));
    }
    if let Some(c) = clients.iter().find(|c| c.params.arch() != &c.arch || c.n_k != c.shard.len() || c.n_k == 0) {
        return Err(Error::config("clients", format!("client {} state is inconsistent", c.client_id)));
    }
    let mut groups = initial_groups(strategy, clients, hp.global_seed)?;
    let mut group_of = vec![0; clients.len()];
    for (g, group) in groups.iter().enumerate() {
        for &m in &group.members {
            group_of[m] = g;
        }
    }
    let prefix_slots = if strategy == Strategy::FlexiFed {
        let archs: Vec<_> = clients.iter().map(|c| &c.arch).collect();
        let n = common_prefix_len(&archs);
        clients[0].arch.layers()[..n].iter().filter(|l| l.is_parametric()).count()
    } else {
        0
    };
    let union = groups[0].model.arch().clone();
    let gs = hp.global_seed;

    let mut metrics = Vec::with_capacity(hp.rounds);
    for round in 1..=hp.rounds {
        let started = Instant::now();
        let t = round as u64;
        let participants = sample_clients(clients.len(), hp.participation_rate, t, gs);

        let results: Vec<LocalResult> = {
            let (clients, groups) = (&*clients, &groups);
            participants
                .par_iter()
                .map(|&i| {
                    let c = &clients[i];
                    let id = c.client_id as u64;
                    let group_model = &groups[group_of[i]].model;
                    let start = match strategy {
                        Strategy::FedAdp => {
                            net_change(group_model, &c.arch, seed::derive_seed(gs, Purpose::Distribute, t, id))?
                        }
                        _ => group_model.clone(),
                    };
                    let params = local_train(c, &start, hp, t)?;
                    let eval = evaluate(&params, test_set)?;
                    let upload = match strategy {
                        Strategy::FedAdp => Some(net_change(&params, &union, seed::derive_seed(gs, Purpose::Upload, t, id))?),
                        _ => None,
                    };
                    Ok(LocalResult {
                        metrics: ClientMetrics {
                            client_id: c.client_id,
                            arch: c.arch.clone(),
                            accuracy: eval.accuracy,
                            loss: eval.mean_loss,
                        },
                        params,
                        upload,
                    })
                })
                .collect::<Result<_>>()?
        };

        // Aggregate within each group that had participants.
        let mut active = Vec::new();
        for (g, group) in groups.iter_mut().enumerate() {
            let local: Vec<usize> = (0..participants.len()).filter(|&p| group_of[participants[p]] == g).collect();
            if local.is_empty() {
                continue;
            }
            let models: Vec<&ModelParams> =
                local.iter().map(|&p| results[p].upload.as_ref().unwrap_or(&results[p].params)).collect();
            let counts: Vec<usize> = local.iter().map(|&p| clients[participants[p]].n_k).collect();
            group.model = fedavg(&models, &client_weights(&counts)?)?;
            active.push((g, counts.iter().sum::<usize>()));
        }
        if prefix_slots > 0 {
            let models: Vec<&ModelParams> = results.iter().map(|r| &r.params).collect();
            let counts: Vec<usize> = participants.iter().map(|&i| clients[i].n_k).collect();
            let weights = client_weights(&counts)?;
            for slot in 0..prefix_slots {
                let shared = average_slot(&models, &weights, slot);
                for group in groups.iter_mut() {
                    group.model.layer_params_mut()[slot] = shared.clone();
                }
            }
        }

        let client_metrics: Vec<ClientMetrics> = results.iter().map(|r| r.metrics.clone()).collect();
        let group_eval: Vec<(f64, f64)> = if strategy == Strategy::Standalone {
            active
                .iter()
                .map(|&(g, _)| {
                    let p = participants.iter().position(|&i| i == groups[g].members[0]).unwrap();
                    (client_metrics[p].accuracy, client_metrics[p].loss)
                })
                .collect()
        } else {
            active
                .par_iter()
                .map(|&(g, _)| evaluate(&groups[g].model, test_set).map(|e| (e.accuracy, e.mean_loss)))
                .collect::<Result<_>>()?
        };
        let total: usize = active.iter().map(|a| a.1).sum();
        let (mut accuracy, mut loss) = (0.0, 0.0);
        for (&(_, n_g), &(acc, l)) in active.iter().zip(&group_eval) {
            let w = n_g as f64 / total as f64;
            accuracy += w * acc;
            loss += w * l;
        }
        let global = GlobalMetrics {
            arch: (groups.len() == 1).then(|| groups[0].model.arch().clone()),
            accuracy,
            loss,
        };

        for (&i, r) in participants.iter().zip(results) {
            clients[i].params = r.params;
        }
        let record = RoundMetrics {
            round,
            clients: client_metrics,
            global,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        observer(&record)?;
        metrics.push(record);
    }
    let groups = groups
        .into_iter()
        .map(|g| GroupModel {
            members: g.members.iter().map(|&i| clients[i].client_id).collect(),
            model: g.model,
        })
        .collect();
    Ok(RunOutcome { metrics, groups })
}

fn quiet(_: &RoundMetrics) -> Result<()> {
    Ok(())
}

pub fn run_fedadp(clients: &mut [ClientState], hp: &Hyperparams, test_set: &Dataset) -> Result<RunOutcome> {
    run(Strategy::FedAdp, clients, hp, test_set, &mut quiet)
}

pub fn run_fedavg(clients: &mut [ClientState], hp: &Hyperparams, test_set: &Dataset) -> Result<RunOutcome> {
    run(Strategy::FedAvg, clients, hp, test_set, &mut quiet)
}

pub fn run_clustered_fl(clients: &mut [ClientState], hp: &Hyperparams, test_set: &Dataset) -> Result<RunOutcome> {
    run(Strategy::ClusteredFl, clients, hp, test_set, &mut quiet)
}

pub fn run_flexifed(clients: &mut [ClientState], hp: &Hyperparams, test_set: &Dataset) -> Result<RunOutcome> {
    run(Strategy::FlexiFed, clients, hp, test_set, &mut quiet)
}

pub fn run_standalone(clients: &mut [ClientState], hp: &Hyperparams, test_set: &Dataset) -> Result<RunOutcome> {
    run(Strategy::Standalone, clients, hp, test_set, &mut quiet)
}
