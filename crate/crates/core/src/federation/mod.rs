//! Federated training: aggregation, local SGD, and the round loop shared by
//! all strategies.

mod aggregate;
mod client;
mod run;

pub use aggregate::{client_weight, client_weights, fedavg, weight_sum};
pub use client::{local_train, sample_clients, ClientState, Hyperparams};
pub use run::{
    common_prefix_len, init_clients, run, run_clustered_fl, run_fedadp, run_fedavg, run_flexifed, run_standalone,
    ClientMetrics, GlobalMetrics, GroupModel, RoundMetrics, RunOutcome, Strategy,
};
