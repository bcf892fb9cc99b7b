use std::sync::Arc;

use rand::seq::{index, SliceRandom};

use crate::data::{round_subsample_indices, Dataset};
use crate::error::{Error, Result};
use crate::nn::{apply_sgd, loss_and_backward, ArchitectureSpec, Batch, ModelParams};
use crate::seed::{self, Purpose};

/// Training hyperparameters shared by every strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub rounds: usize,
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub participation_rate: f64,
    /// Fraction of each shard used for local training in a round.
    pub data_fraction: f64,
    pub global_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            rounds: 30,
            local_epochs: 10,
            learning_rate: 0.01,
            batch_size: 64,
            participation_rate: 1.0,
            data_fraction: 0.2,
            global_seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if self.rounds == 0 {
            return Err(Error::config("training.rounds", "must be at least 1"));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("training.local_epochs", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("training.learning_rate", format!("must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("training.batch_size", "must be at least 1"));
        }
        if !unit(self.participation_rate) {
            return Err(Error::config(
                "training.participation_rate",
                format!("must be in (0, 1], got {}", self.participation_rate),
            ));
        }
        if !unit(self.data_fraction) {
            return Err(Error::config(
                "training.data_fraction",
                format!("must be in (0, 1], got {}", self.data_fraction),
            ));
        }
        Ok(())
    }
}

/// One federated client. `n_k` is the full shard size.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub arch: ArchitectureSpec,
    pub shard: Arc<Dataset>,
    pub n_k: usize,
    pub params: ModelParams,
}

impl ClientState {
    pub fn new(client_id: usize, shard: Arc<Dataset>, params: ModelParams) -> Self {
        ClientState {
            client_id,
            arch: params.arch().clone(),
            n_k: shard.len(),
            shard,
            params,
        }
    }
}

/// Run `E` epochs of mini-batch SGD on the round's subsample of the client's
/// shard, starting from `params`. Deterministic in
/// `(global_seed, round, client_id)`; `learning_rate` may be zero here.
pub fn local_train(client: &ClientState, params: &ModelParams, hp: &Hyperparams, round: u64) -> Result<ModelParams> {
    if params.arch() != &client.arch {
        return Err(Error::Incompatible(format!(
            "client {} trains {} but was handed {}",
            client.client_id,
            client.arch,
            params.arch()
        )));
    }
    if hp.batch_size == 0 {
        return Err(Error::config("training.batch_size", "must be at least 1"));
    }
    let id = client.client_id as u64;
    let mut order = round_subsample_indices(
        client.shard.len(),
        hp.data_fraction,
        seed::derive_seed(hp.global_seed, Purpose::Subsample, round, id),
    );
    let mut rng = seed::rng(seed::derive_seed(hp.global_seed, Purpose::Shuffle, round, id));
    let mut model = params.clone();
    for _ in 0..hp.local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hp.batch_size) {
            let batch = Batch::from_dataset(&client.shard, chunk);
            let (_, grads) = loss_and_backward(&model, &batch)?;
            apply_sgd(&mut model, &grads, hp.learning_rate)?;
        }
    }
    Ok(model)
}

/// Participant indices for a round, ascending. Rate 1 selects everyone;
/// otherwise `max(1, round(rate * K))` distinct clients.
pub fn sample_clients(num_clients: usize, rate: f64, round: u64, global_seed: u64) -> Vec<usize> {
    if rate >= 1.0 {
        return (0..num_clients).collect();
    }
    let m = ((rate * num_clients as f64).round() as usize).clamp(1, num_clients);
    let mut rng = seed::rng(seed::derive_seed(global_seed, Purpose::ClientSampling, round, 0));
    let mut picked = index::sample(&mut rng, num_clients, m).into_vec();
    picked.sort_unstable();
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use crate::nn::{init_model, sgd_step, InputShape};

    fn client() -> ClientState {
        let arch: ArchitectureSpec = "in=1x4x4 classes=3 stages=[c2] head=[d4]".parse().unwrap();
        let shard = Arc::new(gen_synthetic(3, 10, InputShape::new(1, 4, 4), 1));
        ClientState::new(3, shard, init_model(&arch, 2))
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let c = client();
        let hp = Hyperparams {
            learning_rate: 0.0,
            local_epochs: 3,
            batch_size: 4,
            ..Hyperparams::default()
        };
        assert_eq!(local_train(&c, &c.params, &hp, 1).unwrap(), c.params);
    }

    #[test]
    fn single_sample_single_step() {
        let mut c = client();
        c.shard = Arc::new(c.shard.subset(&[4]).unwrap());
        c.n_k = 1;
        let hp = Hyperparams {
            learning_rate: 0.1,
            local_epochs: 1,
            batch_size: 1,
            data_fraction: 1.0,
            ..Hyperparams::default()
        };
        let trained = local_train(&c, &c.params, &hp, 2).unwrap();
        let (_, g) = loss_and_backward(&c.params, &Batch::from_dataset(&c.shard, &[0])).unwrap();
        assert_eq!(trained, sgd_step(&c.params, &g, 0.1).unwrap());
    }

    #[test]
    fn training_is_deterministic_and_moves() {
        let c = client();
        let hp = Hyperparams {
            local_epochs: 2,
            batch_size: 2,
            learning_rate: 0.05,
            ..Hyperparams::default()
        };
        let a = local_train(&c, &c.params, &hp, 1).unwrap();
        assert_eq!(a, local_train(&c, &c.params, &hp, 1).unwrap());
        assert_ne!(a, c.params);
        assert_ne!(a, local_train(&c, &c.params, &hp, 2).unwrap());
    }

    #[test]
    fn client_sampling() {
        assert_eq!(sample_clients(5, 1.0, 3, 1), vec![0, 1, 2, 3, 4]);
        let half = sample_clients(20, 0.5, 3, 1);
        assert_eq!(half.len(), 10);
        assert!(half.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(half, sample_clients(20, 0.5, 3, 1));
        assert_eq!(sample_clients(20, 0.01, 3, 1).len(), 1);
    }

    #[test]
    fn hyperparam_validation_names_fields() {
        let bad = Hyperparams {
            participation_rate: 0.0,
            ..Hyperparams::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "training.participation_rate"));
        assert!(Hyperparams::default().validate().is_ok());
    }
}
