use crate::error::{Error, Result};
use crate::nn::{LayerParams, ModelParams};

/// Aggregation weight `n_k / n` of a client holding `n_k` of `n` samples.
pub fn client_weight(n_k: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Input("total sample count is zero".into()));
    }
    if n_k == 0 || n_k > n {
        return Err(Error::Input(format!("client sample count {n_k} outside 1..={n}")));
    }
    Ok(n_k as f64 / n as f64)
}

/// Weights `n_k / Σ n` for a list of sample counts.
pub fn client_weights(counts: &[usize]) -> Result<Vec<f64>> {
    let n = counts.iter().sum();
    counts.iter().map(|&c| client_weight(c, n)).collect()
}

/// Compensated (Neumaier) sum of aggregation weights.
pub fn weight_sum(weights: &[f64]) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for &w in weights {
        let t = sum + w;
        carry += if sum.abs() >= w.abs() { (sum - t) + w } else { (w - t) + sum };
        sum = t;
    }
    sum + carry
}

fn check_weights(count: usize, weights: &[f64]) -> Result<()> {
    if count == 0 {
        return Err(Error::Input("nothing to aggregate".into()));
    }
    if weights.len() != count {
        return Err(Error::dimension("aggregation weights", count, weights.len()));
    }
    let total = weight_sum(weights);
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("aggregation weights must be non-negative and sum to 1, got {total}")));
    }
    Ok(())
}

/// Weighted average of one parametric slot, accumulated in 64-bit in the
/// order given and stored in 32-bit.
pub(crate) fn average_slot(models: &[&ModelParams], weights: &[f64], slot: usize) -> LayerParams {
    let first = &models[0].layer_params()[slot];
    let mut weight = vec![0.0f64; first.weight.len()];
    let mut bias = vec![0.0f64; first.bias.len()];
    for (m, &w) in models.iter().zip(weights) {
        let p = &m.layer_params()[slot];
        for (acc, &v) in weight.iter_mut().zip(&p.weight) {
            *acc += w * v as f64;
        }
        for (acc, &v) in bias.iter_mut().zip(&p.bias) {
            *acc += w * v as f64;
        }
    }
    LayerParams {
        weight: weight.into_iter().map(|v| v as f32).collect(),
        bias: bias.into_iter().map(|v| v as f32).collect(),
    }
}

/// Federated averaging `Σ W_k ω_k`. Models are folded in the order given,
/// which callers keep ascending by client id.
pub fn fedavg(models: &[&ModelParams], weights: &[f64]) -> Result<ModelParams> {
    check_weights(models.len(), weights)?;
    let arch = models[0].arch();
    if let Some(k) = models.iter().position(|m| m.arch() != arch) {
        return Err(Error::Incompatible(format!(
            "model #{k} has architecture {} but model #0 has {arch}",
            models[k].arch()
        )));
    }
    let layers = (0..models[0].layer_params().len())
        .map(|slot| average_slot(models, weights, slot))
        .collect();
    Ok(ModelParams::from_parts_unchecked(arch.clone(), layers))
}
