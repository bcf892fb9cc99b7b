use rand_distr::{Distribution, StandardNormal};

use super::arch::{Activation, ArchitectureSpec, LayerKind, KERNEL_AREA};
use crate::error::{Error, Result};
use crate::seed;

/// Weights and bias of one Dense or Conv2D layer.
///
/// Dense weights are row-major `out x in`; convolution weights are
/// `out_ch x in_ch x 3 x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Parameters of a network, one [`LayerParams`] per parametric layer of `arch`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: ArchitectureSpec,
    layers: Vec<LayerParams>,
}

impl ModelParams {
    pub fn new(arch: ArchitectureSpec, layers: Vec<LayerParams>) -> Result<Self> {
        check_shapes(&arch, &layers)?;
        for (slot, p) in layers.iter().enumerate() {
            if !p.weight.iter().chain(&p.bias).all(|v| v.is_finite()) {
                return Err(Error::Input(format!("parametric layer {slot} has non-finite values")));
            }
        }
        Ok(ModelParams { arch, layers })
    }

    /// All-zero weights and biases.
    pub fn zeros(arch: ArchitectureSpec) -> Self {
        let layers = arch
            .layers()
            .iter()
            .filter(|l| l.is_parametric())
            .map(|l| LayerParams {
                weight: vec![0.0; l.weight_len()],
                bias: vec![0.0; l.out_dim().unwrap()],
            })
            .collect();
        ModelParams { arch, layers }
    }

    pub(crate) fn from_parts_unchecked(arch: ArchitectureSpec, layers: Vec<LayerParams>) -> Self {
        debug_assert!(check_shapes(&arch, &layers).is_ok());
        ModelParams { arch, layers }
    }

    pub fn arch(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn layer_params(&self) -> &[LayerParams] {
        &self.layers
    }

    pub(crate) fn layer_params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    /// Parameters of the layer at `layer_index` in `arch().layers()`.
    pub fn params_for(&self, layer_index: usize) -> Option<&LayerParams> {
        self.arch.param_slot(layer_index).map(|s| &self.layers[s])
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// All parameters flattened in layer order, weights before biases.
    pub fn flat(&self) -> Vec<f32> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }
}

fn check_shapes(arch: &ArchitectureSpec, layers: &[LayerParams]) -> Result<()> {
    let specs: Vec<_> = arch.layers().iter().filter(|l| l.is_parametric()).collect();
    if specs.len() != layers.len() {
        return Err(Error::dimension("parametric layer count", specs.len(), layers.len()));
    }
    for (slot, (spec, p)) in specs.iter().zip(layers).enumerate() {
        if p.weight.len() != spec.weight_len() {
            return Err(Error::dimension(
                format!("weight of parametric layer {slot}"),
                spec.weight_len(),
                p.weight.len(),
            ));
        }
        let out = spec.out_dim().unwrap();
        if p.bias.len() != out {
            return Err(Error::dimension(format!("bias of parametric layer {slot}"), out, p.bias.len()));
        }
    }
    Ok(())
}

/// He-normal weights (std `sqrt(2 / fan_in)`) for ReLU layers, Xavier-normal
/// (std `sqrt(2 / (fan_in + fan_out))`) for layers without activation, zero
/// biases. Deterministic in `(arch, seed)`.
pub fn init_model(arch: &ArchitectureSpec, seed: u64) -> ModelParams {
    let mut rng = seed::rng(seed);
    let layers = arch
        .layers()
        .iter()
        .filter(|l| l.is_parametric())
        .map(|l| {
            let out = l.out_dim().unwrap();
            let area = match l.kind {
                LayerKind::Conv2d { .. } => KERNEL_AREA,
                _ => 1,
            };
            let fan_in = (l.in_dim().unwrap() * area) as f64;
            let fan_out = (out * area) as f64;
            let std = match l.activation {
                Activation::Relu => (2.0 / fan_in).sqrt(),
                Activation::Identity => (2.0 / (fan_in + fan_out)).sqrt(),
            };
            let weight = (0..l.weight_len())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (z * std) as f32
                })
                .collect();
            LayerParams {
                weight,
                bias: vec![0.0; out],
            }
        })
        .collect();
    ModelParams::from_parts_unchecked(arch.clone(), layers)
}

/// Gradient of the loss with respect to every parameter, shaped like
/// [`ModelParams::layer_params`]. Kept in 64-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelParams) -> Self {
        Gradients {
            layers: model
                .layer_params()
                .iter()
                .map(|l| LayerGrads {
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn matches_shape(&self, model: &ModelParams) -> bool {
        self.layers.len() == model.layer_params().len()
            && self
                .layers
                .iter()
                .zip(model.layer_params())
                .all(|(g, p)| g.weight.len() == p.weight.len() && g.bias.len() == p.bias.len())
    }
}
