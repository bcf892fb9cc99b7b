#![allow(dead_code)]

use fedmorph::nn::{init_model, ArchitectureSpec, InputShape, LayerParams, ModelParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    fedmorph::seed::rng(seed)
}

/// Widths for a random small architecture.
pub struct Shape {
    pub input: InputShape,
    pub classes: usize,
    pub stages: Vec<Vec<usize>>,
    pub head: Vec<usize>,
}

impl Shape {
    pub fn build(&self) -> ArchitectureSpec {
        ArchitectureSpec::from_widths(self.input, self.classes, &self.stages, &self.head).unwrap()
    }
}

pub fn random_shape(rng: &mut ChaCha8Rng) -> Shape {
    let n_stages = rng.random_range(0..=2);
    let side = [4, 6, 8][rng.random_range(0..3)];
    Shape {
        input: InputShape::new(rng.random_range(1..=3), side, side),
        classes: rng.random_range(2..=5),
        stages: (0..n_stages)
            .map(|_| (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=6)).collect())
            .collect(),
        head: (0..rng.random_range(0..=2)).map(|_| rng.random_range(1..=8)).collect(),
    }
}

/// Another random shape in the same frame (input, classes, stage count,
/// head emptiness) as `base`.
pub fn sibling_shape(base: &Shape, rng: &mut ChaCha8Rng) -> Shape {
    let head_len = if base.head.is_empty() { 0 } else { rng.random_range(1..=2) };
    Shape {
        input: base.input,
        classes: base.classes,
        stages: base
            .stages
            .iter()
            .map(|_| (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=6)).collect())
            .collect(),
        head: (0..head_len).map(|_| rng.random_range(1..=8)).collect(),
    }
}

/// He/Xavier weights from `init_model` plus N(0, 0.1) biases, so that ReLUs
/// are exercised on both sides of zero.
pub fn random_params(arch: &ArchitectureSpec, rng: &mut ChaCha8Rng) -> ModelParams {
    let base = init_model(arch, rng.random());
    let noise = Normal::new(0.0, 0.1).unwrap();
    let layers = base
        .layer_params()
        .iter()
        .map(|l| LayerParams {
            weight: l.weight.clone(),
            bias: l.bias.iter().map(|_| noise.sample(rng) as f32).collect(),
        })
        .collect();
    ModelParams::new(arch.clone(), layers).unwrap()
}

pub fn random_inputs(arch: &ArchitectureSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..n * arch.input_shape().len()).map(|_| rng.random::<f32>()).collect()
}

/// `max |a - b| / max |b|` over the whole output block.
pub fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

pub fn manifest_dir() -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn mnist_paths() -> (std::path::PathBuf, std::path::PathBuf) {
    let dir = manifest_dir().join("../../data/mnist");
    (
        dir.join("mnist10k-images-idx3-ubyte.gz"),
        dir.join("mnist10k-labels-idx1-ubyte.gz"),
    )
}
