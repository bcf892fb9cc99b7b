use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::nn::InputShape;
use crate::seed;

/// Per-sample noise added to the class template.
pub const SYNTHETIC_NOISE_STD: f64 = 0.25;

/// Gaussian-noise copies of one uniform random template per class, clamped
/// to `[0, 1]`. Sample `i` belongs to class `i % num_classes`, so classes are
/// exactly balanced.
///
/// # Panics
/// If any count is zero.
pub fn gen_synthetic(num_classes: usize, samples_per_class: usize, shape: InputShape, seed: u64) -> Dataset {
    assert!(num_classes > 0 && samples_per_class > 0 && !shape.is_empty());
    let mut rng = seed::rng(seed);
    let d = shape.len();
    let templates: Vec<f64> = (0..num_classes * d).map(|_| rng.random::<f64>()).collect();
    let noise = Normal::new(0.0, SYNTHETIC_NOISE_STD).unwrap();
    let n = num_classes * samples_per_class;
    let mut inputs = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % num_classes;
        let t = &templates[c * d..(c + 1) * d];
        inputs.extend(t.iter().map(|&v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32));
        labels.push(c);
    }
    Dataset::new(inputs, labels, shape, num_classes).expect("generated data is valid")
}

/// Recover the per-class templates used by [`gen_synthetic`] (they are the
/// first draws of the stream).
pub fn synthetic_templates(num_classes: usize, shape: InputShape, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed);
    (0..num_classes)
        .map(|_| (0..shape.len()).map(|_| rng.random::<f64>()).collect())
        .collect()
}
