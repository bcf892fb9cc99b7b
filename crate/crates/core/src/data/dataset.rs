use crate::error::{Error, Result};
use crate::nn::InputShape;

/// Samples stored channel-major (`N x C x H x W`) with pixel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f32>,
    labels: Vec<usize>,
    shape: InputShape,
    num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<f32>, labels: Vec<usize>, shape: InputShape, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Input("dataset must contain at least one sample".into()));
        }
        if inputs.len() != labels.len() * shape.len() {
            return Err(Error::dimension(
                "dataset inputs",
                labels.len() * shape.len(),
                inputs.len(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Input(format!("label {bad} outside [0, {num_classes})")));
        }
        if let Some(bad) = inputs.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("input value {bad} outside [0, 1]")));
        }
        Ok(Dataset {
            inputs,
            labels,
            shape,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> InputShape {
        self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn inputs(&self) -> &[f32] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.shape.len();
        &self.inputs[i * n..(i + 1) * n]
    }

    /// Contiguous inputs for samples `start..end`.
    pub fn input_range(&self, start: usize, end: usize) -> &[f32] {
        let n = self.shape.len();
        &self.inputs[start * n..end * n]
    }

    /// New dataset holding the given samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(Error::Input("subset must contain at least one sample".into()));
        }
        let mut inputs = Vec::with_capacity(indices.len() * self.shape.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Input(format!("sample index {i} out of range")));
            }
            inputs.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            inputs,
            labels,
            shape: self.shape,
            num_classes: self.num_classes,
        })
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Raise the class count, e.g. when a subset misses the top labels.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Dataset> {
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Input(format!("label {bad} outside [0, {num_classes})")));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    /// Average-pool each channel by `factor` (floor on the spatial size).
    pub fn downsample(&self, factor: usize) -> Result<Dataset> {
        if factor == 0 {
            return Err(Error::Input("downsample factor must be positive".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let InputShape {
            channels,
            height,
            width,
        } = self.shape;
        let (oh, ow) = (height / factor, width / factor);
        if oh == 0 || ow == 0 {
            return Err(Error::Input(format!(
                "cannot downsample {height}x{width} by {factor}"
            )));
        }
        let area = (factor * factor) as f64;
        let mut inputs = Vec::with_capacity(self.len() * channels * oh * ow);
        for i in 0..self.len() {
            let x = self.sample(i);
            for c in 0..channels {
                let plane = &x[c * height * width..(c + 1) * height * width];
                for y in 0..oh {
                    for xo in 0..ow {
                        let mut acc = 0.0f64;
                        for dy in 0..factor {
                            let row = (y * factor + dy) * width + xo * factor;
                            acc += plane[row..row + factor].iter().map(|&v| v as f64).sum::<f64>();
                        }
                        inputs.push(((acc / area) as f32).clamp(0.0, 1.0));
                    }
                }
            }
        }
        Ok(Dataset {
            inputs,
            labels: self.labels.clone(),
            shape: InputShape::new(channels, oh, ow),
            num_classes: self.num_classes,
        })
    }

    /// Count of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}
