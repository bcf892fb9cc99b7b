//! Forward and backward passes, SGD, and evaluation.
//!
//! Parameters are stored as `f32`; every activation, gradient, and reduction
//! is computed in `f64`.

use super::arch::{Activation, FeatureShape, LayerKind, KERNEL, KERNEL_AREA};
use super::model::{Gradients, LayerGrads, ModelParams};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Row-major `batch x classes` network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub batch: usize,
    pub classes: usize,
    pub values: Vec<f64>,
}

impl Logits {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.classes..(i + 1) * self.classes]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `labels.len()` samples, each laid out as the architecture's input shape.
    pub inputs: Vec<f32>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_dataset(ds: &Dataset, indices: &[usize]) -> Batch {
        let mut inputs = Vec::with_capacity(indices.len() * ds.shape().len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(ds.sample(i));
            labels.push(ds.labels()[i]);
        }
        Batch { inputs, labels }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub correct: usize,
    pub total: usize,
}

/// Per-layer state kept for the backward pass.
struct Trace {
    /// `values[i]` is the input of layer `i`; the last entry is the logits.
    values: Vec<Vec<f64>>,
    /// im2col buffers of convolution layers, `batch x (in*9) x plane`.
    cols: Vec<Option<Vec<f64>>>,
    /// Flat argmax positions of pooling layers.
    pool_argmax: Vec<Option<Vec<usize>>>,
}

fn weights_f64(model: &ModelParams) -> Vec<(Vec<f64>, Vec<f64>)> {
    model
        .layer_params()
        .iter()
        .map(|l| {
            (
                l.weight.iter().map(|&v| v as f64).collect(),
                l.bias.iter().map(|&v| v as f64).collect(),
            )
        })
        .collect()
}

fn check_inputs(model: &ModelParams, inputs: &[f32]) -> Result<usize> {
    let per_sample = model.arch().input_shape().len();
    if inputs.is_empty() || inputs.len() % per_sample != 0 {
        return Err(Error::dimension(
            "forward inputs",
            format!("a positive multiple of {} ({})", per_sample, model.arch().input_shape()),
            inputs.len(),
        ));
    }
    Ok(inputs.len() / per_sample)
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn im2col(x: &[f64], channels: usize, h: usize, w: usize, col: &mut [f64]) {
    let plane = h * w;
    for c in 0..channels {
        let xc = &x[c * plane..(c + 1) * plane];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut col[(c * KERNEL_AREA + ky * KERNEL + kx) * plane..][..plane];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &xc[sy as usize * w..(sy as usize + 1) * w];
                    for (xo, d) in dst.iter_mut().enumerate() {
                        let sx = xo as isize + kx as isize - 1;
                        *d = if sx < 0 || sx >= w as isize { 0.0 } else { src[sx as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], channels: usize, h: usize, w: usize, dx: &mut [f64]) {
    let plane = h * w;
    for c in 0..channels {
        let dxc = &mut dx[c * plane..(c + 1) * plane];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &col[(c * KERNEL_AREA + ky * KERNEL + kx) * plane..][..plane];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let base = sy as usize * w;
                    for xo in 0..w {
                        let sx = xo as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            dxc[base + sx as usize] += row[y * w + xo];
                        }
                    }
                }
            }
        }
    }
}

fn run_forward(model: &ModelParams, inputs: &[f32], batch: usize, keep: bool) -> (Vec<f64>, Option<Trace>) {
    let arch = model.arch();
    let shapes = arch.feature_shapes();
    let params = weights_f64(model);
    let mut x: Vec<f64> = inputs.iter().map(|&v| v as f64).collect();
    let mut trace = keep.then(|| Trace {
        values: Vec::with_capacity(arch.layers().len() + 1),
        cols: Vec::with_capacity(arch.layers().len()),
        pool_argmax: Vec::with_capacity(arch.layers().len()),
    });
    let mut slot = 0;
    for (i, layer) in arch.layers().iter().enumerate() {
        let in_shape = shapes[i];
        let out_shape = shapes[i + 1];
        let mut col_keep = None;
        let mut argmax_keep = None;
        let mut y = match layer.kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
            } => {
                let (w, b) = &params[slot];
                slot += 1;
                let FeatureShape::Spatial { height, width, .. } = in_shape else {
                    unreachable!()
                };
                let plane = height * width;
                let k = in_channels * KERNEL_AREA;
                let mut out = vec![0.0; batch * out_channels * plane];
                let mut cols = if keep { vec![0.0; batch * k * plane] } else { Vec::new() };
                let mut scratch = vec![0.0; k * plane];
                for s in 0..batch {
                    let xs = &x[s * in_channels * plane..(s + 1) * in_channels * plane];
                    let col: &mut [f64] = if keep {
                        &mut cols[s * k * plane..(s + 1) * k * plane]
                    } else {
                        &mut scratch
                    };
                    im2col(xs, in_channels, height, width, col);
                    let os = &mut out[s * out_channels * plane..(s + 1) * out_channels * plane];
                    for o in 0..out_channels {
                        let row = &mut os[o * plane..(o + 1) * plane];
                        row.fill(b[o]);
                        let wo = &w[o * k..(o + 1) * k];
                        for (kk, &wv) in wo.iter().enumerate() {
                            axpy(row, wv, &col[kk * plane..(kk + 1) * plane]);
                        }
                    }
                }
                if keep {
                    col_keep = Some(cols);
                }
                out
            }
            LayerKind::Dense {
                in_features,
                out_features,
            } => {
                let (w, b) = &params[slot];
                slot += 1;
                let mut out = vec![0.0; batch * out_features];
                for s in 0..batch {
                    let xs = &x[s * in_features..(s + 1) * in_features];
                    for o in 0..out_features {
                        out[s * out_features + o] = b[o] + dot(&w[o * in_features..(o + 1) * in_features], xs);
                    }
                }
                out
            }
            LayerKind::MaxPool2d => {
                let FeatureShape::Spatial {
                    channels,
                    height,
                    width,
                } = in_shape
                else {
                    unreachable!()
                };
                let (oh, ow) = (height / 2, width / 2);
                let mut out = vec![0.0; batch * channels * oh * ow];
                let mut arg = vec![0usize; out.len()];
                for sc in 0..batch * channels {
                    let base = sc * height * width;
                    for y in 0..oh {
                        for xo in 0..ow {
                            let mut best = base + 2 * y * width + 2 * xo;
                            for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                let idx = base + (2 * y + dy) * width + 2 * xo + dx;
                                if x[idx] > x[best] {
                                    best = idx;
                                }
                            }
                            let o = sc * oh * ow + y * ow + xo;
                            out[o] = x[best];
                            arg[o] = best;
                        }
                    }
                }
                if keep {
                    argmax_keep = Some(arg);
                }
                out
            }
            LayerKind::Flatten => x.clone(),
        };
        debug_assert_eq!(y.len(), batch * out_shape.len());
        if layer.activation == Activation::Relu {
            for v in &mut y {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        if let Some(t) = trace.as_mut() {
            t.values.push(std::mem::replace(&mut x, y));
            t.cols.push(col_keep);
            t.pool_argmax.push(argmax_keep);
        } else {
            x = y;
        }
    }
    if let Some(t) = trace.as_mut() {
        t.values.push(x.clone());
    }
    (x, trace)
}

/// Network outputs for a batch of inputs laid out as `arch.input_shape()`.
pub fn forward(model: &ModelParams, inputs: &[f32]) -> Result<Logits> {
    let batch = check_inputs(model, inputs)?;
    let (values, _) = run_forward(model, inputs, batch, false);
    Ok(Logits {
        batch,
        classes: model.arch().num_classes(),
        values,
    })
}

/// Mean softmax cross-entropy over the batch and its per-sample losses.
fn cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut per = Vec::with_capacity(labels.len());
    for (s, &label) in labels.iter().enumerate() {
        let row = &logits[s * classes..(s + 1) * classes];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        let l = lse - row[label];
        per.push(l);
        total += l;
    }
    (total / labels.len() as f64, per)
}

fn check_batch(model: &ModelParams, batch: &Batch) -> Result<()> {
    let n = check_inputs(model, &batch.inputs)?;
    if n != batch.labels.len() {
        return Err(Error::dimension("batch labels", n, batch.labels.len()));
    }
    let classes = model.arch().num_classes();
    if let Some(&bad) = batch.labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Input(format!("label {bad} outside [0, {classes})")));
    }
    Ok(())
}

/// Mean cross-entropy loss of the batch under the model.
pub fn loss(model: &ModelParams, batch: &Batch) -> Result<f64> {
    check_batch(model, batch)?;
    let (logits, _) = run_forward(model, &batch.inputs, batch.labels.len(), false);
    Ok(cross_entropy(&logits, &batch.labels, model.arch().num_classes()).0)
}

/// Mean cross-entropy loss and its exact gradient.
pub fn loss_and_backward(model: &ModelParams, batch: &Batch) -> Result<(f64, Gradients)> {
    check_batch(model, batch)?;
    let arch = model.arch();
    let n = batch.labels.len();
    let classes = arch.num_classes();
    let (logits, trace) = run_forward(model, &batch.inputs, n, true);
    let trace = trace.expect("trace requested");
    let (loss, _) = cross_entropy(&logits, &batch.labels, classes);

    // d(mean CE)/d(logits) = (softmax - onehot) / n
    let mut grad = vec![0.0; n * classes];
    for s in 0..n {
        let row = &logits[s * classes..(s + 1) * classes];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        for c in 0..classes {
            let p = (row[c] - m).exp() / z;
            let target = if c == batch.labels[s] { 1.0 } else { 0.0 };
            grad[s * classes + c] = (p - target) / n as f64;
        }
    }

    let shapes = arch.feature_shapes();
    let params = weights_f64(model);
    let mut grads = Gradients::zeros_like(model);
    let mut slot = params.len();
    let first_parametric = arch.parametric_indices()[0];
    for i in (0..arch.layers().len()).rev() {
        let layer = arch.layers()[i];
        if layer.activation == Activation::Relu {
            let out = &trace.values[i + 1];
            for (g, &y) in grad.iter_mut().zip(out) {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let input = &trace.values[i];
        let need_dx = i > first_parametric;
        grad = match layer.kind {
            LayerKind::Dense {
                in_features,
                out_features,
            } => {
                slot -= 1;
                let (w, _) = &params[slot];
                let LayerGrads { weight: gw, bias: gb } = &mut grads.layers[slot];
                let mut dx = if need_dx { vec![0.0; n * in_features] } else { Vec::new() };
                for s in 0..n {
                    let xs = &input[s * in_features..(s + 1) * in_features];
                    for o in 0..out_features {
                        let g = grad[s * out_features + o];
                        if g == 0.0 {
                            continue;
                        }
                        gb[o] += g;
                        axpy(&mut gw[o * in_features..(o + 1) * in_features], g, xs);
                        if need_dx {
                            axpy(
                                &mut dx[s * in_features..(s + 1) * in_features],
                                g,
                                &w[o * in_features..(o + 1) * in_features],
                            );
                        }
                    }
                }
                dx
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
            } => {
                slot -= 1;
                let (w, _) = &params[slot];
                let FeatureShape::Spatial { height, width, .. } = shapes[i] else {
                    unreachable!()
                };
                let plane = height * width;
                let k = in_channels * KERNEL_AREA;
                let cols = trace.cols[i].as_ref().expect("conv trace");
                let LayerGrads { weight: gw, bias: gb } = &mut grads.layers[slot];
                let mut dx = if need_dx { vec![0.0; n * in_channels * plane] } else { Vec::new() };
                let mut dcol = vec![0.0; k * plane];
                for s in 0..n {
                    let col = &cols[s * k * plane..(s + 1) * k * plane];
                    let gs = &grad[s * out_channels * plane..(s + 1) * out_channels * plane];
                    if need_dx {
                        dcol.fill(0.0);
                    }
                    for o in 0..out_channels {
                        let go = &gs[o * plane..(o + 1) * plane];
                        gb[o] += go.iter().sum::<f64>();
                        for kk in 0..k {
                            gw[o * k + kk] += dot(go, &col[kk * plane..(kk + 1) * plane]);
                            if need_dx {
                                axpy(&mut dcol[kk * plane..(kk + 1) * plane], w[o * k + kk], go);
                            }
                        }
                    }
                    if need_dx {
                        col2im(
                            &dcol,
                            in_channels,
                            height,
                            width,
                            &mut dx[s * in_channels * plane..(s + 1) * in_channels * plane],
                        );
                    }
                }
                dx
            }
            LayerKind::MaxPool2d => {
                let arg = trace.pool_argmax[i].as_ref().expect("pool trace");
                let mut dx = vec![0.0; input.len()];
                for (g, &idx) in grad.iter().zip(arg) {
                    dx[idx] += g;
                }
                dx
            }
            LayerKind::Flatten => grad,
        };
        if !need_dx && i <= first_parametric {
            break;
        }
    }
    Ok((loss, grads))
}

/// `p - lr * g` for every parameter, rounded back to `f32` storage.
pub fn sgd_step(model: &ModelParams, grads: &Gradients, lr: f64) -> Result<ModelParams> {
    let mut next = model.clone();
    apply_sgd(&mut next, grads, lr)?;
    Ok(next)
}

pub(crate) fn apply_sgd(model: &mut ModelParams, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Input(format!("learning rate must be finite and non-negative, got {lr}")));
    }
    if !grads.matches_shape(model) {
        return Err(Error::dimension(
            "gradients",
            format!("{} parameters", model.num_params()),
            format!("{} values", grads.flat().len()),
        ));
    }
    if lr == 0.0 {
        return Ok(());
    }
    for (p, g) in model.layer_params_mut().iter_mut().zip(&grads.layers) {
        for (w, gw) in p.weight.iter_mut().zip(&g.weight) {
            *w = (*w as f64 - lr * gw) as f32;
        }
        for (b, gb) in p.bias.iter_mut().zip(&g.bias) {
            *b = (*b as f64 - lr * gb) as f32;
        }
    }
    Ok(())
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

const EVAL_CHUNK: usize = 256;

/// Accuracy (argmax, ties to the lowest class) and mean cross-entropy.
pub fn evaluate(model: &ModelParams, dataset: &Dataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty dataset".into()));
    }
    if dataset.shape() != model.arch().input_shape() {
        return Err(Error::dimension(
            "evaluation dataset shape",
            model.arch().input_shape(),
            dataset.shape(),
        ));
    }
    let classes = model.arch().num_classes();
    if let Some(&bad) = dataset.labels().iter().find(|&&l| l >= classes) {
        return Err(Error::Input(format!("label {bad} outside [0, {classes})")));
    }
    let mut correct = 0;
    let mut loss_sum = 0.0;
    let mut start = 0;
    while start < dataset.len() {
        let end = (start + EVAL_CHUNK).min(dataset.len());
        let (logits, _) = run_forward(model, dataset.input_range(start, end), end - start, false);
        let labels = &dataset.labels()[start..end];
        let (_, per) = cross_entropy(&logits, labels, classes);
        for (s, &label) in labels.iter().enumerate() {
            if argmax(&logits[s * classes..(s + 1) * classes]) == label {
                correct += 1;
            }
            loss_sum += per[s];
        }
        start = end;
    }
    let total = dataset.len();
    Ok(Evaluation {
        accuracy: correct as f64 / total as f64,
        mean_loss: loss_sum / total as f64,
        correct,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, ArchitectureSpec, InputShape, LayerParams};

    fn arch(s: &str) -> ArchitectureSpec {
        s.parse().unwrap()
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let a = arch("in=1x6x6 classes=4 stages=[c3] head=[d5]");
        let m = ModelParams::zeros(a);
        let x: Vec<f32> = (0..72).map(|i| (i % 7) as f32 / 7.0).collect();
        let out = forward(&m, &x).unwrap();
        assert_eq!(out.batch, 2);
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_dense_returns_input() {
        let a = arch("in=3x1x1 classes=3 stages=[] head=[]");
        let m = ModelParams::new(
            a,
            vec![LayerParams {
                weight: vec![1., 0., 0., 0., 1., 0., 0., 0., 1.],
                bias: vec![0.; 3],
            }],
        )
        .unwrap();
        let x = [0.25f32, -1.5, 3.0];
        assert_eq!(forward(&m, &x).unwrap().values, vec![0.25, -1.5, 3.0]);
    }

    #[test]
    fn two_layer_net_matches_hand_arithmetic() {
        // x = [1, 2]; hidden = relu([[1,-1],[0.5,0.5]] x + [0, -1]) = relu([-1, 0.5]) = [0, 0.5]
        // out = [[2, 1],[-1, 3]] h + [0.1, 0.2] = [0.6, 1.7]
        let a = arch("in=2x1x1 classes=2 stages=[] head=[d2]");
        let m = ModelParams::new(
            a,
            vec![
                LayerParams {
                    weight: vec![1., -1., 0.5, 0.5],
                    bias: vec![0., -1.],
                },
                LayerParams {
                    weight: vec![2., 1., -1., 3.],
                    bias: vec![0.1, 0.2],
                },
            ],
        )
        .unwrap();
        let out = forward(&m, &[1.0, 2.0]).unwrap();
        assert!((out.values[0] - 0.6).abs() < 1e-7);
        assert!((out.values[1] - 1.7).abs() < 1e-7);
    }

    #[test]
    fn conv_center_tap_and_padding() {
        // Single 3x3 map, kernel all ones: output = sum over the zero-padded
        // neighborhood.
        let a = arch("in=1x3x3 classes=1 stages=[c1:id] head=[]");
        let m = ModelParams::new(
            a,
            vec![
                LayerParams {
                    weight: vec![1.0; 9],
                    bias: vec![0.0],
                },
                LayerParams {
                    weight: vec![1.0],
                    bias: vec![0.0],
                },
            ],
        )
        .unwrap();
        let x: Vec<f32> = (1..=9).map(|v| v as f32).collect();
        // Neighborhood sums: top-left 1+2+4+5 = 12, top-middle 1+2+3+4+5+6 = 21,
        // left-middle 1+2+4+5+7+8 = 27, center 45. Max of the top-left 2x2 = 45.
        let out = forward(&m, &x).unwrap();
        assert_eq!(out.values, vec![45.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = arch("in=1x4x4 classes=2 stages=[c2] head=[]");
        let m = init_model(&a, 1);
        assert!(matches!(forward(&m, &[0.0; 15]), Err(Error::Dimension { .. })));
        assert!(matches!(forward(&m, &[]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let a = arch("in=2x1x1 classes=10 stages=[] head=[]");
        let m = ModelParams::zeros(a);
        let b = Batch {
            inputs: vec![0.3, 0.7, 0.1, 0.9],
            labels: vec![3, 9],
        };
        let (l, _) = loss_and_backward(&m, &b).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
        assert!((l - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_label_is_an_input_error() {
        let a = arch("in=2x1x1 classes=3 stages=[] head=[]");
        let m = ModelParams::zeros(a);
        let b = Batch {
            inputs: vec![0.3, 0.7],
            labels: vec![3],
        };
        assert!(matches!(loss_and_backward(&m, &b), Err(Error::Input(_))));
    }

    #[test]
    fn sgd_arithmetic() {
        let a = arch("in=1x1x1 classes=1 stages=[] head=[]");
        let m = ModelParams::new(
            a,
            vec![LayerParams {
                weight: vec![1.0],
                bias: vec![0.25],
            }],
        )
        .unwrap();
        let g = Gradients {
            layers: vec![LayerGrads {
                weight: vec![0.5],
                bias: vec![0.5],
            }],
        };
        assert_eq!(sgd_step(&m, &g, 0.0).unwrap(), m);
        let next = sgd_step(&m, &g, 0.01).unwrap();
        assert_eq!(next.layer_params()[0].weight[0], 0.995f32);
        // Dyadic values keep every operation exact.
        let twice = sgd_step(&sgd_step(&m, &g, 0.125).unwrap(), &g, 0.125).unwrap();
        let once = sgd_step(&m, &g, 0.25).unwrap();
        assert_eq!(twice, once);
        assert!(sgd_step(&m, &g, -1.0).is_err());
    }

    #[test]
    fn sgd_linearity_with_rounding() {
        let a = arch("in=1x4x4 classes=3 stages=[c2] head=[d4]");
        let m = init_model(&a, 3);
        let mut g = Gradients::zeros_like(&m);
        for (i, l) in g.layers.iter_mut().enumerate() {
            for (j, v) in l.weight.iter_mut().enumerate() {
                *v = ((i * 31 + j * 7) % 11) as f64 / 11.0 - 0.5;
            }
        }
        let lr = 0.01;
        let twice = sgd_step(&sgd_step(&m, &g, lr).unwrap(), &g, lr).unwrap();
        let once = sgd_step(&m, &g, 2.0 * lr).unwrap();
        for (a, b) in twice.flat().iter().zip(once.flat()) {
            assert!((a - b).abs() <= 2.0 * f32::EPSILON * a.abs().max(1.0));
        }
    }

    #[test]
    fn sgd_rejects_mismatched_gradients() {
        let m1 = init_model(&arch("in=1x1x1 classes=2 stages=[] head=[]"), 1);
        let m2 = init_model(&arch("in=1x1x1 classes=3 stages=[] head=[]"), 1);
        let g = Gradients::zeros_like(&m2);
        assert!(matches!(sgd_step(&m1, &g, 0.1), Err(Error::Dimension { .. })));
    }

    #[test]
    fn constant_prediction_accuracy() {
        // Bias-only classifier always predicting class 2.
        let a = arch("in=1x1x1 classes=3 stages=[] head=[]");
        let m = ModelParams::new(
            a,
            vec![LayerParams {
                weight: vec![0.0; 3],
                bias: vec![0.0, 0.0, 1.0],
            }],
        )
        .unwrap();
        let labels = vec![2, 0, 2, 1, 2, 2, 0, 1];
        let ds = Dataset::new(vec![0.5; 8], labels, InputShape::new(1, 1, 1), 3).unwrap();
        let e = evaluate(&m, &ds).unwrap();
        assert_eq!(e.correct, 4);
        assert_eq!(e.accuracy, 0.5);
    }

    #[test]
    fn zero_model_ties_break_to_class_zero() {
        let a = arch("in=1x1x1 classes=10 stages=[] head=[]");
        let m = ModelParams::zeros(a);
        let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();
        let ds = Dataset::new(vec![0.5; 50], labels, InputShape::new(1, 1, 1), 10).unwrap();
        let e = evaluate(&m, &ds).unwrap();
        assert_eq!(e.accuracy, 0.1);
        assert!((e.mean_loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn evaluate_rejects_wrong_shape() {
        let m = ModelParams::zeros(arch("in=1x2x2 classes=2 stages=[] head=[]"));
        let ds = Dataset::new(vec![0.5; 3], vec![0], InputShape::new(1, 1, 3), 2).unwrap();
        assert!(matches!(evaluate(&m, &ds), Err(Error::Dimension { .. })));
    }

    #[test]
    fn backward_does_not_change_shapes() {
        let a = arch("in=2x4x4 classes=3 stages=[c3,c2] head=[d4]");
        let m = init_model(&a, 5);
        let b = Batch {
            inputs: (0..64).map(|i| (i % 5) as f32 / 5.0).collect(),
            labels: vec![0, 2],
        };
        let (_, g) = loss_and_backward(&m, &b).unwrap();
        assert!(g.matches_shape(&m));
        assert!(g.flat().iter().all(|v| v.is_finite()));
    }
}
