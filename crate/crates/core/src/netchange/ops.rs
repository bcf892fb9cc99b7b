use rand::Rng;

use super::plan::{diff_arch, TransformPlan, TransformStep};
use crate::error::{Error, Result};
use crate::nn::{Activation, ArchitectureSpec, LayerKind, LayerParams, LayerSpec, ModelParams, KERNEL_AREA};
use crate::seed;

/// Replication sets produced by [`to_wider`]: `sets[i]` holds original neuron
/// `i` followed by the new neurons copied from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronMap {
    pub sets: Vec<Vec<usize>>,
}

impl NeuronMap {
    /// True when the sets partition `0..width` and each set contains its own index.
    pub fn is_partition_of(&self, width: usize) -> bool {
        let mut seen = vec![false; width];
        for (i, set) in self.sets.iter().enumerate() {
            if !set.contains(&i) {
                return false;
            }
            for &j in set {
                if j >= width || std::mem::replace(&mut seen[j], true) {
                    return false;
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// How the weights of the next parametric layer consume the neurons of a
/// given layer: the next weight tensor is viewed as `[outputs][width][taps]`.
struct Consumer {
    layer: usize,
    outputs: usize,
    taps: usize,
}

fn parametric(arch: &ArchitectureSpec, index: usize, what: &str) -> Result<LayerSpec> {
    let layer = *arch
        .layers()
        .get(index)
        .ok_or_else(|| Error::Input(format!("{what}: layer index {index} out of range")))?;
    if !layer.is_parametric() {
        return Err(Error::Unsupported(format!(
            "{what}: layer {index} is not a dense or convolution layer"
        )));
    }
    Ok(layer)
}

fn consumer_of(arch: &ArchitectureSpec, index: usize, width: usize) -> Consumer {
    let layer = (index + 1..arch.layers().len())
        .find(|&i| arch.layers()[i].is_parametric())
        .expect("non-classifier layers have a consumer");
    let spec = arch.layers()[layer];
    let taps = match spec.kind {
        LayerKind::Conv2d { .. } => KERNEL_AREA,
        _ => spec.in_dim().unwrap() / width,
    };
    Consumer {
        layer,
        outputs: spec.out_dim().unwrap(),
        taps,
    }
}

fn rebuild(
    arch: &ArchitectureSpec,
    layers: Vec<LayerSpec>,
    params: Vec<LayerParams>,
) -> Result<ModelParams> {
    let arch = arch.with_layers(layers)?;
    Ok(ModelParams::from_parts_unchecked(arch, params))
}

/// Widen layer `layer_index` to `target_width` while preserving the network
/// function.
///
/// Each new neuron copies the incoming weights and bias of an original neuron
/// drawn uniformly with `seed`; the outgoing weights of every member of a
/// replication set are divided by the set's size.
pub fn to_wider(
    params: &ModelParams,
    layer_index: usize,
    target_width: usize,
    seed: u64,
) -> Result<(ModelParams, NeuronMap)> {
    let arch = params.arch();
    let spec = parametric(arch, layer_index, "widen")?;
    if layer_index == arch.classifier_index() {
        return Err(Error::Unsupported("widening the classifier head changes the output".into()));
    }
    let width = spec.out_dim().unwrap();
    if target_width <= width {
        return Err(Error::Input(format!(
            "widen target {target_width} must exceed current width {width} of layer {layer_index}"
        )));
    }
    let consumer = consumer_of(arch, layer_index, width);
    let slot = arch.param_slot(layer_index).unwrap();
    let next_slot = arch.param_slot(consumer.layer).unwrap();

    let mut rng = seed::rng(seed);
    let mut source: Vec<usize> = (0..width).collect();
    let mut sets: Vec<Vec<usize>> = (0..width).map(|i| vec![i]).collect();
    for i in width..target_width {
        let j = rng.random_range(0..width);
        source.push(j);
        sets[j].push(i);
    }

    let mut layer_params = params.layer_params().to_vec();
    let own = &layer_params[slot];
    let row = own.weight.len() / width;
    let mut weight = Vec::with_capacity(target_width * row);
    let mut bias = Vec::with_capacity(target_width);
    for &j in &source {
        weight.extend_from_slice(&own.weight[j * row..(j + 1) * row]);
        bias.push(own.bias[j]);
    }
    layer_params[slot] = LayerParams { weight, bias };

    let next = &layer_params[next_slot];
    let Consumer { outputs, taps, .. } = consumer;
    let mut next_weight = Vec::with_capacity(outputs * target_width * taps);
    for o in 0..outputs {
        let block = &next.weight[o * width * taps..(o + 1) * width * taps];
        for &j in &source {
            let share = sets[j].len() as f64;
            next_weight.extend(block[j * taps..(j + 1) * taps].iter().map(|&w| (w as f64 / share) as f32));
        }
    }
    layer_params[next_slot].weight = next_weight;

    let mut layers = arch.layers().to_vec();
    layers[layer_index] = spec.with_out(target_width);
    let next_spec = layers[consumer.layer];
    layers[consumer.layer] = next_spec.with_in(target_width * if matches!(next_spec.kind, LayerKind::Conv2d { .. }) { 1 } else { taps });
    Ok((rebuild(arch, layers, layer_params)?, NeuronMap { sets }))
}

/// Keep the first `target_width` neurons of a layer. For every downstream
/// slot (next-layer output and tap), the sum of the removed neurons' outgoing
/// weights is divided by `target_width` and added to each kept neuron's
/// outgoing weight into that slot.
pub fn to_narrower(params: &ModelParams, layer_index: usize, target_width: usize) -> Result<ModelParams> {
    let arch = params.arch();
    let spec = parametric(arch, layer_index, "narrow")?;
    if layer_index == arch.classifier_index() {
        return Err(Error::Unsupported("narrowing the classifier head changes the output".into()));
    }
    let width = spec.out_dim().unwrap();
    if target_width == 0 || target_width >= width {
        return Err(Error::Input(format!(
            "narrow target {target_width} must be in 1..{width} for layer {layer_index}"
        )));
    }
    let consumer = consumer_of(arch, layer_index, width);
    let slot = arch.param_slot(layer_index).unwrap();
    let next_slot = arch.param_slot(consumer.layer).unwrap();

    let mut layer_params = params.layer_params().to_vec();
    let own = &mut layer_params[slot];
    let row = own.weight.len() / width;
    own.weight.truncate(target_width * row);
    own.bias.truncate(target_width);

    let Consumer { outputs, taps, .. } = consumer;
    let next = &layer_params[next_slot];
    let mut next_weight = Vec::with_capacity(outputs * target_width * taps);
    let mut share = vec![0.0f64; taps];
    for o in 0..outputs {
        let block = &next.weight[o * width * taps..(o + 1) * width * taps];
        share.fill(0.0);
        for i in target_width..width {
            for (s, &w) in share.iter_mut().zip(&block[i * taps..(i + 1) * taps]) {
                *s += w as f64;
            }
        }
        for s in share.iter_mut() {
            *s /= target_width as f64;
        }
        for j in 0..target_width {
            next_weight.extend(
                block[j * taps..(j + 1) * taps]
                    .iter()
                    .zip(&share)
                    .map(|(&w, &s)| (w as f64 + s) as f32),
            );
        }
    }
    layer_params[next_slot].weight = next_weight;

    let mut layers = arch.layers().to_vec();
    layers[layer_index] = spec.with_out(target_width);
    let next_spec = layers[consumer.layer];
    layers[consumer.layer] = next_spec.with_in(target_width * if matches!(next_spec.kind, LayerKind::Conv2d { .. }) { 1 } else { taps });
    rebuild(arch, layers, layer_params)
}

/// Insert an identity layer at `insert_index`, structured like
/// `template_layer_index`: identity matrix (dense) or a center-tap
/// channel-diagonal kernel (convolution), zero bias, ReLU.
pub fn to_deeper(params: &ModelParams, insert_index: usize, template_layer_index: usize) -> Result<ModelParams> {
    let arch = params.arch();
    let template = parametric(arch, template_layer_index, "deepen template")?;
    if template.activation != Activation::Relu {
        return Err(Error::Unsupported(format!(
            "deepen template layer {template_layer_index} has no ReLU"
        )));
    }
    if insert_index == 0 || insert_index > arch.classifier_index() {
        return Err(Error::Input(format!(
            "insertion index {insert_index} must be within 1..={}",
            arch.classifier_index()
        )));
    }
    let before = arch.layers()[insert_index - 1];
    if !before.is_parametric() || before.activation != Activation::Relu {
        return Err(Error::Unsupported(format!(
            "identity layer at {insert_index} would follow layer {} which is not ReLU-activated",
            insert_index - 1
        )));
    }
    let dim = template.out_dim().unwrap();
    let same_kind = std::mem::discriminant(&before.kind) == std::mem::discriminant(&template.kind);
    if !same_kind || before.out_dim() != Some(dim) {
        return Err(Error::Incompatible(format!(
            "template layer {template_layer_index} ({dim} wide) does not match the {} features \
             entering position {insert_index}",
            before.out_dim().unwrap()
        )));
    }
    let (spec, weight) = match template.kind {
        LayerKind::Dense { .. } => {
            let mut w = vec![0.0f32; dim * dim];
            for i in 0..dim {
                w[i * dim + i] = 1.0;
            }
            (LayerSpec::dense(dim, dim, Activation::Relu), w)
        }
        LayerKind::Conv2d { .. } => {
            let mut w = vec![0.0f32; dim * dim * KERNEL_AREA];
            for i in 0..dim {
                w[(i * dim + i) * KERNEL_AREA + KERNEL_AREA / 2] = 1.0;
            }
            (LayerSpec::conv(dim, dim, Activation::Relu), w)
        }
        _ => unreachable!(),
    };
    let slot = arch.layers()[..insert_index].iter().filter(|l| l.is_parametric()).count();
    let mut layer_params = params.layer_params().to_vec();
    layer_params.insert(
        slot,
        LayerParams {
            weight,
            bias: vec![0.0; dim],
        },
    );
    let mut layers = arch.layers().to_vec();
    layers.insert(insert_index, spec);
    rebuild(arch, layers, layer_params)
}

/// Remove a square (in = out) layer and splice its neighbours together.
pub fn to_shallower(params: &ModelParams, remove_index: usize) -> Result<ModelParams> {
    let arch = params.arch();
    let spec = parametric(arch, remove_index, "shallow")?;
    if remove_index == arch.classifier_index() {
        return Err(Error::Unsupported("cannot remove the classifier head".into()));
    }
    if spec.in_dim() != spec.out_dim() {
        return Err(Error::Incompatible(format!(
            "layer {remove_index} maps {} to {} features; only square layers can be removed",
            spec.in_dim().unwrap(),
            spec.out_dim().unwrap()
        )));
    }
    if let LayerKind::Conv2d { .. } = spec.kind {
        let alone = arch
            .segments()
            .iter()
            .any(|s| s.layers.len() == 1 && s.layers[0] == remove_index);
        if alone {
            return Err(Error::Unsupported(format!(
                "layer {remove_index} is the only convolution of its stage"
            )));
        }
    }
    let slot = arch.param_slot(remove_index).unwrap();
    let mut layer_params = params.layer_params().to_vec();
    layer_params.remove(slot);
    let mut layers = arch.layers().to_vec();
    layers.remove(remove_index);
    rebuild(arch, layers, layer_params)
}

/// Apply a plan step by step. Widen steps draw replicas with
/// `mix(seed, layer_index)`.
pub fn apply_plan(params: &ModelParams, plan: &TransformPlan, seed: u64) -> Result<ModelParams> {
    let mut current = params.clone();
    for step in &plan.steps {
        current = match *step {
            TransformStep::Widen {
                layer_index,
                target_width,
            } => to_wider(&current, layer_index, target_width, seed::mix(seed, layer_index as u64))?.0,
            TransformStep::Deepen {
                insert_index,
                template_layer_index,
            } => to_deeper(&current, insert_index, template_layer_index)?,
            TransformStep::Narrow {
                layer_index,
                target_width,
            } => to_narrower(&current, layer_index, target_width)?,
            TransformStep::Shallow { remove_index } => to_shallower(&current, remove_index)?,
        };
    }
    Ok(current)
}

/// Convert `src` into parameters for `dst_arch`. Growing plans preserve the
/// network function; shrinking plans are lossy. An identical architecture
/// returns `src` unchanged.
pub fn net_change(src: &ModelParams, dst_arch: &ArchitectureSpec, seed: u64) -> Result<ModelParams> {
    let plan = diff_arch(src.arch(), dst_arch)?;
    if plan.is_empty() {
        if src.arch() != dst_arch {
            return Err(Error::Incompatible(format!(
                "{} and {} differ in more than widths and depths",
                src.arch(),
                dst_arch
            )));
        }
        return Ok(src.clone());
    }
    let out = apply_plan(src, &plan, seed)?;
    if out.arch() != dst_arch {
        return Err(Error::Incompatible(format!(
            "transformed architecture {} does not match requested {}",
            out.arch(),
            dst_arch
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netchange::union_arch;
    use crate::nn::{forward, init_model};
    use rand_distr::{Distribution, StandardNormal};

    fn arch(s: &str) -> ArchitectureSpec {
        s.parse().unwrap()
    }

    /// Random parameters with non-zero biases so ReLUs sit in both regimes.
    fn random_params(a: &ArchitectureSpec, seed: u64) -> ModelParams {
        let m = init_model(a, seed);
        let mut rng = seed::rng(seed ^ 0xABCD);
        let layers = m
            .layer_params()
            .iter()
            .map(|l| LayerParams {
                weight: l.weight.clone(),
                bias: l
                    .bias
                    .iter()
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (0.1 * z) as f32
                    })
                    .collect(),
            })
            .collect();
        ModelParams::new(a.clone(), layers).unwrap()
    }

    fn random_inputs(a: &ArchitectureSpec, n: usize, seed: u64) -> Vec<f32> {
        let mut rng = seed::rng(seed);
        (0..n * a.input_shape().len()).map(|_| rng.random::<f32>()).collect()
    }

    fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / (y.abs() + 1e-8))
            .fold(0.0, f64::max)
    }

    #[test]
    fn widen_width_one_duplicates_and_halves() {
        let a = arch("in=1x1x1 classes=1 stages=[] head=[d1]");
        let m = ModelParams::new(
            a,
            vec![
                LayerParams {
                    weight: vec![0.6],
                    bias: vec![0.1],
                },
                LayerParams {
                    weight: vec![1.0],
                    bias: vec![0.0],
                },
            ],
        )
        .unwrap();
        let (wide, map) = to_wider(&m, 1, 2, 9).unwrap();
        assert_eq!(wide.layer_params()[0].weight, vec![0.6, 0.6]);
        assert_eq!(wide.layer_params()[0].bias, vec![0.1, 0.1]);
        assert_eq!(wide.layer_params()[1].weight, vec![0.5, 0.5]);
        assert_eq!(map.sets, vec![vec![0, 1]]);
        for x in [0.0f32, 0.3, 1.0] {
            let before = forward(&m, &[x]).unwrap().values[0];
            let after = forward(&wide, &[x]).unwrap().values[0];
            assert!((before - after).abs() < 1e-7);
        }
        // and back
        let narrow = to_narrower(&wide, 1, 1).unwrap();
        assert_eq!(narrow, m);
    }

    #[test]
    fn widen_preconditions() {
        let a = arch("in=1x4x4 classes=3 stages=[c4] head=[d4]");
        let m = init_model(&a, 1);
        assert!(matches!(to_wider(&m, 0, 4, 1), Err(Error::Input(_))));
        assert!(matches!(to_wider(&m, 1, 5, 1), Err(Error::Unsupported(_))));
        assert!(matches!(to_wider(&m, 4, 5, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn widen_preserves_function_and_partitions() {
        let a = arch("in=2x6x6 classes=5 stages=[c4,c3|c5] head=[d4]");
        let m = random_params(&a, 11);
        let x = random_inputs(&a, 100, 12);
        let base = forward(&m, &x).unwrap().values;
        for (layer, target) in [(0, 7), (1, 6), (3, 9), (6, 7)] {
            let (wide, map) = to_wider(&m, layer, target, 99).unwrap();
            assert!(map.is_partition_of(target));
            let out = forward(&wide, &x).unwrap().values;
            assert!(max_rel_diff(&out, &base) < 1e-5, "layer {layer}");
        }
    }

    #[test]
    fn widen_draws_depend_on_seed_only() {
        let a = arch("in=1x4x4 classes=3 stages=[c2] head=[d3]");
        let m = init_model(&a, 1);
        let x = to_wider(&m, 3, 12, 5).unwrap();
        assert_eq!(x, to_wider(&m, 3, 12, 5).unwrap());
        let differ = (6..40).any(|s| to_wider(&m, 3, 12, s).unwrap().1 != x.1);
        assert!(differ);
    }

    #[test]
    fn narrow_redistributes_removed_mass() {
        // width 3 -> 2 with outgoing [a, b, c] = [0.5, 0.25, 0.75]:
        // kept [a + c/2, b + c/2] = [0.875, 0.625]
        let a = arch("in=1x1x1 classes=1 stages=[] head=[d3]");
        let m = ModelParams::new(
            a,
            vec![
                LayerParams {
                    weight: vec![1.0, 2.0, 3.0],
                    bias: vec![0.0, 0.1, 0.2],
                },
                LayerParams {
                    weight: vec![0.5, 0.25, 0.75],
                    bias: vec![0.0],
                },
            ],
        )
        .unwrap();
        let n = to_narrower(&m, 1, 2).unwrap();
        assert_eq!(n.layer_params()[0].weight, vec![1.0, 2.0]);
        assert_eq!(n.layer_params()[0].bias, vec![0.0, 0.1]);
        assert_eq!(n.layer_params()[1].weight, vec![0.875, 0.625]);
        assert_eq!(n.arch().to_string(), "in=1x1x1 classes=1 stages=[] head=[d2]");
    }

    #[test]
    fn narrow_preconditions() {
        let a = arch("in=1x4x4 classes=3 stages=[c4] head=[d4]");
        let m = init_model(&a, 1);
        assert!(matches!(to_narrower(&m, 0, 4), Err(Error::Input(_))));
        assert!(matches!(to_narrower(&m, 0, 0), Err(Error::Input(_))));
        assert!(matches!(to_narrower(&m, 4, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn narrow_conv_before_flatten_uses_spatial_slots() {
        let a = arch("in=1x4x4 classes=2 stages=[c3] head=[]");
        let m = init_model(&a, 4);
        let n = to_narrower(&m, 0, 2).unwrap();
        // 3 channels x 2x2 plane feeding the classifier; channel 2 is merged
        // into channels 0 and 1 position by position.
        let before = &m.layer_params()[1].weight;
        let after = &n.layer_params()[1].weight;
        assert_eq!(after.len(), 2 * 2 * 4);
        for o in 0..2 {
            for p in 0..4 {
                let removed = before[o * 12 + 8 + p] as f64 / 2.0;
                for j in 0..2 {
                    let expect = (before[o * 12 + j * 4 + p] as f64 + removed) as f32;
                    assert_eq!(after[o * 8 + j * 4 + p], expect);
                }
            }
        }
    }

    #[test]
    fn deeper_identity_dense_and_conv() {
        let a = arch("in=1x4x4 classes=3 stages=[c2] head=[d3]");
        let m = init_model(&a, 2);
        let d = to_deeper(&m, 4, 3).unwrap();
        let p = d.params_for(4).unwrap();
        assert_eq!(p.weight, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        assert_eq!(p.bias, vec![0.0; 3]);

        let c = to_deeper(&m, 1, 0).unwrap();
        let k = &c.params_for(1).unwrap().weight;
        for o in 0..2 {
            for i in 0..2 {
                for t in 0..9 {
                    let expect = if o == i && t == 4 { 1.0 } else { 0.0 };
                    assert_eq!(k[(o * 2 + i) * 9 + t], expect);
                }
            }
        }
    }

    #[test]
    fn deeper_preserves_function_and_shallower_inverts_it() {
        let a = arch("in=2x6x6 classes=4 stages=[c4,c3|c5] head=[d6]");
        let m = random_params(&a, 21);
        let x = random_inputs(&a, 100, 22);
        let base = forward(&m, &x).unwrap().values;
        for (insert, template) in [(1, 0), (2, 1), (4, 3), (7, 6)] {
            let d = to_deeper(&m, insert, template).unwrap();
            let out = forward(&d, &x).unwrap().values;
            for (u, v) in out.iter().zip(&base) {
                assert!((u - v).abs() < 1e-6);
            }
            let back = to_shallower(&d, insert).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn deeper_rejects_non_relu_predecessor() {
        let a = arch("in=1x4x4 classes=3 stages=[c2] head=[d3:id]");
        let m = init_model(&a, 2);
        // after flatten
        assert!(matches!(to_deeper(&m, 3, 0), Err(Error::Unsupported(_))));
        // template without ReLU
        assert!(matches!(to_deeper(&m, 1, 3), Err(Error::Unsupported(_))));
        // after the identity-activation dense layer, template conv
        assert!(matches!(to_deeper(&m, 4, 0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn shallower_preconditions() {
        let a = arch("in=1x4x4 classes=3 stages=[c2,c4] head=[d3]");
        let m = init_model(&a, 2);
        assert!(matches!(to_shallower(&m, 5), Err(Error::Unsupported(_))));
        assert!(matches!(to_shallower(&m, 1), Err(Error::Incompatible(_))));
        let b = arch("in=1x4x4 classes=3 stages=[c1] head=[d3]");
        assert!(matches!(to_shallower(&init_model(&b, 1), 0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn net_change_identity_is_bitwise() {
        let a = arch("in=1x8x8 classes=3 stages=[c4|c8] head=[d8]");
        let m = init_model(&a, 3);
        assert_eq!(net_change(&m, &a, 1).unwrap(), m);
    }

    #[test]
    fn net_change_grows_to_union_and_round_trips_structure() {
        let small = arch("in=1x16x16 classes=10 stages=[c8,c8|c16,c16] head=[d32]");
        let deep = arch("in=1x16x16 classes=10 stages=[c8,c8,c8|c16,c16,c16] head=[d32]");
        let wide = arch("in=1x16x16 classes=10 stages=[c16,c16|c32,c32] head=[d32]");
        let u = union_arch(&[small.clone(), deep, wide]).unwrap();
        let m = random_params(&small, 31);
        let x = random_inputs(&small, 100, 32);
        let grown = net_change(&m, &u, 7).unwrap();
        assert_eq!(grown.arch(), &u);
        let base = forward(&m, &x).unwrap().values;
        let out = forward(&grown, &x).unwrap().values;
        let abs = out.iter().zip(&base).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        let scale = base.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(abs < 1e-5 * scale.max(1.0), "{abs} {scale} {}", max_rel_diff(&out, &base));
        let back = net_change(&grown, &small, 8).unwrap();
        assert_eq!(back.arch(), &small);
    }
}
