//! Layer and architecture descriptions, plus the textual architecture grammar.
//!
//! A valid architecture is a sequence of convolutional *stages* (one or more
//! 3x3 same-padded convolutions closed by a 2x2 max-pool), a single `Flatten`,
//! zero or more hidden dense layers (the *head*), and a final dense classifier
//! with no activation.
//!
//! Textual form:
//!
//! ```text
//! in=1x16x16 classes=10 stages=[c8,c8|c16] head=[d32] widen={s0.l1:12}
//! ```
//!
//! * `in=CxHxW` input shape, `classes=N` number of classes.
//! * `stages=[...]` stages separated by `|`, convolutions separated by `,`.
//!   `c8` is an 8-channel ReLU convolution. `stages=[]` means no convolutions.
//! * `head=[...]` hidden dense layers, `d32` is a 32-unit ReLU dense layer.
//! * `widen={sI.lJ:W,...}` overrides the width of layer `J` (0-based) of stage
//!   `I` (0-based).
//! * A `:id` suffix (`c8:id`, `d32:id`) drops the ReLU.
//!
//! Printing is canonical: every stage is written with its most common width
//! (ties go to the smaller width) and the other layers go into `widen`, which
//! is omitted when empty.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Dense {
        in_features: usize,
        out_features: usize,
    },
    /// 3x3 kernel, stride 1, zero "same" padding.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
    },
    /// 2x2 window, stride 2, floor division of the spatial size.
    MaxPool2d,
    Flatten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
}

pub const KERNEL: usize = 3;
pub const KERNEL_AREA: usize = KERNEL * KERNEL;

impl LayerSpec {
    pub fn dense(in_features: usize, out_features: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Dense {
                in_features,
                out_features,
            },
            activation,
        }
    }

    pub fn conv(in_channels: usize, out_channels: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Conv2d {
                in_channels,
                out_channels,
            },
            activation,
        }
    }

    pub fn max_pool() -> Self {
        LayerSpec {
            kind: LayerKind::MaxPool2d,
            activation: Activation::Identity,
        }
    }

    pub fn flatten() -> Self {
        LayerSpec {
            kind: LayerKind::Flatten,
            activation: Activation::Identity,
        }
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self.kind, LayerKind::Dense { .. } | LayerKind::Conv2d { .. })
    }

    /// Input features (dense) or channels (conv).
    pub fn in_dim(&self) -> Option<usize> {
        match self.kind {
            LayerKind::Dense { in_features, .. } => Some(in_features),
            LayerKind::Conv2d { in_channels, .. } => Some(in_channels),
            _ => None,
        }
    }

    /// Output neurons (dense) or channels (conv).
    pub fn out_dim(&self) -> Option<usize> {
        match self.kind {
            LayerKind::Dense { out_features, .. } => Some(out_features),
            LayerKind::Conv2d { out_channels, .. } => Some(out_channels),
            _ => None,
        }
    }

    /// Number of weights excluding the bias.
    pub fn weight_len(&self) -> usize {
        match self.kind {
            LayerKind::Dense {
                in_features,
                out_features,
            } => in_features * out_features,
            LayerKind::Conv2d {
                in_channels,
                out_channels,
            } => in_channels * out_channels * KERNEL_AREA,
            _ => 0,
        }
    }

    pub(crate) fn with_out(mut self, out: usize) -> Self {
        match &mut self.kind {
            LayerKind::Dense { out_features, .. } => *out_features = out,
            LayerKind::Conv2d { out_channels, .. } => *out_channels = out,
            _ => {}
        }
        self
    }

    pub(crate) fn with_in(mut self, input: usize) -> Self {
        match &mut self.kind {
            LayerKind::Dense { in_features, .. } => *in_features = input,
            LayerKind::Conv2d { in_channels, .. } => *in_channels = input,
            _ => {}
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        InputShape {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let act = match self.activation {
            Activation::Relu => " relu",
            Activation::Identity => "",
        };
        match self.kind {
            LayerKind::Dense {
                in_features,
                out_features,
            } => write!(f, "dense {in_features}->{out_features}{act}"),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
            } => write!(f, "conv3x3 {in_channels}->{out_channels}{act}"),
            LayerKind::MaxPool2d => f.write_str("maxpool2x2"),
            LayerKind::Flatten => f.write_str("flatten"),
        }
    }
}

impl fmt::Display for InputShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl FromStr for InputShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let dims: Vec<usize> = s
            .split('x')
            .map(|d| {
                d.parse::<usize>()
                    .map_err(|_| Error::ArchParse(format!("bad input shape `{s}`")))
            })
            .collect::<Result<_>>()?;
        match dims.as_slice() {
            [c, h, w] if *c > 0 && *h > 0 && *w > 0 => Ok(InputShape::new(*c, *h, *w)),
            _ => Err(Error::ArchParse(format!(
                "input shape must be CxHxW with positive sizes, got `{s}`"
            ))),
        }
    }
}

/// Shape of the activations flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    Spatial {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl FeatureShape {
    pub fn len(&self) -> usize {
        match *self {
            FeatureShape::Spatial {
                channels,
                height,
                width,
            } => channels * height * width,
            FeatureShape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatial positions per channel (1 for flat features).
    pub fn plane(&self) -> usize {
        match *self {
            FeatureShape::Spatial { height, width, .. } => height * width,
            FeatureShape::Flat(_) => 1,
        }
    }
}

impl fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureShape::Spatial {
                channels,
                height,
                width,
            } => write!(f, "{channels}x{height}x{width}"),
            FeatureShape::Flat(n) => write!(f, "{n}"),
        }
    }
}

/// A group of layers that architecture alignment treats as one unit:
/// the convolutions of one stage, or the hidden dense layers of the head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Indices into [`ArchitectureSpec::layers`].
    pub layers: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Stage(usize),
    Head,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArchitectureSpec {
    layers: Vec<LayerSpec>,
    stage_boundaries: Vec<usize>,
    input_shape: InputShape,
    num_classes: usize,
}

impl ArchitectureSpec {
    pub fn new(input_shape: InputShape, num_classes: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_shape.is_empty() {
            return Err(Error::InvalidArch {
                layer: 0,
                reason: format!("input shape {input_shape} has a zero dimension"),
            });
        }
        if num_classes == 0 {
            return Err(Error::InvalidArch {
                layer: 0,
                reason: "num_classes must be positive".into(),
            });
        }
        let stage_boundaries = validate(&layers, input_shape, num_classes)?;
        Ok(ArchitectureSpec {
            layers,
            stage_boundaries,
            input_shape,
            num_classes,
        })
    }

    /// Build a canonical architecture from per-stage convolution widths and
    /// hidden head widths. All hidden layers use ReLU.
    pub fn from_widths(
        input_shape: InputShape,
        num_classes: usize,
        stages: &[Vec<usize>],
        head: &[usize],
    ) -> Result<Self> {
        let stages: Vec<Vec<(usize, Activation)>> = stages
            .iter()
            .map(|s| s.iter().map(|&w| (w, Activation::Relu)).collect())
            .collect();
        let head: Vec<(usize, Activation)> = head.iter().map(|&w| (w, Activation::Relu)).collect();
        Self::from_segments(input_shape, num_classes, &stages, &head)
    }

    pub(crate) fn from_segments(
        input_shape: InputShape,
        num_classes: usize,
        stages: &[Vec<(usize, Activation)>],
        head: &[(usize, Activation)],
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut channels = input_shape.channels;
        let (mut h, mut w) = (input_shape.height, input_shape.width);
        for stage in stages {
            for &(width, act) in stage {
                layers.push(LayerSpec::conv(channels, width, act));
                channels = width;
            }
            layers.push(LayerSpec::max_pool());
            h /= 2;
            w /= 2;
        }
        layers.push(LayerSpec::flatten());
        let mut features = channels * h * w;
        for &(width, act) in head {
            layers.push(LayerSpec::dense(features, width, act));
            features = width;
        }
        layers.push(LayerSpec::dense(features, num_classes, Activation::Identity));
        Self::new(input_shape, num_classes, layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn stage_boundaries(&self) -> &[usize] {
        &self.stage_boundaries
    }

    pub fn input_shape(&self) -> InputShape {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_stages(&self) -> usize {
        self.stage_boundaries.len()
    }

    pub fn classifier_index(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn flatten_index(&self) -> usize {
        self.layers
            .iter()
            .position(|l| l.kind == LayerKind::Flatten)
            .expect("validated architecture has a flatten layer")
    }

    /// Indices of the Dense/Conv2D layers, in order.
    pub fn parametric_indices(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].is_parametric())
            .collect()
    }

    /// Position of layer `layer_index` among the parametric layers.
    pub fn param_slot(&self, layer_index: usize) -> Option<usize> {
        if !self.layers.get(layer_index)?.is_parametric() {
            return None;
        }
        Some(self.layers[..layer_index].iter().filter(|l| l.is_parametric()).count())
    }

    /// `shapes[i]` is the input shape of layer `i`; the last entry is the output.
    pub fn feature_shapes(&self) -> Vec<FeatureShape> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut shape = FeatureShape::Spatial {
            channels: self.input_shape.channels,
            height: self.input_shape.height,
            width: self.input_shape.width,
        };
        shapes.push(shape);
        for layer in &self.layers {
            shape = next_shape(layer, shape).expect("validated architecture");
            shapes.push(shape);
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight_len() + l.out_dim().unwrap_or(0) * l.is_parametric() as usize)
            .sum()
    }

    /// Stage segments in order, followed by the head segment.
    pub fn segments(&self) -> Vec<Segment> {
        let mut segments = Vec::new();
        let mut current = Vec::new();
        let mut stage = 0;
        let flatten = self.flatten_index();
        for (i, layer) in self.layers[..flatten].iter().enumerate() {
            match layer.kind {
                LayerKind::Conv2d { .. } => current.push(i),
                LayerKind::MaxPool2d => {
                    segments.push(Segment {
                        kind: SegmentKind::Stage(stage),
                        layers: std::mem::take(&mut current),
                    });
                    stage += 1;
                }
                _ => {}
            }
        }
        segments.push(Segment {
            kind: SegmentKind::Head,
            layers: (flatten + 1..self.classifier_index()).collect(),
        });
        segments
    }

    /// Output widths of each segment's layers.
    pub fn segment_widths(&self) -> Vec<Vec<usize>> {
        self.segments()
            .iter()
            .map(|s| {
                s.layers
                    .iter()
                    .map(|&i| self.layers[i].out_dim().expect("parametric"))
                    .collect()
            })
            .collect()
    }

    /// Layers excluding dimensions: used to check that two architectures
    /// differ only in widths and depths.
    pub(crate) fn segment_activations(&self) -> Vec<Vec<Activation>> {
        self.segments()
            .iter()
            .map(|s| s.layers.iter().map(|&i| self.layers[i].activation).collect())
            .collect()
    }

    pub(crate) fn with_layers(&self, layers: Vec<LayerSpec>) -> Result<Self> {
        Self::new(self.input_shape, self.num_classes, layers)
    }
}

fn next_shape(layer: &LayerSpec, shape: FeatureShape) -> std::result::Result<FeatureShape, String> {
    match (layer.kind, shape) {
        (
            LayerKind::Conv2d {
                in_channels,
                out_channels,
            },
            FeatureShape::Spatial {
                channels,
                height,
                width,
            },
        ) => {
            if in_channels == 0 || out_channels == 0 {
                return Err("convolution channels must be positive".into());
            }
            if in_channels != channels {
                return Err(format!(
                    "convolution expects {in_channels} input channels but receives {channels}"
                ));
            }
            Ok(FeatureShape::Spatial {
                channels: out_channels,
                height,
                width,
            })
        }
        (LayerKind::Conv2d { .. }, FeatureShape::Flat(_)) => {
            Err("convolution after flatten".into())
        }
        (
            LayerKind::MaxPool2d,
            FeatureShape::Spatial {
                channels,
                height,
                width,
            },
        ) => {
            if height < 2 || width < 2 {
                return Err(format!("cannot pool a {height}x{width} feature map"));
            }
            Ok(FeatureShape::Spatial {
                channels,
                height: height / 2,
                width: width / 2,
            })
        }
        (LayerKind::MaxPool2d, FeatureShape::Flat(_)) => Err("pooling after flatten".into()),
        (LayerKind::Flatten, FeatureShape::Spatial { .. }) => Ok(FeatureShape::Flat(shape.len())),
        (LayerKind::Flatten, FeatureShape::Flat(_)) => Err("second flatten".into()),
        (
            LayerKind::Dense {
                in_features,
                out_features,
            },
            FeatureShape::Flat(n),
        ) => {
            if in_features == 0 || out_features == 0 {
                return Err("dense dimensions must be positive".into());
            }
            if in_features != n {
                return Err(format!(
                    "dense layer expects {in_features} inputs but receives {n}"
                ));
            }
            Ok(FeatureShape::Flat(out_features))
        }
        (LayerKind::Dense { .. }, FeatureShape::Spatial { .. }) => {
            Err("dense layer before flatten".into())
        }
    }
}

fn validate(layers: &[LayerSpec], input: InputShape, num_classes: usize) -> Result<Vec<usize>> {
    let bad = |layer: usize, reason: String| Error::InvalidArch { layer, reason };
    if layers.is_empty() {
        return Err(bad(0, "architecture has no layers".into()));
    }
    let mut shape = FeatureShape::Spatial {
        channels: input.channels,
        height: input.height,
        width: input.width,
    };
    let mut boundaries = Vec::new();
    let mut flatten_seen = false;
    for (i, layer) in layers.iter().enumerate() {
        if !layer.is_parametric() && layer.activation != Activation::Identity {
            return Err(bad(i, "only dense and convolution layers take an activation".into()));
        }
        match layer.kind {
            LayerKind::MaxPool2d => {
                let after_conv = i > 0 && matches!(layers[i - 1].kind, LayerKind::Conv2d { .. });
                if !after_conv {
                    return Err(bad(i, "a pooling layer must close a stage of convolutions".into()));
                }
                boundaries.push(i);
            }
            LayerKind::Flatten => {
                if i > 0 && layers[i - 1].kind != LayerKind::MaxPool2d {
                    return Err(bad(i, "flatten must follow a pooling layer or be first".into()));
                }
                flatten_seen = true;
            }
            _ => {}
        }
        shape = next_shape(layer, shape).map_err(|r| bad(i, r))?;
    }
    if !flatten_seen {
        return Err(bad(layers.len() - 1, "missing flatten layer".into()));
    }
    let last = layers.len() - 1;
    match layers[last] {
        LayerSpec {
            kind: LayerKind::Dense { out_features, .. },
            activation: Activation::Identity,
        } if out_features == num_classes => Ok(boundaries),
        _ => Err(bad(
            last,
            format!("final layer must be a dense layer with {num_classes} outputs and no activation"),
        )),
    }
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let segments = self.segments();
        let (stages, head) = segments.split_at(segments.len() - 1);
        let token = |prefix: char, width: usize, act: Activation| match act {
            Activation::Relu => format!("{prefix}{width}"),
            Activation::Identity => format!("{prefix}{width}:id"),
        };
        let mut widen = Vec::new();
        let mut stage_text = Vec::new();
        for (s, seg) in stages.iter().enumerate() {
            let widths: Vec<usize> = seg
                .layers
                .iter()
                .map(|&i| self.layers[i].out_dim().unwrap())
                .collect();
            let base = mode_width(&widths);
            let tokens: Vec<String> = seg
                .layers
                .iter()
                .enumerate()
                .map(|(l, &i)| {
                    if widths[l] != base {
                        widen.push(format!("s{s}.l{l}:{}", widths[l]));
                    }
                    token('c', base, self.layers[i].activation)
                })
                .collect();
            stage_text.push(tokens.join(","));
        }
        let head_text: Vec<String> = head[0]
            .layers
            .iter()
            .map(|&i| token('d', self.layers[i].out_dim().unwrap(), self.layers[i].activation))
            .collect();
        write!(
            f,
            "in={} classes={} stages=[{}] head=[{}]",
            self.input_shape,
            self.num_classes,
            stage_text.join("|"),
            head_text.join(",")
        )?;
        if !widen.is_empty() {
            write!(f, " widen={{{}}}", widen.join(","))?;
        }
        Ok(())
    }
}

/// Most common width; ties go to the smallest.
fn mode_width(widths: &[usize]) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &w in widths {
        *counts.entry(w).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    counts
        .into_iter()
        .find(|&(_, c)| c == best)
        .map(|(w, _)| w)
        .unwrap_or(0)
}

fn parse_layer_token(token: &str, prefix: char) -> Result<(usize, Activation)> {
    let err = || Error::ArchParse(format!("bad layer token `{token}` (expected {prefix}<width>[:id])"));
    let body = token.strip_prefix(prefix).ok_or_else(err)?;
    let (width, act) = match body.split_once(':') {
        Some((w, "id")) => (w, Activation::Identity),
        Some(_) => return Err(err()),
        None => (body, Activation::Relu),
    };
    let width: usize = width.parse().map_err(|_| err())?;
    if width == 0 {
        return Err(err());
    }
    Ok((width, act))
}

fn bracketed<'a>(value: &'a str, open: char, close: char, key: &str) -> Result<&'a str> {
    value
        .strip_prefix(open)
        .and_then(|v| v.strip_suffix(close))
        .ok_or_else(|| Error::ArchParse(format!("`{key}` must be enclosed in {open}...{close}")))
}

impl FromStr for ArchitectureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut input = None;
        let mut classes = None;
        let mut stages: Vec<Vec<(usize, Activation)>> = Vec::new();
        let mut head: Vec<(usize, Activation)> = Vec::new();
        let mut widen: Vec<(usize, usize, usize)> = Vec::new();
        let mut seen = Vec::new();
        for part in s.split_whitespace() {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::ArchParse(format!("expected key=value, got `{part}`")))?;
            if seen.contains(&key) {
                return Err(Error::ArchParse(format!("duplicate key `{key}`")));
            }
            seen.push(key);
            match key {
                "in" => input = Some(value.parse::<InputShape>()?),
                "classes" => {
                    let n: usize = value
                        .parse()
                        .map_err(|_| Error::ArchParse(format!("bad class count `{value}`")))?;
                    classes = Some(n);
                }
                "stages" => {
                    let inner = bracketed(value, '[', ']', key)?;
                    if !inner.is_empty() {
                        for stage in inner.split('|') {
                            if stage.is_empty() {
                                return Err(Error::ArchParse("empty stage".into()));
                            }
                            stages.push(
                                stage
                                    .split(',')
                                    .map(|t| parse_layer_token(t, 'c'))
                                    .collect::<Result<_>>()?,
                            );
                        }
                    }
                }
                "head" => {
                    let inner = bracketed(value, '[', ']', key)?;
                    if !inner.is_empty() {
                        head = inner
                            .split(',')
                            .map(|t| parse_layer_token(t, 'd'))
                            .collect::<Result<_>>()?;
                    }
                }
                "widen" => {
                    let inner = bracketed(value, '{', '}', key)?;
                    for entry in inner.split(',').filter(|e| !e.is_empty()) {
                        widen.push(parse_widen_entry(entry)?);
                    }
                }
                other => return Err(Error::ArchParse(format!("unknown key `{other}`"))),
            }
        }
        let input = input.ok_or_else(|| Error::ArchParse("missing `in=`".into()))?;
        let classes = classes.ok_or_else(|| Error::ArchParse("missing `classes=`".into()))?;
        let mut touched = Vec::new();
        for (s_idx, l_idx, width) in widen {
            if touched.contains(&(s_idx, l_idx)) {
                return Err(Error::ArchParse(format!("duplicate widen entry s{s_idx}.l{l_idx}")));
            }
            touched.push((s_idx, l_idx));
            let slot = stages
                .get_mut(s_idx)
                .and_then(|st| st.get_mut(l_idx))
                .ok_or_else(|| {
                    Error::ArchParse(format!("widen entry s{s_idx}.l{l_idx} names no layer"))
                })?;
            slot.0 = width;
        }
        ArchitectureSpec::from_segments(input, classes, &stages, &head)
    }
}

fn parse_widen_entry(entry: &str) -> Result<(usize, usize, usize)> {
    let err = || Error::ArchParse(format!("bad widen entry `{entry}` (expected sI.lJ:W)"));
    let (target, width) = entry.split_once(':').ok_or_else(err)?;
    let (stage, layer) = target.split_once('.').ok_or_else(err)?;
    let stage: usize = stage.strip_prefix('s').ok_or_else(err)?.parse().map_err(|_| err())?;
    let layer: usize = layer.strip_prefix('l').ok_or_else(err)?.parse().map_err(|_| err())?;
    let width: usize = width.parse().map_err(|_| err())?;
    if width == 0 {
        return Err(err());
    }
    Ok((stage, layer, width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_documented_example() {
        let arch: ArchitectureSpec = "in=1x16x16 classes=10 stages=[c8,c8|c16] head=[d32] widen={s0.l1:12}"
            .parse()
            .unwrap();
        assert_eq!(arch.segment_widths(), vec![vec![8, 12], vec![16], vec![32]]);
        assert_eq!(arch.stage_boundaries(), &[2, 4]);
        assert_eq!(arch.flatten_index(), 5);
        // 16 channels on a 4x4 map after two poolings.
        assert_eq!(arch.layers()[6], LayerSpec::dense(256, 32, Activation::Relu));
        assert_eq!(arch.layers()[7], LayerSpec::dense(32, 10, Activation::Identity));
        assert_eq!(
            arch.to_string(),
            "in=1x16x16 classes=10 stages=[c8,c8|c16] head=[d32] widen={s0.l1:12}"
        );
    }

    #[test]
    fn identity_widen_entries_are_absorbed_by_the_canonical_form() {
        let arch: ArchitectureSpec = "in=1x16x16 classes=10 stages=[c8,c8|c16] head=[d32] widen={s1.l0:12}"
            .parse()
            .unwrap();
        assert_eq!(arch.to_string(), "in=1x16x16 classes=10 stages=[c8,c8|c12] head=[d32]");
    }

    #[test]
    fn plain_mlp_has_no_stages() {
        let arch: ArchitectureSpec = "in=3x1x1 classes=3 stages=[] head=[]".parse().unwrap();
        assert_eq!(arch.layers().len(), 2);
        assert_eq!(arch.num_stages(), 0);
        assert_eq!(arch.param_count(), 12);
    }

    #[test]
    fn param_count_matches_hand_count() {
        let arch: ArchitectureSpec = "in=1x8x8 classes=2 stages=[c4] head=[d5]".parse().unwrap();
        // conv 1->4: 36+4, dense 64->5: 320+5, dense 5->2: 10+2
        assert_eq!(arch.param_count(), 40 + 325 + 12);
    }

    #[test]
    fn rejects_bad_structure_with_layer_index() {
        let input = InputShape::new(1, 4, 4);
        let err = ArchitectureSpec::new(
            input,
            2,
            vec![
                LayerSpec::conv(1, 4, Activation::Relu),
                LayerSpec::max_pool(),
                LayerSpec::flatten(),
                LayerSpec::dense(99, 2, Activation::Identity),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArch { layer: 3, .. }), "{err}");

        let err = ArchitectureSpec::new(
            input,
            2,
            vec![
                LayerSpec::flatten(),
                LayerSpec::dense(16, 2, Activation::Relu),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArch { layer: 1, .. }), "{err}");

        let err = ArchitectureSpec::new(
            input,
            2,
            vec![LayerSpec::conv(1, 4, Activation::Relu), LayerSpec::flatten()],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArch { layer: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_malformed_text() {
        for bad in [
            "classes=10",
            "in=1x8x8",
            "in=1x8 classes=10",
            "in=1x8x8 classes=10 stages=[c8|]",
            "in=1x8x8 classes=10 stages=[c0]",
            "in=1x8x8 classes=10 stages=[d8]",
            "in=1x8x8 classes=10 widen={s3.l0:4}",
            "in=1x8x8 classes=10 depth=3",
            "in=1x2x2 classes=10 stages=[c4|c4]",
        ] {
            assert!(bad.parse::<ArchitectureSpec>().is_err(), "{bad}");
        }
    }

    fn arb_arch() -> impl Strategy<Value = ArchitectureSpec> {
        let layer = (1usize..20, prop::bool::weighted(0.9));
        let stages = prop::collection::vec(prop::collection::vec(layer.clone(), 1..4), 0..3);
        let head = prop::collection::vec(layer, 0..3);
        (1usize..4, 1usize..6, stages, head).prop_map(|(c, classes, stages, head)| {
            let act = |relu: bool| if relu { Activation::Relu } else { Activation::Identity };
            let stages: Vec<Vec<_>> = stages
                .into_iter()
                .map(|s| s.into_iter().map(|(w, r)| (w, act(r))).collect())
                .collect();
            let head: Vec<_> = head.into_iter().map(|(w, r)| (w, act(r))).collect();
            ArchitectureSpec::from_segments(InputShape::new(c, 8, 8), classes, &stages, &head).unwrap()
        })
    }

    proptest! {
        #[test]
        fn text_round_trips(arch in arb_arch()) {
            let text = arch.to_string();
            let parsed: ArchitectureSpec = text.parse().unwrap();
            prop_assert_eq!(&parsed, &arch);
            prop_assert_eq!(parsed.to_string(), text);
        }
    }
}
