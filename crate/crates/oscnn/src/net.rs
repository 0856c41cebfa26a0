//! Layer graphs, parameters, and the forward/backward passes.
//!
//! A network is a flat sequence of [`LayerKind`]s applied in order; there is
//! no general autograd. Each layer knows its own backward rule, and
//! [`backward`] replays the sequence in reverse using the caches collected by
//! [`forward`]. The final layer is always a fully connected classifier head
//! producing one logit per class; [`replace_head`] swaps it for a freshly
//! initialised one when a pretrained trunk is repurposed for a new label set.
//!
//! Parameters live in a [`ParamSet`]: an ordered list of named entries, one
//! per parameterised layer, each holding one weight/bias pair — except
//! inception layers, which hold three (their 1x1, 3x3, and 5x5 branches).
//! Gradients, momentum buffers, and serialized models all reuse this
//! structure, so everything that walks parameters does it in the same order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::ops::{
    self, ConvGrads, ConvSpec, MaxPoolIndices, PoolSpec,
};
use crate::tensor::{Real, Tensor};

/// One layer of a network.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// 2-d convolution with square kernels and bias.
    Conv {
        out_channels: usize,
        kernel: usize,
        conv: ConvSpec,
    },
    Relu,
    MaxPool(PoolSpec),
    /// Collapse `[B, C, H, W]` to `[B, C*H*W]`.
    Flatten,
    /// Inverted dropout: at train time each element survives with probability
    /// `1 - p` and is scaled by `1/(1 - p)`; at eval time it is the identity.
    Dropout { p: f64 },
    FullyConnected { out_features: usize },
    /// Three parallel stride-1 convolutions (1x1, 3x3, 5x5) with
    /// shape-preserving padding, concatenated along the channel axis.
    Inception {
        out_1x1: usize,
        out_3x3: usize,
        out_5x5: usize,
    },
}

impl LayerKind {
    /// Branch layout of an inception layer: (out_channels, kernel), in the
    /// fixed order 1x1, 3x3, 5x5. Padding is `kernel / 2`, stride 1.
    fn inception_branches(&self) -> Option<[(usize, usize); 3]> {
        match *self {
            LayerKind::Inception {
                out_1x1,
                out_3x3,
                out_5x5,
            } => Some([(out_1x1, 1), (out_3x3, 3), (out_5x5, 5)]),
            _ => None,
        }
    }

    fn has_params(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv { .. } | LayerKind::FullyConnected { .. } | LayerKind::Inception { .. }
        )
    }

    fn kind_tag(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool(_) => "maxpool",
            LayerKind::Flatten => "flatten",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::FullyConnected { .. } => "fc",
            LayerKind::Inception { .. } => "inception",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerKind::Conv {
                out_channels,
                kernel,
                conv,
            } => write!(
                f,
                "conv {} k{} s{} p{}",
                out_channels, kernel, conv.stride, conv.pad
            ),
            LayerKind::Relu => write!(f, "relu"),
            LayerKind::MaxPool(p) => write!(f, "maxpool w{} s{}", p.window, p.stride),
            LayerKind::Flatten => write!(f, "flatten"),
            LayerKind::Dropout { p } => write!(f, "dropout {p}"),
            LayerKind::FullyConnected { out_features } => write!(f, "fc {out_features}"),
            LayerKind::Inception {
                out_1x1,
                out_3x3,
                out_5x5,
            } => write!(f, "inception {out_1x1} {out_3x3} {out_5x5}"),
        }
    }
}

fn tagged(token: &str, tag: char, line: &str) -> Result<usize> {
    token
        .strip_prefix(tag)
        .and_then(|rest| rest.parse().ok())
        .ok_or_else(|| {
            Error::InvalidArgument(format!("bad layer line {line:?}: expected {tag}<number>"))
        })
}

fn number<T: FromStr>(token: Option<&str>, line: &str) -> Result<T> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("bad layer line {line:?}")))
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut it = line.split_whitespace();
        let bad = || Error::InvalidArgument(format!("bad layer line {line:?}"));
        let kind = match it.next().ok_or_else(bad)? {
            "conv" => LayerKind::Conv {
                out_channels: number(it.next(), line)?,
                kernel: tagged(it.next().ok_or_else(bad)?, 'k', line)?,
                conv: ConvSpec::new(
                    tagged(it.next().ok_or_else(bad)?, 's', line)?,
                    tagged(it.next().ok_or_else(bad)?, 'p', line)?,
                )?,
            },
            "relu" => LayerKind::Relu,
            "maxpool" => LayerKind::MaxPool(PoolSpec::new(
                tagged(it.next().ok_or_else(bad)?, 'w', line)?,
                tagged(it.next().ok_or_else(bad)?, 's', line)?,
            )?),
            "flatten" => LayerKind::Flatten,
            "dropout" => LayerKind::Dropout {
                p: number(it.next(), line)?,
            },
            "fc" => LayerKind::FullyConnected {
                out_features: number(it.next(), line)?,
            },
            "inception" => LayerKind::Inception {
                out_1x1: number(it.next(), line)?,
                out_3x3: number(it.next(), line)?,
                out_5x5: number(it.next(), line)?,
            },
            _ => return Err(bad()),
        };
        if it.next().is_some() {
            return Err(bad());
        }
        Ok(kind)
    }
}

/// Learning-rate role of a parameterised layer: the classifier head trains at
/// the scheduled rate, everything beneath it at the scheduled rate times the
/// hidden-layer multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrRole {
    Hidden,
    Head,
}

/// Feature shape flowing between layers during inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatShape {
    Map {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat {
        features: usize,
    },
}

/// Architecture: the input shape (channels, height, width — batch excluded)
/// plus an ordered list of layers. The last layer must be a fully connected
/// head whose output width is the number of classes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input: [usize; 3],
    pub layers: Vec<LayerKind>,
}

/// Shapes of one parameter entry's weight/bias pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairShape {
    pub weights: Vec<usize>,
    pub bias: Vec<usize>,
}

/// Everything a caller needs to know about one parameterised layer: its
/// stable name, position, learning-rate role, and tensor shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDesc {
    pub name: String,
    pub layer: usize,
    pub role: LrRole,
    pub shapes: Vec<PairShape>,
}

impl NetworkSpec {
    /// Infer the feature shape after every layer, validating the
    /// architecture along the way. Returns one shape per layer.
    pub fn infer_shapes(&self) -> Result<Vec<FeatShape>> {
        let invalid = |layer: usize, msg: String| {
            Error::InvalidArgument(format!("layer {layer}: {msg}"))
        };
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        if self.input.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "input shape {:?} has a zero extent",
                self.input
            )));
        }
        let last_param = self
            .layers
            .iter()
            .rposition(LayerKind::has_params)
            .ok_or_else(|| Error::InvalidArgument("network has no parameterised layers".into()))?;
        match self.layers.last() {
            Some(LayerKind::FullyConnected { .. }) => {}
            _ => {
                return Err(Error::InvalidArgument(
                    "the final layer must be a fully connected classifier head".into(),
                ))
            }
        }
        let mut shape = FeatShape::Map {
            channels: self.input[0],
            height: self.input[1],
            width: self.input[2],
        };
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match (layer, &shape) {
                (
                    LayerKind::Conv {
                        out_channels,
                        kernel,
                        conv,
                    },
                    FeatShape::Map { height, width, .. },
                ) => {
                    if *out_channels == 0 || *kernel == 0 {
                        return Err(invalid(i, "conv channels and kernel must be >= 1".into()));
                    }
                    FeatShape::Map {
                        channels: *out_channels,
                        height: conv.output_extent(*height, *kernel)?,
                        width: conv.output_extent(*width, *kernel)?,
                    }
                }
                (LayerKind::Relu, s) => s.clone(),
                (LayerKind::MaxPool(p), FeatShape::Map { channels, height, width }) => {
                    FeatShape::Map {
                        channels: *channels,
                        height: p.output_extent(*height)?,
                        width: p.output_extent(*width)?,
                    }
                }
                (LayerKind::Flatten, FeatShape::Map { channels, height, width }) => {
                    FeatShape::Flat {
                        features: channels * height * width,
                    }
                }
                (LayerKind::Dropout { p }, s) => {
                    if !(*p > 0.0 && *p < 1.0) {
                        return Err(invalid(i, format!("dropout probability {p} outside (0, 1)")));
                    }
                    match self.layers.get(i + 1) {
                        Some(LayerKind::FullyConnected { .. }) if i + 1 != last_param => s.clone(),
                        Some(LayerKind::FullyConnected { .. }) => {
                            return Err(invalid(
                                i,
                                "dropout may not precede the classifier head".into(),
                            ))
                        }
                        _ => {
                            return Err(invalid(
                                i,
                                "dropout must immediately precede a hidden fully connected layer"
                                    .into(),
                            ))
                        }
                    }
                }
                (LayerKind::FullyConnected { out_features }, FeatShape::Flat { .. }) => {
                    if *out_features == 0 {
                        return Err(invalid(i, "fc output width must be >= 1".into()));
                    }
                    FeatShape::Flat {
                        features: *out_features,
                    }
                }
                (LayerKind::Inception { .. }, FeatShape::Map { height, width, .. }) => {
                    let branches = layer.inception_branches().unwrap();
                    if branches.iter().any(|&(out, _)| out == 0) {
                        return Err(invalid(i, "inception branch channels must be >= 1".into()));
                    }
                    // Shape-preserving padding needs the input to fit the
                    // largest kernel after padding; output_extent checks it.
                    for &(_, k) in &branches {
                        ConvSpec::new(1, k / 2)?.output_extent(*height, k)?;
                        ConvSpec::new(1, k / 2)?.output_extent(*width, k)?;
                    }
                    FeatShape::Map {
                        channels: branches.iter().map(|&(out, _)| out).sum(),
                        height: *height,
                        width: *width,
                    }
                }
                (l, s) => {
                    return Err(invalid(
                        i,
                        format!("{} cannot follow a {} feature", l.kind_tag(), match s {
                            FeatShape::Map { .. } => "spatial",
                            FeatShape::Flat { .. } => "flat",
                        }),
                    ))
                }
            };
            out.push(shape.clone());
        }
        Ok(out)
    }

    /// Names, roles, and tensor shapes of all parameterised layers, in layer
    /// order. Names are `<kind tag><ordinal>` with a 1-based ordinal per
    /// kind: `conv1`, `conv2`, `inception1`, `fc1`, ...
    pub fn param_descs(&self) -> Result<Vec<ParamDesc>> {
        let shapes = self.infer_shapes()?;
        let last_param = self.layers.iter().rposition(LayerKind::has_params).unwrap();
        let mut counts = std::collections::HashMap::new();
        let mut descs = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if !layer.has_params() {
                continue;
            }
            let in_shape = if i == 0 {
                FeatShape::Map {
                    channels: self.input[0],
                    height: self.input[1],
                    width: self.input[2],
                }
            } else {
                shapes[i - 1].clone()
            };
            let ordinal = counts
                .entry(layer.kind_tag())
                .and_modify(|c| *c += 1)
                .or_insert(1usize);
            let name = format!("{}{}", layer.kind_tag(), ordinal);
            let pair_shapes = match (layer, &in_shape) {
                (
                    LayerKind::Conv {
                        out_channels,
                        kernel,
                        ..
                    },
                    FeatShape::Map { channels, .. },
                ) => vec![PairShape {
                    weights: vec![*out_channels, *channels, *kernel, *kernel],
                    bias: vec![*out_channels],
                }],
                (LayerKind::FullyConnected { out_features }, FeatShape::Flat { features }) => {
                    vec![PairShape {
                        weights: vec![*features, *out_features],
                        bias: vec![*out_features],
                    }]
                }
                (LayerKind::Inception { .. }, FeatShape::Map { channels, .. }) => layer
                    .inception_branches()
                    .unwrap()
                    .iter()
                    .map(|&(out, k)| PairShape {
                        weights: vec![out, *channels, k, k],
                        bias: vec![out],
                    })
                    .collect(),
                _ => unreachable!("infer_shapes validated layer/input compatibility"),
            };
            descs.push(ParamDesc {
                name,
                layer: i,
                role: if i == last_param {
                    LrRole::Head
                } else {
                    LrRole::Hidden
                },
                shapes: pair_shapes,
            });
        }
        Ok(descs)
    }

    /// Number of classes: the output width of the classifier head.
    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerKind::FullyConnected { out_features }) => *out_features,
            _ => 0,
        }
    }

    /// Textual form: an `input` line followed by one line per layer. The
    /// inverse of [`NetworkSpec::from_lines`].
    pub fn to_lines(&self) -> Vec<String> {
        let mut lines = vec![format!(
            "input {} {} {}",
            self.input[0], self.input[1], self.input[2]
        )];
        lines.extend(self.layers.iter().map(|l| l.to_string()));
        lines
    }

    pub fn from_lines<S: AsRef<str>>(lines: &[S]) -> Result<Self> {
        let first = lines
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty architecture block".into()))?
            .as_ref();
        let mut it = first.split_whitespace();
        if it.next() != Some("input") {
            return Err(Error::InvalidArgument(format!(
                "architecture block must start with an input line, got {first:?}"
            )));
        }
        let input = [
            number(it.next(), first)?,
            number(it.next(), first)?,
            number(it.next(), first)?,
        ];
        let layers = lines[1..]
            .iter()
            .map(|l| l.as_ref().parse())
            .collect::<Result<Vec<_>>>()?;
        Ok(NetworkSpec { input, layers })
    }
}

/// One weight/bias pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPair<T: Real = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Ordered, named parameter storage. The order matches
/// [`NetworkSpec::param_descs`], and the flattened tensor order (entries in
/// order, pairs in order, weights before bias) is the contract shared with
/// optimizer state and the model file's tensor directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T: Real = f32> {
    entries: Vec<(String, Vec<ParamPair<T>>)>,
}

impl<T: Real> ParamSet<T> {
    pub fn new(entries: Vec<(String, Vec<ParamPair<T>>)>) -> Self {
        ParamSet { entries }
    }

    pub fn entries(&self) -> &[(String, Vec<ParamPair<T>>)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&[ParamPair<T>]> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.as_slice())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Vec<ParamPair<T>>> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
    }

    /// All tensors in the canonical flattened order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.entries
            .iter()
            .flat_map(|(_, pairs)| pairs.iter().flat_map(|p| [&p.weights, &p.bias]))
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.entries
            .iter_mut()
            .flat_map(|(_, pairs)| pairs.iter_mut().flat_map(|p| [&mut p.weights, &mut p.bias]))
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, pairs)| {
                    (
                        n.clone(),
                        pairs
                            .iter()
                            .map(|p| ParamPair {
                                weights: Tensor::zeros(p.weights.dims()),
                                bias: Tensor::zeros(p.bias.dims()),
                            })
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, pairs)| {
                    (
                        n.clone(),
                        pairs
                            .iter()
                            .map(|p| ParamPair {
                                weights: p.weights.cast(),
                                bias: p.bias.cast(),
                            })
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Largest absolute difference across all tensors. Panics if the two
    /// sets have different structure.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let (a, b) = (self.tensors(), other.tensors());
        assert_eq!(a.len(), b.len(), "param set structure mismatch");
        a.iter()
            .zip(&b)
            .map(|(x, y)| x.max_abs_diff(y))
            .fold(0.0, f64::max)
    }

    /// Check that this set's names and shapes match a spec exactly.
    pub fn conforms_to(&self, spec: &NetworkSpec) -> Result<()> {
        let descs = spec.param_descs()?;
        if descs.len() != self.entries.len() {
            return Err(Error::shape(
                "ParamSet::conforms_to",
                format!("{} parameter entries", descs.len()),
                format!("{}", self.entries.len()),
            ));
        }
        for (desc, (name, pairs)) in descs.iter().zip(&self.entries) {
            if *name != desc.name || pairs.len() != desc.shapes.len() {
                return Err(Error::shape(
                    "ParamSet::conforms_to",
                    format!("entry {} with {} pairs", desc.name, desc.shapes.len()),
                    format!("entry {} with {} pairs", name, pairs.len()),
                ));
            }
            for (shape, pair) in desc.shapes.iter().zip(pairs) {
                if pair.weights.dims() != shape.weights || pair.bias.dims() != shape.bias {
                    return Err(Error::shape(
                        format!("parameter {name}"),
                        format!("{:?}/{:?}", shape.weights, shape.bias),
                        format!("{:?}/{:?}", pair.weights.dims(), pair.bias.dims()),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Standard deviation classifier heads are drawn with, both when a network
/// is first built and when a head is replaced for fine-tuning.
pub const HEAD_INIT_STDDEV: f64 = 0.01;

/// Scale of mean-subtracted pixel inputs (values spread over roughly
/// ±128; a uniform spread of that width has standard deviation 128/√3).
/// Variance-preserving init assumes unit-scale inputs, so the first
/// feature layer divides this factor out of its draw; activations
/// everywhere downstream then start at order one.
pub const RAW_PIXEL_SCALE: f64 = 73.9; // 128 / sqrt(3)

/// Draw a weight tensor from N(0, std^2), filling elements in row-major
/// order so initialisation is a pure function of the RNG state.
fn normal_tensor(dims: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let dist = Normal::new(0.0, std).expect("valid std");
    let data = (0..dims.iter().product())
        .map(|_| dist.sample(rng) as f32)
        .collect();
    Tensor::from_vec(dims, data).expect("length matches dims")
}

fn fan_in(weight_dims: &[usize]) -> usize {
    match weight_dims.len() {
        // OIHW convolution weights: inputs per output = C * kh * kw.
        4 => weight_dims[1] * weight_dims[2] * weight_dims[3],
        // [in, out] fully connected weights.
        2 => weight_dims[0],
        _ => unreachable!("weights are rank 2 or 4"),
    }
}

/// Initialise parameters for a spec: weights from N(0, sqrt(2/fan_in))
/// (rectifier-aware scaling), biases zero.
pub fn init_params(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Result<ParamSet> {
    let entries = spec
        .param_descs()?
        .into_iter()
        .enumerate()
        .map(|(slot, desc)| {
            // The classifier head always starts from N(0, 0.01) — the same
            // draw a replaced head gets — so the initial logits are small
            // and the first optimizer steps cannot blow up the trunk.
            // Feature layers use variance-preserving init, with the first
            // one compensating for the raw-pixel input scale.
            let head = desc.role == LrRole::Head;
            let input_scale = if slot == 0 && !head { RAW_PIXEL_SCALE } else { 1.0 };
            let pairs = desc
                .shapes
                .iter()
                .map(|s| ParamPair {
                    weights: normal_tensor(
                        &s.weights,
                        if head {
                            HEAD_INIT_STDDEV
                        } else {
                            (2.0 / fan_in(&s.weights) as f64).sqrt() / input_scale
                        },
                        rng,
                    ),
                    bias: Tensor::zeros(&s.bias),
                })
                .collect();
            (desc.name, pairs)
        })
        .collect();
    Ok(ParamSet { entries })
}

/// Swap the classifier head for a fresh one with `classes` outputs. Hidden
/// parameters are carried over untouched; the new head's weights are drawn
/// from N(0, 0.01) and its bias is zero, so fine-tuning starts from the
/// pretrained trunk with a gently initialised classifier.
pub fn replace_head(
    spec: &NetworkSpec,
    params: &ParamSet,
    classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(NetworkSpec, ParamSet)> {
    if classes == 0 {
        return Err(Error::InvalidArgument("head needs at least one class".into()));
    }
    params.conforms_to(spec)?;
    let mut new_spec = spec.clone();
    match new_spec.layers.last_mut() {
        Some(LayerKind::FullyConnected { out_features }) => *out_features = classes,
        _ => unreachable!("conforms_to validated the head"),
    }
    let descs = new_spec.param_descs()?;
    let head = descs.last().unwrap();
    let mut entries: Vec<_> = params.entries.clone();
    let slot = entries.last_mut().unwrap();
    slot.1 = vec![ParamPair {
        weights: normal_tensor(&head.shapes[0].weights, HEAD_INIT_STDDEV, rng),
        bias: Tensor::zeros(&head.shapes[0].bias),
    }];
    Ok((new_spec, ParamSet { entries }))
}

/// Whether dropout layers are active, and if so where their masks come from.
pub enum DropoutMode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

enum Aux<T> {
    None,
    Pool(MaxPoolIndices),
    /// Per-element multipliers: 0 for dropped, 1/(1-p) for kept.
    Mask(Tensor<T>),
}

/// Per-layer caches from a forward pass, consumed by [`backward`].
pub struct ForwardTrace<T = f32> {
    inputs: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
}

fn split_channels<T: Real>(x: &Tensor<T>, widths: &[usize]) -> Vec<Tensor<T>> {
    let d = x.dims();
    let (batch, h, w) = (d[0], d[2], d[3]);
    let total: usize = widths.iter().sum();
    assert_eq!(d[1], total, "channel split widths must cover the tensor");
    let plane = h * w;
    let mut parts = Vec::with_capacity(widths.len());
    let mut start_ch = 0;
    for &width in widths {
        let mut part = Tensor::zeros(&[batch, width, h, w]);
        for n in 0..batch {
            let src = &x.data()[(n * total + start_ch) * plane..][..width * plane];
            part.data_mut()[n * width * plane..][..width * plane].copy_from_slice(src);
        }
        parts.push(part);
        start_ch += width;
    }
    parts
}

fn concat_channels<T: Real>(parts: &[Tensor<T>]) -> Tensor<T> {
    let d0 = parts[0].dims();
    let (batch, h, w) = (d0[0], d0[2], d0[3]);
    let total: usize = parts.iter().map(|p| p.dims()[1]).sum();
    let plane = h * w;
    let mut out = Tensor::zeros(&[batch, total, h, w]);
    let mut start_ch = 0;
    for part in parts {
        let width = part.dims()[1];
        assert_eq!([part.dims()[0], part.dims()[2], part.dims()[3]], [batch, h, w]);
        for n in 0..batch {
            out.data_mut()[(n * total + start_ch) * plane..][..width * plane]
                .copy_from_slice(&part.data()[n * width * plane..][..width * plane]);
        }
        start_ch += width;
    }
    out
}

fn add_bias_rows<T: Real>(x: &mut Tensor<T>, bias: &Tensor<T>) {
    let n = bias.len();
    for row in x.data_mut().chunks_exact_mut(n) {
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
}

fn branch_spec(kernel: usize) -> ConvSpec {
    ConvSpec {
        stride: 1,
        pad: kernel / 2,
    }
}

/// Run the network on a batch `[B, C, H, W]`, producing logits `[B, classes]`
/// and the caches needed for [`backward`]. Dropout fires only in
/// [`DropoutMode::Train`], drawing one mask decision per element in order.
pub fn forward<T: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<T>,
    input: &Tensor<T>,
    mut mode: DropoutMode<'_>,
) -> Result<(Tensor<T>, ForwardTrace<T>)> {
    let d = input.dims();
    if d.len() != 4 || d[1..] != spec.input {
        return Err(Error::shape(
            "network input",
            format!("[batch, {}, {}, {}]", spec.input[0], spec.input[1], spec.input[2]),
            format!("{d:?}"),
        ));
    }
    let descs = spec.param_descs()?;
    let mut by_layer: std::collections::HashMap<usize, &str> = descs
        .iter()
        .map(|desc| (desc.layer, desc.name.as_str()))
        .collect();
    let mut x = input.clone();
    let mut inputs = Vec::with_capacity(spec.layers.len());
    let mut aux = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        inputs.push(x.clone());
        let mut this_aux = Aux::None;
        x = match layer {
            LayerKind::Conv { conv, .. } => {
                let pair = &params.get(by_layer.remove(&i).unwrap()).unwrap()[0];
                ops::conv2d_forward(&x, &pair.weights, &pair.bias, *conv)?
            }
            LayerKind::Relu => ops::relu(&x),
            LayerKind::MaxPool(p) => {
                let (y, idx) = ops::maxpool_forward(&x, *p)?;
                this_aux = Aux::Pool(idx);
                y
            }
            LayerKind::Flatten => {
                let d = x.dims();
                x.reshaped(&[d[0], d[1] * d[2] * d[3]])?
            }
            LayerKind::Dropout { p } => match &mut mode {
                DropoutMode::Eval => x,
                DropoutMode::Train(rng) => {
                    let keep_scale = T::from_f64(1.0 / (1.0 - p));
                    let mask_data = (0..x.len())
                        .map(|_| {
                            if rng.gen_bool(*p) {
                                T::zero()
                            } else {
                                keep_scale
                            }
                        })
                        .collect();
                    let mask = Tensor::from_vec(x.dims(), mask_data)?;
                    let mut y = x;
                    for (v, &m) in y.data_mut().iter_mut().zip(mask.data()) {
                        *v *= m;
                    }
                    this_aux = Aux::Mask(mask);
                    y
                }
            },
            LayerKind::FullyConnected { .. } => {
                let pair = &params.get(by_layer.remove(&i).unwrap()).unwrap()[0];
                let mut y = ops::matmul(&x, &pair.weights)?;
                add_bias_rows(&mut y, &pair.bias);
                y
            }
            LayerKind::Inception { .. } => {
                let pairs = params.get(by_layer.remove(&i).unwrap()).unwrap();
                let branches = layer.inception_branches().unwrap();
                let outs = branches
                    .iter()
                    .zip(pairs)
                    .map(|(&(_, k), pair)| {
                        ops::conv2d_forward(&x, &pair.weights, &pair.bias, branch_spec(k))
                    })
                    .collect::<Result<Vec<_>>>()?;
                concat_channels(&outs)
            }
        };
        aux.push(this_aux);
    }
    Ok((x, ForwardTrace { inputs, aux }))
}

/// Backward pass: given the caches from [`forward`] and the loss gradient at
/// the logits, produce a gradient set with the same structure as the
/// parameters.
pub fn backward<T: Real>(
    spec: &NetworkSpec,
    params: &ParamSet<T>,
    trace: &ForwardTrace<T>,
    grad_logits: &Tensor<T>,
) -> Result<ParamSet<T>> {
    let mut grads = params.zeros_like();
    let descs = spec.param_descs()?;
    let by_layer: std::collections::HashMap<usize, &str> = descs
        .iter()
        .map(|desc| (desc.layer, desc.name.as_str()))
        .collect();
    let mut g = grad_logits.clone();
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let x = &trace.inputs[i];
        g = match layer {
            LayerKind::Conv { conv, .. } => {
                let name = by_layer[&i];
                let pair = &params.get(name).unwrap()[0];
                let ConvGrads { input, weights, bias } =
                    ops::conv2d_backward(x, &pair.weights, *conv, &g)?;
                let slot = &mut grads.get_mut(name).unwrap()[0];
                slot.weights = weights;
                slot.bias = bias;
                input
            }
            LayerKind::Relu => ops::relu_backward(x, &g),
            LayerKind::MaxPool(_) => match &trace.aux[i] {
                Aux::Pool(idx) => ops::maxpool_backward(idx, &g)?,
                _ => unreachable!("pool layer recorded no indices"),
            },
            LayerKind::Flatten => g.reshaped(x.dims())?,
            LayerKind::Dropout { .. } => match &trace.aux[i] {
                Aux::Mask(mask) => {
                    let mut gx = g;
                    for (v, &m) in gx.data_mut().iter_mut().zip(mask.data()) {
                        *v *= m;
                    }
                    gx
                }
                Aux::None => g,
                Aux::Pool(_) => unreachable!("dropout layer recorded pool indices"),
            },
            LayerKind::FullyConnected { .. } => {
                let name = by_layer[&i];
                let pair = &params.get(name).unwrap()[0];
                let (gx, gw) = ops::matmul_backward(x, &pair.weights, &g)?;
                let n = pair.bias.len();
                let mut gb = Tensor::zeros(&[n]);
                for row in g.data().chunks_exact(n) {
                    for (b, &v) in gb.data_mut().iter_mut().zip(row) {
                        *b += v;
                    }
                }
                let slot = &mut grads.get_mut(name).unwrap()[0];
                slot.weights = gw;
                slot.bias = gb;
                gx
            }
            LayerKind::Inception { .. } => {
                let name = by_layer[&i];
                let pairs = params.get(name).unwrap();
                let branches = layer.inception_branches().unwrap();
                let widths: Vec<usize> = branches.iter().map(|&(out, _)| out).collect();
                let parts = split_channels(&g, &widths);
                let mut gx: Option<Tensor<T>> = None;
                for ((&(_, k), pair), (part, slot)) in branches
                    .iter()
                    .zip(pairs)
                    .zip(parts.iter().zip(grads.get_mut(name).unwrap().iter_mut()))
                {
                    let b = ops::conv2d_backward(x, &pair.weights, branch_spec(k), part)?;
                    slot.weights = b.weights;
                    slot.bias = b.bias;
                    gx = Some(match gx {
                        None => b.input,
                        Some(mut acc) => {
                            for (a, &v) in acc.data_mut().iter_mut().zip(b.input.data()) {
                                *a += v;
                            }
                            acc
                        }
                    });
                }
                gx.unwrap()
            }
        };
    }
    Ok(grads)
}

/// Row-wise softmax of a `[B, C]` logit matrix.
pub fn softmax_rows<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let d = logits.dims();
    assert_eq!(d.len(), 2, "softmax_rows expects [batch, classes]");
    let c = d[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean cross-entropy of softmaxed logits against integer labels, plus the
/// gradient with respect to the logits: `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    let d = logits.dims();
    if d.len() != 2 || d[0] != labels.len() {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("[{}, classes] logits", labels.len()),
            format!("{d:?}"),
        ));
    }
    let (b, c) = (d[0], d[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let mut grad = softmax_rows(logits);
    let inv_b = T::from_f64(1.0 / b as f64);
    let mut loss = T::zero();
    for (row_i, (&label, logit_row)) in labels.iter().zip(logits.data().chunks_exact(c)).enumerate()
    {
        // loss via log-sum-exp over the raw logits for numerical stability
        let max = logit_row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = logit_row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        loss += lse - logit_row[label];
        let grow = &mut grad.data_mut()[row_i * c..][..c];
        grow[label] -= T::one();
        for v in grow.iter_mut() {
            *v *= inv_b;
        }
    }
    Ok((loss * inv_b, grad))
}

/// Index of the largest value; first occurrence wins on ties.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Preset architectures, all taking 3-channel 56x56 crops from images
/// resized to 64x64 — the toy-scale counterparts of the classic
/// 224-or-227-on-256 input geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetFlavor {
    /// Three conv/pool stages and a dropout-regularised hidden
    /// fully connected layer: the shallower of the two families.
    DeepToy,
    /// Two conv stages feeding four inception blocks with a single
    /// fully connected head: deeper, multi-branch.
    VeryDeepToy,
    /// Six plain conv stages with a single head: deeper as a straight stack.
    VeryDeepPlainToy,
}

impl PresetFlavor {
    pub const ALL: [PresetFlavor; 3] = [
        PresetFlavor::DeepToy,
        PresetFlavor::VeryDeepToy,
        PresetFlavor::VeryDeepPlainToy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PresetFlavor::DeepToy => "deep_toy",
            PresetFlavor::VeryDeepToy => "verydeep_toy",
            PresetFlavor::VeryDeepPlainToy => "verydeep_plain_toy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown preset {s:?}; expected one of deep_toy, verydeep_toy, verydeep_plain_toy"
                ))
            })
    }

    /// Side length of the square crops the network consumes.
    pub fn crop_size(self) -> usize {
        56
    }

    /// Side length images are resized to before cropping.
    pub fn resize_to(self) -> usize {
        64
    }
}

impl fmt::Display for PresetFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn conv3(out_channels: usize) -> LayerKind {
    LayerKind::Conv {
        out_channels,
        kernel: 3,
        conv: ConvSpec { stride: 1, pad: 1 },
    }
}

fn pool2() -> LayerKind {
    LayerKind::MaxPool(PoolSpec { window: 2, stride: 2 })
}

/// Build a preset architecture with `classes` outputs and freshly
/// initialised parameters.
pub fn build_preset(
    flavor: PresetFlavor,
    classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(NetworkSpec, ParamSet)> {
    if classes == 0 {
        return Err(Error::InvalidArgument("presets need at least one class".into()));
    }
    use LayerKind::*;
    // Channel widths are sized so a full train run stays in the tens of
    // gigamultiplies on 56x56 crops: cheap enough for a laptop core, wide
    // enough to learn the synthetic cues. The very-deep flavors carry more
    // weight layers and cost roughly 1.5-2x the deep flavor per image.
    let layers = match flavor {
        PresetFlavor::DeepToy => vec![
            conv3(6),
            Relu,
            pool2(),
            conv3(10),
            Relu,
            pool2(),
            conv3(14),
            Relu,
            pool2(),
            Flatten,
            Dropout { p: 0.5 },
            FullyConnected { out_features: 48 },
            Relu,
            FullyConnected { out_features: classes },
        ],
        PresetFlavor::VeryDeepToy => vec![
            conv3(6),
            Relu,
            pool2(),
            conv3(10),
            Relu,
            pool2(),
            Inception { out_1x1: 3, out_3x3: 5, out_5x5: 3 },
            Relu,
            Inception { out_1x1: 3, out_3x3: 6, out_5x5: 3 },
            Relu,
            Inception { out_1x1: 4, out_3x3: 6, out_5x5: 4 },
            Relu,
            pool2(),
            Inception { out_1x1: 4, out_3x3: 8, out_5x5: 4 },
            Relu,
            pool2(),
            Flatten,
            FullyConnected { out_features: classes },
        ],
        PresetFlavor::VeryDeepPlainToy => vec![
            conv3(6),
            Relu,
            pool2(),
            conv3(10),
            Relu,
            conv3(10),
            Relu,
            pool2(),
            conv3(14),
            Relu,
            conv3(14),
            Relu,
            pool2(),
            conv3(16),
            Relu,
            pool2(),
            Flatten,
            FullyConnected { out_features: classes },
        ],
    };
    let spec = NetworkSpec {
        input: [3, flavor.crop_size(), flavor.crop_size()],
        layers,
    };
    let params = init_params(&spec, rng)?;
    Ok((spec, params))
}
