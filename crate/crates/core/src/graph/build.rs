//! Lowering a weights file to a packed layer graph with per-layer level costs.

use serde::{Deserialize, Serialize};

use super::model::{LayerKind, ModelWeights, Topology};
use super::GraphError;
use crate::aespa::{hermite_coeffs, FoldRecord, QuadActivation};
use crate::packing::{ConvLayerSpec, LinearSpec, PackingFormat, Shape, Variant};

/// How convolutions choose their output layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvMode {
    /// Every convolution switches between layouts A and B.
    Alternating,
    /// One dense channel-blocked layout throughout.
    Fixed,
}

#[derive(Clone, Debug)]
pub enum Node {
    Conv(ConvLayerSpec),
    /// Output is `x ⊙ (x + b/a)`; the next linear consumer carries `fold`.
    Activation { act: QuadActivation, fold: FoldRecord },
    Downsample { target: PackingFormat },
    AvgPool,
    Fc(LinearSpec),
    /// Adds the input of layer `source`, after applying its pending fold if any.
    ResidualAdd { source: usize, shortcut_fold: Option<FoldRecord> },
}

impl Node {
    pub fn kind(&self) -> &'static str {
        match self {
            Node::Conv(_) => "conv",
            Node::Activation { .. } => "activation",
            Node::Downsample { .. } => "downsample",
            Node::AvgPool => "avgpool",
            Node::Fc(_) => "fc",
            Node::ResidualAdd { .. } => "residual_add",
        }
    }

    /// Multiplicative levels consumed on the main path.
    pub fn level_cost(&self) -> usize {
        match self {
            Node::Conv(_) => 2,
            Node::Activation { .. } | Node::Downsample { .. } | Node::Fc(_) => 1,
            Node::AvgPool | Node::ResidualAdd { .. } => 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GraphLayer {
    pub node: Node,
    pub in_shape: Shape,
    /// `None` once the data is a feature vector.
    pub in_format: Option<PackingFormat>,
    /// Ciphertexts entering the layer.
    pub live_cts: usize,
}

#[derive(Clone, Debug)]
pub struct HcnnGraph {
    pub topology: Topology,
    pub mode: ConvMode,
    pub slots: usize,
    pub input_shape: Shape,
    pub input_format: PackingFormat,
    pub layers: Vec<GraphLayer>,
    pub outputs: usize,
}

impl HcnnGraph {
    pub fn level_costs(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.node.level_cost()).collect()
    }

    pub fn total_cost(&self) -> usize {
        self.level_costs().iter().sum()
    }

    /// Whether a refresh may run just before layer `i`: not strictly inside a residual
    /// span, where the shortcut would keep its old level.
    pub fn refresh_allowed(&self, i: usize) -> bool {
        !self.layers.iter().enumerate().any(|(j, l)| match l.node {
            Node::ResidualAdd { source, .. } => source < i && i <= j,
            _ => false,
        })
    }

    pub fn residual_sources(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l.node {
                Node::ResidualAdd { source, .. } => Some(source),
                _ => None,
            })
            .collect()
    }
}

fn prev_pow2(x: usize) -> usize {
    if x == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - x.leading_zeros())
    }
}

/// Largest power-of-two channel count, up to `c`, whose blocks fit in the slots.
fn fit_multiplex(c: usize, block: usize, slots: usize, shape: Shape) -> Result<usize, GraphError> {
    let m = c.next_power_of_two().min(prev_pow2(slots / block.max(1)));
    if m == 0 {
        return Err(GraphError::ShapeChain(format!("one channel of {shape} needs {block} slots, only {slots} available")));
    }
    Ok(m)
}

fn chain_err(idx: usize, msg: impl std::fmt::Display) -> GraphError {
    GraphError::ShapeChain(format!("layer {idx}: {msg}"))
}

/// Lowers `model` for a ring with `slots` slots.
pub fn build_graph(model: &ModelWeights, slots: usize, mode: ConvMode) -> Result<HcnnGraph, GraphError> {
    if model.layers.is_empty() {
        return Err(GraphError::UnsupportedTopology("empty layer list".into()));
    }
    let topology = Topology::parse(&model.topology)?;
    let skeleton = topology.skeleton();
    if model.input_shape() != topology.input_shape() || skeleton.len() != model.layers.len() {
        return Err(GraphError::ShapeChain(format!("layers do not follow the {} topology", topology.name())));
    }
    for (idx, ((kind, shape, stride, source), l)) in skeleton.iter().zip(&model.layers).enumerate() {
        let shape_ok = match kind {
            LayerKind::Conv | LayerKind::Fc => &l.shape == shape && l.stride.unwrap_or(1) == stride.unwrap_or(1),
            _ => true,
        };
        if l.kind != *kind || !shape_ok || (l.kind == LayerKind::ResidualAdd && l.source != *source) {
            return Err(chain_err(idx, format!("expected {kind:?} {shape:?}, found {:?} {:?}", l.kind, l.shape)));
        }
    }

    let max_channels = skeleton.iter().filter(|s| s.0 == LayerKind::Conv).flat_map(|s| [s.1[0], s.1[1]]).max().unwrap_or(1);
    let lanes = match mode {
        ConvMode::Alternating => max_channels.next_power_of_two(),
        ConvMode::Fixed => 1,
    };
    let input_shape = model.input_shape();
    let block = input_shape.h * input_shape.w * lanes;
    let input_format = PackingFormat::a(fit_multiplex(input_shape.c, block, slots, input_shape)?, 1, lanes);
    input_format.validate(input_shape, slots)?;

    let mut layers = Vec::with_capacity(model.layers.len());
    let mut shape = input_shape;
    let mut format = Some(input_format);
    let mut pending: Option<FoldRecord> = None;
    let mut fold_at_input: Vec<Option<FoldRecord>> = Vec::new();
    let mut format_at_input: Vec<Option<PackingFormat>> = Vec::new();
    for (idx, l) in model.layers.iter().enumerate() {
        fold_at_input.push(pending.clone());
        format_at_input.push(format);
        let live = format.map_or(1, |f| f.num_cts(shape));
        let (in_shape, in_format) = (shape, format);
        let node = match l.kind {
            LayerKind::Conv => {
                let f = format.ok_or_else(|| chain_err(idx, "convolution after pooling"))?;
                let (o, i, k, s) = (l.shape[0], l.shape[1], l.shape[2], l.stride.unwrap_or(1));
                let out_shape = Shape::new(o, shape.h / s, shape.w / s);
                let out_block = out_shape.h * f.gap * s * out_shape.w * f.gap * s * f.lanes;
                let out_format = match (mode, f.variant) {
                    (ConvMode::Alternating, Variant::A) => PackingFormat::b(f.lanes, f.gap * s),
                    (_, _) => PackingFormat::a(fit_multiplex(o, out_block, slots, out_shape)?, f.gap * s, f.lanes),
                };
                let mut spec =
                    ConvLayerSpec::new(i, o, k, s, l.weight_values()?, l.bias_values(o)?, f, out_format).map_err(|e| chain_err(idx, e))?;
                if let Some(fold) = pending.take() {
                    spec.pre_scale = fold.pre_scale;
                    spec.input_offset = fold.offset;
                }
                out_format.validate(out_shape, slots)?;
                shape = out_shape;
                format = Some(out_format);
                Node::Conv(spec)
            }
            LayerKind::Aespa => {
                if pending.is_some() {
                    return Err(chain_err(idx, "two activations without a linear layer between them"));
                }
                let a = l.aespa.as_ref().ok_or_else(|| chain_err(idx, "missing aespa block"))?;
                let chs = a.channels()?;
                if chs.len() != shape.c {
                    return Err(chain_err(idx, format!("{} activation channels for {} tensor channels", chs.len(), shape.c)));
                }
                let basis = hermite_coeffs(chs[0].degree())?;
                let act = QuadActivation::from_channels(&chs, &basis)?;
                let fold = act.fold_record();
                pending = Some(fold.clone());
                Node::Activation { act, fold }
            }
            LayerKind::Downsample => {
                let f = format.ok_or_else(|| chain_err(idx, "downsample after pooling"))?;
                shape = Shape::new(shape.c, shape.h / 2, shape.w / 2);
                format = Some(f.strided(2));
                Node::Downsample { target: f.strided(2) }
            }
            LayerKind::Avgpool => {
                format.ok_or_else(|| chain_err(idx, "pooling twice"))?;
                format = None;
                shape = Shape::new(shape.c, 1, 1);
                Node::AvgPool
            }
            LayerKind::Fc => {
                if format.is_some() {
                    return Err(chain_err(idx, "dense layer expects pooled features"));
                }
                let (o, i) = (l.shape[0], l.shape[1]);
                if i != shape.c {
                    return Err(chain_err(idx, format!("{} features into a {i}-input dense layer", shape.c)));
                }
                let mut spec = LinearSpec::new(i, o, l.weight_values()?, l.bias_values(o)?).map_err(|e| chain_err(idx, e))?;
                if let Some(fold) = pending.take() {
                    spec.pre_scale = fold.pre_scale;
                    spec.input_offset = fold.offset;
                }
                shape = Shape::new(o, 1, 1);
                Node::Fc(spec)
            }
            LayerKind::ResidualAdd => {
                let source = l.source.filter(|&s| s < idx).ok_or_else(|| chain_err(idx, "residual source must precede the add"))?;
                if pending.is_some() {
                    return Err(chain_err(idx, "residual add directly after an activation"));
                }
                if format_at_input[source] != format || layers.get(source).map(|g: &GraphLayer| g.in_shape) != Some(shape) {
                    return Err(chain_err(idx, "shortcut and main branch differ in layout or shape"));
                }
                Node::ResidualAdd { source, shortcut_fold: fold_at_input[source].clone() }
            }
        };
        layers.push(GraphLayer { node, in_shape, in_format, live_cts: live });
    }
    if pending.is_some() {
        return Err(GraphError::ShapeChain("final activation has no linear layer to absorb its fold".into()));
    }
    if format.is_some() {
        return Err(GraphError::ShapeChain("network must end with pooled features and a dense layer".into()));
    }
    Ok(HcnnGraph { topology, mode, slots, input_shape, input_format, layers, outputs: shape.c })
}
