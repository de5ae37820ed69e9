//! Layer-by-layer executor with level checks and per-layer cost accounting.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::build::{ConvMode, HcnnGraph, Node};
use super::plan::{plan_levels, LevelPlan, PlanOptions};
use super::{GraphError, ModelWeights};
use crate::aespa::he_activation;
use crate::ckks::{CkksParams, RefreshMode};
use crate::packing::{
    avgpool_global, channel_affine, conv2d, conv2d_fixed_baseline, downsample, encrypt_tensor, fully_connected, residual_add,
    OpTally, Ops, PackedTensor, PlainBackend, SlotBackend, SlotVector, Tensor3,
};

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub kind: String,
    pub entry_level: usize,
    pub exit_level: usize,
    pub live_cts: usize,
    pub refreshed_before: bool,
    pub tally: OpTally,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub version: u32,
    pub topology: String,
    pub conv_mode: ConvMode,
    pub backend: String,
    /// Set when toy parameters or debug refresh were involved.
    pub insecure: bool,
    pub layers: Vec<LayerReport>,
    pub total: OpTally,
    pub total_ms: f64,
    /// Distinct left-rotation amounts the run needed; a key set covering them avoids composed rotations.
    pub rotation_steps: Vec<usize>,
}

impl CostReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

enum Value<C> {
    Tensor(PackedTensor<C>),
    Vector(SlotVector<C>),
}

impl<C: Clone> Value<C> {
    fn level<B: SlotBackend<Ct = C>>(&self, b: &B) -> usize {
        match self {
            Value::Tensor(t) => t.level(b),
            Value::Vector(v) => b.level(&v.ct),
        }
    }

    fn tensor(self, idx: usize) -> Result<PackedTensor<C>, GraphError> {
        match self {
            Value::Tensor(t) => Ok(t),
            Value::Vector(_) => Err(GraphError::PlanGraphMismatch(format!("layer {idx} expects a packed tensor"))),
        }
    }
}

/// Packs and encrypts an input image at the plan's start level.
pub fn encrypt_input<B: SlotBackend>(
    backend: &B,
    graph: &HcnnGraph,
    plan: &LevelPlan,
    input: &Tensor3,
) -> Result<PackedTensor<B::Ct>, GraphError> {
    if input.shape != graph.input_shape {
        return Err(GraphError::ShapeChain(format!("input {} does not match graph input {}", input.shape, graph.input_shape)));
    }
    Ok(encrypt_tensor(backend, input, graph.input_format, plan.start_level)?)
}

/// Runs `graph` on `input`. Fails if any layer's actual entry level differs from the plan.
pub fn execute<B: SlotBackend>(
    graph: &HcnnGraph,
    plan: &LevelPlan,
    backend: &B,
    backend_name: &str,
    input: PackedTensor<B::Ct>,
) -> Result<(SlotVector<B::Ct>, CostReport), GraphError> {
    if plan.entry_level.len() != graph.layers.len() {
        return Err(GraphError::PlanGraphMismatch(format!("plan covers {} layers, graph has {}", plan.entry_level.len(), graph.layers.len())));
    }
    if input.format != graph.input_format || input.shape != graph.input_shape {
        return Err(GraphError::PlanGraphMismatch("input layout differs from the graph input".into()));
    }
    let ops = Ops::new(backend);
    let sources = graph.residual_sources();
    let mut saved: HashMap<usize, PackedTensor<B::Ct>> = HashMap::new();
    let mut cur = Value::Tensor(input);
    let mut reports = Vec::with_capacity(graph.layers.len());
    let mut insecure = false;
    let started = Instant::now();
    for (idx, layer) in graph.layers.iter().enumerate() {
        let t0 = Instant::now();
        let before = ops.tally();
        let refreshed = plan.refreshes_before(idx);
        if refreshed {
            cur = match cur {
                Value::Tensor(mut t) => {
                    t.cts = t.cts.iter().map(|c| ops.refresh(c, plan.refresh_target)).collect::<Result<_, _>>()?;
                    Value::Tensor(t)
                }
                Value::Vector(mut v) => {
                    v.ct = ops.refresh(&v.ct, plan.refresh_target)?;
                    Value::Vector(v)
                }
            };
        }
        let entry = cur.level(backend);
        if entry != plan.entry_level[idx] {
            return Err(GraphError::LevelLedger { layer: idx, planned: plan.entry_level[idx], actual: entry });
        }
        if sources.contains(&idx) {
            if let Value::Tensor(t) = &cur {
                saved.insert(idx, t.clone());
            }
        }
        cur = match &layer.node {
            Node::Conv(spec) => {
                let x = cur.tensor(idx)?;
                let y = match graph.mode {
                    ConvMode::Alternating => conv2d(&ops, &x, spec)?,
                    ConvMode::Fixed => conv2d_fixed_baseline(&ops, &x, spec)?,
                };
                Value::Tensor(y)
            }
            Node::Activation { act, fold } => Value::Tensor(he_activation(&ops, &cur.tensor(idx)?, act, Some(fold))?),
            Node::Downsample { target } => Value::Tensor(downsample(&ops, &cur.tensor(idx)?, *target)?),
            Node::AvgPool => Value::Vector(avgpool_global(&ops, &cur.tensor(idx)?)?),
            Node::Fc(spec) => match cur {
                Value::Vector(v) => Value::Vector(fully_connected(&ops, &v, spec)?),
                Value::Tensor(_) => return Err(GraphError::PlanGraphMismatch(format!("layer {idx} expects pooled features"))),
            },
            Node::ResidualAdd { source, shortcut_fold } => {
                let main = cur.tensor(idx)?;
                let mut short = saved.remove(source).ok_or_else(|| GraphError::PlanGraphMismatch(format!("shortcut from layer {source} missing")))?;
                if let Some(f) = shortcut_fold {
                    short = channel_affine(&ops, &short, &f.pre_scale, &f.offset)?;
                }
                Value::Tensor(residual_add(&ops, &main, &short)?)
            }
        };
        let exit = cur.level(backend);
        insecure |= refreshed;
        reports.push(LayerReport {
            index: idx,
            kind: layer.node.kind().to_string(),
            entry_level: entry,
            exit_level: exit,
            live_cts: layer.live_cts,
            refreshed_before: refreshed,
            tally: ops.tally() - before,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
    }
    let out = match cur {
        Value::Vector(v) => v,
        Value::Tensor(_) => return Err(GraphError::PlanGraphMismatch("graph did not end in a feature vector".into())),
    };
    let report = CostReport {
        version: REPORT_VERSION,
        topology: graph.topology.name(),
        conv_mode: graph.mode,
        backend: backend_name.to_string(),
        insecure,
        total: reports.iter().map(|r| r.tally).sum(),
        layers: reports,
        total_ms: started.elapsed().as_secs_f64() * 1e3,
        rotation_steps: ops.rotation_steps(),
    };
    Ok((out, report))
}

/// Decrypts the designated output slots.
pub fn decrypt_output<B: SlotBackend>(backend: &B, out: &SlotVector<B::Ct>) -> Result<Vec<f64>, GraphError> {
    let v = backend.decrypt(&out.ct)?;
    Ok(out.slots.iter().map(|&s| v[s]).collect())
}

/// Plaintext run of the packed pipeline with CKKS level bookkeeping.
pub fn plaintext_forward(
    graph: &HcnnGraph,
    plan: &LevelPlan,
    params: &CkksParams,
    refresh: RefreshMode,
    input: &Tensor3,
) -> Result<(Vec<f64>, CostReport), GraphError> {
    let b = PlainBackend::new(params, refresh);
    let x = encrypt_input(&b, graph, plan, input)?;
    let (out, mut report) = execute(graph, plan, &b, "plaintext", x)?;
    report.insecure |= params.is_insecure();
    Ok((decrypt_output(&b, &out)?, report))
}

/// Rotation amounts an inference with this graph and plan performs. Data-independent.
pub fn required_rotations(graph: &HcnnGraph, plan: &LevelPlan, params: &CkksParams) -> Result<Vec<i64>, GraphError> {
    let zero = Tensor3::zeros(graph.input_shape);
    let (_, report) = plaintext_forward(graph, plan, params, RefreshMode::InsecureDebug, &zero)?;
    Ok(report.rotation_steps.iter().map(|&s| s as i64).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub index: usize,
    pub kind: String,
    pub alternating_rotations: u64,
    pub fixed_rotations: u64,
    /// `fixed / alternating`; absent when the alternating count is zero.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub topology: String,
    pub rows: Vec<ComparisonRow>,
    pub alternating_total: OpTally,
    pub fixed_total: OpTally,
    pub rotation_ratio: Option<f64>,
    /// Largest output difference between the two layouts.
    pub max_abs_diff: f64,
}

fn ratio(fixed: u64, alt: u64) -> Option<f64> {
    (alt > 0).then(|| fixed as f64 / alt as f64)
}

/// Runs both convolution modes on the plaintext backend and compares their tallies.
pub fn cost_report_compare(model: &ModelWeights, params: &CkksParams, input: &Tensor3) -> Result<Comparison, GraphError> {
    let mut runs = Vec::new();
    for mode in [ConvMode::Alternating, ConvMode::Fixed] {
        let g = super::build_graph(model, params.slots(), mode)?;
        let plan = plan_levels(&g, PlanOptions::new(params.max_level()))?;
        runs.push(plaintext_forward(&g, &plan, params, RefreshMode::InsecureDebug, input)?);
    }
    let (fixed, alt) = (runs.pop().unwrap(), runs.pop().unwrap());
    let rows = alt
        .1
        .layers
        .iter()
        .zip(&fixed.1.layers)
        .map(|(a, f)| ComparisonRow {
            index: a.index,
            kind: a.kind.clone(),
            alternating_rotations: a.tally.rotations,
            fixed_rotations: f.tally.rotations,
            ratio: ratio(f.tally.rotations, a.tally.rotations),
        })
        .collect();
    Ok(Comparison {
        topology: model.topology.clone(),
        rows,
        rotation_ratio: ratio(fixed.1.total.rotations, alt.1.total.rotations),
        alternating_total: alt.1.total,
        fixed_total: fixed.1.total,
        max_abs_diff: alt.0.iter().zip(&fixed.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
    })
}
