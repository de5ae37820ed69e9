//! Network graphs: weights files, lowering to packed layers, level planning and execution.

mod build;
mod exec;
mod model;
mod plan;
mod reference;

pub use build::{build_graph, ConvMode, GraphLayer, HcnnGraph, Node};
pub use exec::{
    cost_report_compare, decrypt_output, encrypt_input, execute, plaintext_forward, required_rotations, Comparison, ComparisonRow, CostReport,
    LayerReport, REPORT_VERSION,
};
pub use model::{gen_fixture, AespaLayer, FloatArray, Golden, GoldenPair, LayerKind, LayerWeights, ModelWeights, Topology, WEIGHTS_VERSION};
pub use plan::{plan_levels, plan_profile, plan_steps, simulate, LevelPlan, PlanOptions, PlanStep};
pub use reference::reference_forward;

use crate::aespa::AespaError;
use crate::ckks::CkksError;
use crate::packing::PackingError;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),
    #[error("shape chain broken: {0}")]
    ShapeChain(String),
    #[error("weights schema: {0}")]
    Schema(String),
    #[error("parameter digest mismatch: weights were made for {found}, parameters are {expected}")]
    DigestMismatch { expected: String, found: String },
    #[error("no refresh placement fits: {0}")]
    Infeasible(String),
    #[error("plan does not match graph: {0}")]
    PlanGraphMismatch(String),
    #[error("layer {layer} entered at level {actual}, plan expected {planned}")]
    LevelLedger { layer: usize, planned: usize, actual: usize },
    #[error(transparent)]
    Packing(#[from] PackingError),
    #[error(transparent)]
    Aespa(#[from] AespaError),
    #[error(transparent)]
    Ckks(#[from] CkksError),
}
