//! Weights JSON shared with external trainers, and seeded fixture generation.

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GraphError;
use crate::aespa::{AespaChannelParams, DEFAULT_EPS};
use crate::packing::{Shape, Tensor3};

pub const WEIGHTS_VERSION: u32 = 1;

/// Real array stored either as base64 of little-endian `f64` or as a plain JSON list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FloatArray {
    Plain(Vec<f64>),
    Base64(String),
}

impl FloatArray {
    pub fn encode(values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::Base64(base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn values(&self) -> Result<Vec<f64>, GraphError> {
        match self {
            Self::Plain(v) => Ok(v.clone()),
            Self::Base64(s) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(s)
                    .map_err(|e| GraphError::Schema(format!("bad base64 array: {e}")))?;
                if bytes.len() % 8 != 0 {
                    return Err(GraphError::Schema(format!("base64 array of {} bytes is not a list of f64", bytes.len())));
                }
                Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Aespa,
    Downsample,
    Avgpool,
    Fc,
    ResidualAdd,
}

/// Per-channel activation parameters of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AespaLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// `[channel][basis]`.
    pub mu: Vec<Vec<f64>>,
    pub sigma2: Vec<Vec<f64>>,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

impl AespaLayer {
    pub fn channels(&self) -> Result<Vec<AespaChannelParams>, GraphError> {
        let n = self.gamma.len();
        if self.beta.len() != n || self.mu.len() != n || self.sigma2.len() != n {
            return Err(GraphError::Schema("aespa arrays disagree on the channel count".into()));
        }
        Ok((0..n)
            .map(|c| AespaChannelParams {
                gamma: self.gamma[c],
                beta: self.beta[c],
                mu: self.mu[c].clone(),
                sigma2: self.sigma2[c].clone(),
                eps: self.eps,
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub kind: LayerKind,
    /// Conv: `[out, in, k, k]`; fc: `[out, in]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<FloatArray>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<FloatArray>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aespa: Option<AespaLayer>,
    /// Residual add: index of the layer whose input is the shortcut.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
}

impl LayerWeights {
    fn bare(kind: LayerKind) -> Self {
        Self { kind, shape: Vec::new(), stride: None, weights: None, bias: None, aespa: None, source: None }
    }

    pub fn weight_values(&self) -> Result<Vec<f64>, GraphError> {
        self.weights.as_ref().ok_or_else(|| GraphError::Schema(format!("{:?} layer without weights", self.kind)))?.values()
    }

    pub fn bias_values(&self, n: usize) -> Result<Vec<f64>, GraphError> {
        match &self.bias {
            Some(b) => b.values(),
            None => Ok(vec![0.0; n]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenPair {
    pub input: Vec<f64>,
    pub logits: Vec<f64>,
}

/// One reference pair or a list of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Golden {
    One(GoldenPair),
    Many(Vec<GoldenPair>),
}

impl Golden {
    pub fn pairs(&self) -> &[GoldenPair] {
        match self {
            Self::One(p) => std::slice::from_ref(p),
            Self::Many(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub version: u32,
    pub topology: String,
    /// Hex SHA-256 of the canonical parameter-set bytes the model was exported for.
    pub params_digest: String,
    /// `[c, h, w]`.
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden: Option<Golden>,
}

impl ModelWeights {
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let m: Self = serde_json::from_str(text).map_err(|e| GraphError::Schema(e.to_string()))?;
        if m.version != WEIGHTS_VERSION {
            return Err(GraphError::Schema(format!("unsupported weights version {}", m.version)));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    pub fn input_shape(&self) -> Shape {
        Shape::new(self.input_shape[0], self.input_shape[1], self.input_shape[2])
    }

    pub fn check_params(&self, params_digest_hex: &str) -> Result<(), GraphError> {
        if self.params_digest != params_digest_hex {
            return Err(GraphError::DigestMismatch { expected: params_digest_hex.into(), found: self.params_digest.clone() });
        }
        Ok(())
    }

    /// SHA-256 over `hcnn-weights/1`, the topology, input shape and every layer's kind,
    /// shape, stride, source and arrays as little-endian values. Golden pairs are excluded.
    pub fn digest_hex(&self) -> Result<String, GraphError> {
        let mut h = Sha256::new();
        h.update(b"hcnn-weights/1");
        let put_u64 = |h: &mut Sha256, v: u64| h.update(v.to_le_bytes());
        let put_arr = |h: &mut Sha256, v: &[f64]| {
            put_u64(h, v.len() as u64);
            for x in v {
                h.update(x.to_le_bytes());
            }
        };
        put_u64(&mut h, self.topology.len() as u64);
        h.update(self.topology.as_bytes());
        for d in self.input_shape {
            put_u64(&mut h, d as u64);
        }
        put_u64(&mut h, self.layers.len() as u64);
        for l in &self.layers {
            put_u64(&mut h, l.kind as u64);
            put_u64(&mut h, l.shape.len() as u64);
            for &d in &l.shape {
                put_u64(&mut h, d as u64);
            }
            put_u64(&mut h, l.stride.unwrap_or(0) as u64);
            put_u64(&mut h, l.source.map_or(u64::MAX, |s| s as u64));
            put_arr(&mut h, &l.weights.as_ref().map(|w| w.values()).transpose()?.unwrap_or_default());
            put_arr(&mut h, &l.bias.as_ref().map(|w| w.values()).transpose()?.unwrap_or_default());
            if let Some(a) = &l.aespa {
                put_arr(&mut h, &a.gamma);
                put_arr(&mut h, &a.beta);
                put_arr(&mut h, &a.mu.concat());
                put_arr(&mut h, &a.sigma2.concat());
                put_arr(&mut h, &[a.eps]);
            }
        }
        Ok(hex::encode(h.finalize()))
    }
}

/// Supported network shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    /// `(1, 8, 8)` input; conv 1→8, act, conv 8→16 stride 2, act, conv 16→16, avgpool, fc 16→10.
    TinyCnn,
    /// `(8, 8, 8)` input; `n` basic blocks (conv, act, conv, residual add, act), avgpool, fc 8→10.
    BasicBlockStack(usize),
}

impl Topology {
    pub fn parse(name: &str) -> Result<Self, GraphError> {
        if name == "tiny-cnn" {
            return Ok(Self::TinyCnn);
        }
        if let Some(n) = name.strip_prefix("basic-block-stack(").and_then(|r| r.strip_suffix(')')) {
            if let Ok(n) = n.trim().parse::<usize>() {
                if n >= 1 {
                    return Ok(Self::BasicBlockStack(n));
                }
            }
        }
        Err(GraphError::UnsupportedTopology(name.to_string()))
    }

    pub fn name(&self) -> String {
        match self {
            Self::TinyCnn => "tiny-cnn".into(),
            Self::BasicBlockStack(n) => format!("basic-block-stack({n})"),
        }
    }

    pub fn input_shape(&self) -> Shape {
        match self {
            Self::TinyCnn => Shape::new(1, 8, 8),
            Self::BasicBlockStack(_) => Shape::new(8, 8, 8),
        }
    }

    /// Layer skeleton: `(kind, conv/fc shape, stride, residual source)`.
    pub fn skeleton(&self) -> Vec<(LayerKind, Vec<usize>, Option<usize>, Option<usize>)> {
        use LayerKind::*;
        match self {
            Self::TinyCnn => vec![
                (Conv, vec![8, 1, 3, 3], Some(1), None),
                (Aespa, vec![8], None, None),
                (Conv, vec![16, 8, 3, 3], Some(2), None),
                (Aespa, vec![16], None, None),
                (Conv, vec![16, 16, 3, 3], Some(1), None),
                (Avgpool, vec![], None, None),
                (Fc, vec![10, 16], None, None),
            ],
            Self::BasicBlockStack(n) => {
                let mut v = Vec::new();
                for _ in 0..*n {
                    let start = v.len();
                    v.push((Conv, vec![8, 8, 3, 3], Some(1), None));
                    v.push((Aespa, vec![8], None, None));
                    v.push((Conv, vec![8, 8, 3, 3], Some(1), None));
                    v.push((ResidualAdd, vec![], None, Some(start)));
                    v.push((Aespa, vec![8], None, None));
                }
                v.push((Avgpool, vec![], None, None));
                v.push((Fc, vec![10, 8], None, None));
                v
            }
        }
    }
}

/// Seeded random weights in the shared schema. Weights are drawn from `[-1, 1]` and
/// divided by the square root of the fan-in; golden pairs come from the dense reference.
pub fn gen_fixture(topology: Topology, seed: u64, params_digest_hex: &str, golden_count: usize) -> Result<ModelWeights, GraphError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for (kind, shape, stride, source) in topology.skeleton() {
        let mut l = LayerWeights::bare(kind);
        match kind {
            LayerKind::Conv | LayerKind::Fc => {
                let fan_in: usize = shape[1..].iter().product();
                let n: usize = shape.iter().product();
                let scale = 1.0 / (fan_in as f64).sqrt();
                let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
                let b: Vec<f64> = (0..shape[0]).map(|_| rng.random_range(-0.1..0.1)).collect();
                l.weights = Some(FloatArray::encode(&w));
                l.bias = Some(FloatArray::encode(&b));
                l.shape = shape;
                l.stride = stride.filter(|_| kind == LayerKind::Conv);
            }
            LayerKind::Aespa => {
                let c = shape[0];
                l.aespa = Some(AespaLayer {
                    gamma: (0..c).map(|_| rng.random_range(0.5..1.5)).collect(),
                    beta: (0..c).map(|_| rng.random_range(-0.2..0.2)).collect(),
                    mu: (0..c).map(|_| (0..3).map(|_| rng.random_range(-0.2..0.2)).collect()).collect(),
                    sigma2: (0..c).map(|_| (0..3).map(|_| rng.random_range(0.5..2.0)).collect()).collect(),
                    eps: DEFAULT_EPS,
                });
            }
            LayerKind::ResidualAdd => l.source = source,
            LayerKind::Downsample | LayerKind::Avgpool => {}
        }
        layers.push(l);
    }
    let s = topology.input_shape();
    let mut model = ModelWeights {
        version: WEIGHTS_VERSION,
        topology: topology.name(),
        params_digest: params_digest_hex.to_string(),
        input_shape: [s.c, s.h, s.w],
        layers,
        golden: None,
    };
    let mut pairs = Vec::with_capacity(golden_count);
    for _ in 0..golden_count {
        let input: Vec<f64> = (0..s.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let logits = super::reference_forward(&model, &Tensor3::from_vec(s, input.clone()).expect("shape"))?;
        pairs.push(GoldenPair { input, logits });
    }
    if golden_count > 0 {
        model.golden = Some(Golden::Many(pairs));
    }
    Ok(model)
}
