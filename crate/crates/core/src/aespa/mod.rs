//! Hermite-basis polynomial activation, folded into a per-channel quadratic that costs
//! one multiplicative level under encryption.
//!
//! The quadratic `a·x² + b·x + c` is evaluated as `t = x ⊙ (x + b/a)`; the remaining
//! factor `a` and offset `c` are absorbed by the next linear layer (its `pre_scale` and
//! `input_offset`), so only one ciphertext product is needed.

mod hermite;

pub use hermite::{
    aespa_eval_plain, fold_quadratic, hermite_coeffs, hermite_values, AespaChannelParams, HermiteBasis, QuadActivation,
    DEFAULT_EPS, MAX_DEGREE,
};

use serde::{Deserialize, Serialize};

use crate::packing::{channel_masks, require_levels, Ops, PackedTensor, PackingError, SlotBackend};

#[derive(Debug, thiserror::Error)]
pub enum AespaError {
    #[error("degree {0} outside 0..=8")]
    DegreeOutOfRange(usize),
    #[error("only degree 2 folds into a quadratic, got {0}")]
    DegreeUnsupported(usize),
    #[error("channel statistics have degree {params}, basis has degree {basis}")]
    DegreeMismatch { params: usize, basis: usize },
    #[error("sigma2 + eps must be positive for basis {0}")]
    NonPositiveVariance(usize),
    #[error("activation has {act} channels, tensor has {tensor}")]
    ChannelMismatch { act: usize, tensor: usize },
    #[error("downstream layer has not absorbed the activation fold: {0}")]
    FoldMissing(String),
    #[error("ciphertext {0} mixes channels with vanishing and regular quadratic terms")]
    MixedFallback(usize),
    #[error(transparent)]
    Packing(#[from] PackingError),
}

/// Quadratic terms below this magnitude are treated as zero.
pub const FALLBACK_THRESHOLD: f64 = 1e-8;

/// Scalars the next linear layer applies to the activation output `t`: it sees
/// `pre_scale ⊙ t + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub pre_scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl QuadActivation {
    pub fn is_linear(&self, ch: usize) -> bool {
        self.a[ch].abs() < FALLBACK_THRESHOLD
    }

    /// The record a downstream layer must carry. Channels with a vanishing quadratic
    /// term are computed as `b·x` directly, so their factor is one.
    pub fn fold_record(&self) -> FoldRecord {
        FoldRecord {
            pre_scale: (0..self.channels()).map(|c| if self.is_linear(c) { 1.0 } else { self.a[c] }).collect(),
            offset: self.c.clone(),
        }
    }

    /// Value the homomorphic evaluation produces before the downstream fold.
    pub fn unfolded(&self, ch: usize, x: f64) -> f64 {
        if self.is_linear(ch) {
            self.b[ch] * x
        } else {
            x * (x + self.b[ch] / self.a[ch])
        }
    }
}

/// Evaluates the activation up to the downstream fold. Consumes one level.
pub fn he_activation<B: SlotBackend>(
    ops: &Ops<B>,
    x: &PackedTensor<B::Ct>,
    act: &QuadActivation,
    downstream: Option<&FoldRecord>,
) -> Result<PackedTensor<B::Ct>, AespaError> {
    if act.channels() != x.shape.c {
        return Err(AespaError::ChannelMismatch { act: act.channels(), tensor: x.shape.c });
    }
    match downstream {
        None => return Err(AespaError::FoldMissing("no downstream fold record".into())),
        Some(r) if *r != act.fold_record() => {
            return Err(AespaError::FoldMissing("downstream pre_scale/offset differ from the activation".into()))
        }
        Some(_) => {}
    }
    let level = x.level(ops.backend);
    require_levels(level, 1)?;
    let slots = ops.slots();
    let m = x.format.multiplex;
    let linear: Vec<bool> = (0..act.channels()).map(|c| act.is_linear(c)).collect();
    let shift: Vec<f64> = (0..act.channels()).map(|c| if linear[c] { act.b[c] } else { act.b[c] / act.a[c] }).collect();
    let masks = channel_masks(x.format, x.shape, slots, &shift);
    let mut cts = Vec::with_capacity(x.cts.len());
    for (k, (ct, mask)) in x.cts.iter().zip(&masks).enumerate() {
        let chans = &linear[k * m..((k + 1) * m).min(act.channels())];
        let product = if chans.iter().all(|l| *l) {
            let s = ops.scale(ct);
            ops.mul_plain(ct, mask, s * s / ops.backend.rescale_prime(level))?
        } else if chans.iter().any(|l| *l) {
            return Err(AespaError::MixedFallback(k));
        } else {
            ops.mul(ct, &ops.add_plain(ct, mask)?)?
        };
        cts.push(ops.rescale(&product)?);
    }
    Ok(PackedTensor { cts, format: x.format, shape: x.shape })
}
