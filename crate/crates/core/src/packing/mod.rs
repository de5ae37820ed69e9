//! Tensor-to-slot layouts and homomorphic CNN layers over a [`SlotBackend`].

mod backend;
mod conv;
mod format;
mod layers;
mod tally;

pub use backend::{CkksBackend, Ops, PlainBackend, PlainCt, SlotBackend};
pub use conv::{conv2d, conv2d_fixed_baseline, dense_conv2d, ConvLayerSpec};
pub use format::{pack, slot_map, unpack, PackingFormat, Shape, Tensor3, Variant};
pub use layers::{
    avgpool_global, channel_affine, channel_masks, dense_linear, downsample, flatten, fully_connected, residual_add, LinearSpec,
    SlotVector,
};
pub use tally::OpTally;

use crate::ckks::CkksError;

#[derive(Debug, thiserror::Error)]
pub enum PackingError {
    #[error("shape {shape} needs {need} slots, only {slots} available")]
    ShapeOverflow { shape: Shape, need: usize, slots: usize },
    #[error("invalid packing format: {0}")]
    InvalidFormat(String),
    #[error("format mismatch: expected {expected:?}, found {found:?}")]
    FormatMismatch { expected: PackingFormat, found: PackingFormat },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("layer needs {needed} levels, ciphertext has {available}")]
    LevelExhausted { needed: usize, available: usize },
    #[error("operation needs the secret key")]
    SecretKeyRequired,
    #[error(transparent)]
    Ckks(#[from] CkksError),
}

/// Ciphertexts holding one tensor in one layout.
#[derive(Clone, Debug)]
pub struct PackedTensor<C> {
    pub cts: Vec<C>,
    pub format: PackingFormat,
    pub shape: Shape,
}

impl<C: Clone> PackedTensor<C> {
    pub fn level<B: SlotBackend<Ct = C>>(&self, b: &B) -> usize {
        b.level(&self.cts[0])
    }

    pub fn scale<B: SlotBackend<Ct = C>>(&self, b: &B) -> f64 {
        b.scale(&self.cts[0])
    }
}

/// Packs and encrypts `t` at `level`.
pub fn encrypt_tensor<B: SlotBackend>(
    b: &B,
    t: &Tensor3,
    format: PackingFormat,
    level: usize,
) -> Result<PackedTensor<B::Ct>, PackingError> {
    let cts = pack(t, format, b.slots())?.iter().map(|v| b.encrypt(v, level)).collect::<Result<_, _>>()?;
    Ok(PackedTensor { cts, format, shape: t.shape })
}

pub fn decrypt_tensor<B: SlotBackend>(b: &B, x: &PackedTensor<B::Ct>) -> Result<Tensor3, PackingError> {
    let v = x.cts.iter().map(|c| b.decrypt(c)).collect::<Result<Vec<_>, _>>()?;
    unpack(&v, x.format, x.shape)
}

pub(crate) fn require_levels(available: usize, needed: usize) -> Result<(), PackingError> {
    if available < needed {
        return Err(PackingError::LevelExhausted { needed, available });
    }
    Ok(())
}
