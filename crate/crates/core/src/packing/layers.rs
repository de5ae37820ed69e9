//! Non-convolution layers: downsampling, global average pooling, dense layers and
//! residual additions.

use super::format::{PackingFormat, Shape, Variant};
use super::{require_levels, Ops, PackedTensor, PackingError, SlotBackend};

/// One ciphertext carrying a feature vector at designated slots.
#[derive(Clone, Debug)]
pub struct SlotVector<C> {
    pub ct: C,
    /// Slot of feature `i`.
    pub slots: Vec<usize>,
}

/// Per-ciphertext slot vectors with `values[c]` at every valid position of channel `c`.
pub fn channel_masks(format: PackingFormat, shape: Shape, slots: usize, values: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; slots]; format.num_cts(shape)];
    for (c, &v) in values.iter().enumerate().take(shape.c) {
        for i in 0..shape.h {
            for j in 0..shape.w {
                let (k, s) = format.slot(shape, c, i, j);
                out[k][s] = v;
            }
        }
    }
    out
}

/// `scale[c]·x + offset[c]` per channel; one level.
pub fn channel_affine<B: SlotBackend>(
    ops: &Ops<B>,
    x: &PackedTensor<B::Ct>,
    scale: &[f64],
    offset: &[f64],
) -> Result<PackedTensor<B::Ct>, PackingError> {
    if scale.len() != x.shape.c || offset.len() != x.shape.c {
        return Err(PackingError::ShapeMismatch(format!("affine needs {} channel entries", x.shape.c)));
    }
    require_levels(x.level(ops.backend), 1)?;
    let slots = ops.slots();
    let a = channel_masks(x.format, x.shape, slots, scale);
    let b = channel_masks(x.format, x.shape, slots, offset);
    let cts = x
        .cts
        .iter()
        .zip(a.iter().zip(&b))
        .map(|(ct, (a, b))| {
            let y = ops.rescale(&ops.mul_plain(ct, a, ops.nominal_scale())?)?;
            ops.add_plain(&y, b)
        })
        .collect::<Result<_, _>>()?;
    Ok(PackedTensor { cts, format: x.format, shape: x.shape })
}

/// Keeps every other row and column; the gap doubles. One level.
pub fn downsample<B: SlotBackend>(
    ops: &Ops<B>,
    x: &PackedTensor<B::Ct>,
    target: PackingFormat,
) -> Result<PackedTensor<B::Ct>, PackingError> {
    let expected = x.format.strided(2);
    if target != expected {
        return Err(PackingError::FormatMismatch { expected, found: target });
    }
    if x.shape.h % 2 != 0 || x.shape.w % 2 != 0 {
        return Err(PackingError::ShapeMismatch(format!("cannot halve {}", x.shape)));
    }
    require_levels(x.level(ops.backend), 1)?;
    let out_shape = Shape::new(x.shape.c, x.shape.h / 2, x.shape.w / 2);
    let masks = channel_masks(target, out_shape, ops.slots(), &vec![1.0; x.shape.c]);
    let cts = x
        .cts
        .iter()
        .zip(&masks)
        .map(|(ct, m)| ops.rescale(&ops.mul_plain(ct, m, ops.nominal_scale())?))
        .collect::<Result<_, _>>()?;
    Ok(PackedTensor { cts, format: target, shape: out_shape })
}

/// `Σ_{p < count} rotate(x, p·step)` with about `2·log2(count)` rotations.
pub(crate) fn range_sum<B: SlotBackend>(ops: &Ops<B>, x: &B::Ct, count: usize, step: usize) -> Result<B::Ct, PackingError> {
    if count <= 1 {
        return Ok(x.clone());
    }
    let half = range_sum(ops, x, count / 2, step)?;
    let double = ops.add(&half, &ops.rotate(&half, ((count / 2) * step) as i64)?)?;
    if count.is_multiple_of(2) {
        return Ok(double);
    }
    ops.add(x, &ops.rotate(&double, step as i64)?)
}

/// Channel means. Multiple ciphertexts are first merged into disjoint slot regions.
/// Consumes no level: the division is folded into the scale.
pub fn avgpool_global<B: SlotBackend>(ops: &Ops<B>, x: &PackedTensor<B::Ct>) -> Result<SlotVector<B::Ct>, PackingError> {
    let f = x.format;
    let shape = x.shape;
    let slots = ops.slots();
    let n = x.cts.len();
    let (region, feature_slot): (usize, Box<dyn Fn(usize) -> usize>) = match f.variant {
        Variant::A => {
            if n > f.lanes {
                return Err(PackingError::ShapeMismatch(format!("{n} ciphertexts cannot share {} lanes", f.lanes)));
            }
            let bk = f.block_len(shape);
            (1, Box::new(move |c| (c % f.multiplex) * bk + c / f.multiplex))
        }
        Variant::B => {
            let fp = f.footprint(shape);
            if n * fp > slots {
                return Err(PackingError::ShapeOverflow { shape, need: n * fp, slots });
            }
            (fp, Box::new(move |c| (c / f.multiplex) * fp + c % f.multiplex))
        }
    };
    let mut acc = None;
    for (k, ct) in x.cts.iter().enumerate() {
        acc = ops.accumulate(acc, ops.rotate(ct, -((k * region) as i64))?)?;
    }
    let acc = acc.expect("non-empty tensor");
    let (_, ws) = f.grid(shape);
    let rows = range_sum(ops, &acc, shape.w, f.gap * f.lanes)?;
    let all = range_sum(ops, &rows, shape.h, f.gap * ws * f.lanes)?;
    let ct = ops.divide_by_scale(&all, (shape.h * shape.w) as f64);
    Ok(SlotVector { ct, slots: (0..shape.c).map(feature_slot).collect() })
}

/// Dense layer `y = W·(pre_scale ⊙ x + offset) + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSpec {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out][in]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub pre_scale: Vec<f64>,
    pub input_offset: Vec<f64>,
}

impl LinearSpec {
    pub fn new(in_features: usize, out_features: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, PackingError> {
        let s = Self {
            in_features,
            out_features,
            weights,
            bias,
            pre_scale: vec![1.0; in_features],
            input_offset: vec![0.0; in_features],
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), PackingError> {
        if self.weights.len() != self.in_features * self.out_features
            || self.bias.len() != self.out_features
            || self.pre_scale.len() != self.in_features
            || self.input_offset.len() != self.in_features
        {
            return Err(PackingError::ShapeMismatch(format!(
                "dense layer {}x{} with {} weights and {} biases",
                self.out_features,
                self.in_features,
                self.weights.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    fn effective_bias(&self, o: usize) -> f64 {
        let row = &self.weights[o * self.in_features..(o + 1) * self.in_features];
        self.bias[o] + row.iter().zip(&self.input_offset).map(|(w, c)| w * c).sum::<f64>()
    }
}

/// Reference dense layer.
pub fn dense_linear(x: &[f64], spec: &LinearSpec) -> Vec<f64> {
    (0..spec.out_features)
        .map(|o| {
            spec.bias[o]
                + (0..spec.in_features)
                    .map(|c| spec.weights[o * spec.in_features + c] * (spec.pre_scale[c] * x[c] + spec.input_offset[c]))
                    .sum::<f64>()
        })
        .collect()
}

fn rotate_vec_right(v: &[f64], k: usize) -> Vec<f64> {
    let mut r = v.to_vec();
    r.rotate_right(k % v.len());
    r
}

/// Generalized-diagonal matrix-vector product with baby-step/giant-step rotations.
/// Output feature `o` lands in slot `o`. One level.
pub fn fully_connected<B: SlotBackend>(
    ops: &Ops<B>,
    x: &SlotVector<B::Ct>,
    spec: &LinearSpec,
) -> Result<SlotVector<B::Ct>, PackingError> {
    spec.check()?;
    if x.slots.len() != spec.in_features {
        return Err(PackingError::ShapeMismatch(format!("{} features for a {}-input layer", x.slots.len(), spec.in_features)));
    }
    let slots = ops.slots();
    if spec.out_features > slots {
        return Err(PackingError::ShapeMismatch(format!("{} outputs exceed {slots} slots", spec.out_features)));
    }
    require_levels(ops.level(&x.ct), 1)?;
    // diagonal d holds W[o][c] at slot o for every pair with x.slots[c] - o == d
    let mut diags: std::collections::BTreeMap<i64, Vec<f64>> = Default::default();
    for o in 0..spec.out_features {
        for (c, &s) in x.slots.iter().enumerate() {
            let w = spec.weights[o * spec.in_features + c] * spec.pre_scale[c];
            let d = s as i64 - o as i64;
            diags.entry(d).or_insert_with(|| vec![0.0; slots])[o] = w;
        }
    }
    let dmin = *diags.keys().next().expect("non-empty layer");
    let span = (*diags.keys().last().unwrap() - dmin + 1) as usize;
    let g = (span as f64).sqrt().ceil() as usize;
    let mut baby: Vec<Option<B::Ct>> = vec![None; g];
    let mut acc = None;
    for j in 0..span.div_ceil(g) {
        let mut inner = None;
        for i in 0..g {
            let Some(diag) = diags.get(&(dmin + (g * j + i) as i64)) else { continue };
            if baby[i].is_none() {
                baby[i] = Some(ops.rotate(&x.ct, dmin + i as i64)?);
            }
            let m = rotate_vec_right(diag, g * j);
            inner = ops.accumulate(inner, ops.mul_plain(baby[i].as_ref().unwrap(), &m, ops.nominal_scale())?)?;
        }
        if let Some(inner) = inner {
            acc = ops.accumulate(acc, ops.rotate(&inner, (g * j) as i64)?)?;
        }
    }
    let y = ops.rescale(&acc.expect("non-empty layer"))?;
    let mut bias = vec![0.0; slots];
    for (o, b) in bias.iter_mut().enumerate().take(spec.out_features) {
        *b = spec.effective_bias(o);
    }
    Ok(SlotVector { ct: ops.add_plain(&y, &bias)?, slots: (0..spec.out_features).collect() })
}

/// Elementwise sum of two tensors in the same layout; the higher-level operand is dropped.
pub fn residual_add<B: SlotBackend>(
    ops: &Ops<B>,
    a: &PackedTensor<B::Ct>,
    b: &PackedTensor<B::Ct>,
) -> Result<PackedTensor<B::Ct>, PackingError> {
    if a.format != b.format {
        return Err(PackingError::FormatMismatch { expected: a.format, found: b.format });
    }
    if a.shape != b.shape {
        return Err(PackingError::ShapeMismatch(format!("residual add of {} and {}", a.shape, b.shape)));
    }
    let level = a.level(ops.backend).min(b.level(ops.backend));
    let cts = a
        .cts
        .iter()
        .zip(&b.cts)
        .map(|(x, y)| ops.add(&ops.drop_to(x, level)?, &ops.drop_to(y, level)?))
        .collect::<Result<_, _>>()?;
    Ok(PackedTensor { cts, format: a.format, shape: a.shape })
}

/// Designated slots of a single-ciphertext tensor in `(c, i, j)` order, for feeding a dense layer.
pub fn flatten<C: Clone>(x: &PackedTensor<C>) -> Result<SlotVector<C>, PackingError> {
    if x.cts.len() != 1 {
        return Err(PackingError::ShapeMismatch("flatten needs a single ciphertext".into()));
    }
    Ok(SlotVector { ct: x.cts[0].clone(), slots: super::slot_map(x.format, x.shape).into_iter().map(|(_, s)| s).collect() })
}
