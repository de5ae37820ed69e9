//! Rotate-and-accumulate convolution with plaintext weight masks.
//!
//! Both paths start the same way: every input ciphertext is rotated once per kernel
//! offset, and each output channel `o` collects `u_o = Σ mask ⊙ rotated`, still spread
//! over the reduction axis (blocks for layout `A`, lanes for layout `B`). They differ in
//! how that axis is summed and where the result lands.
//!
//! * Alternating (`A → B`): outputs are shifted into distinct lanes, then a single
//!   block-sum tree per output group leaves them interleaved in block 0, which is layout
//!   `B`. `B → A` mirrors this: outputs are shifted into distinct blocks, then one lane-sum
//!   tree per output ciphertext leaves them in lane 0, which is layout `A`. When it is
//!   cheaper, the input is replicated over the lanes/blocks before the kernel rotations so
//!   that every output group comes out of one masked sum already shifted.
//! * Fixed baseline (`A → A`, `B → B`): each output runs its own reduction tree and is then
//!   rotated back into its slot of the unchanged layout.
//!
//! Either way the layer consumes two levels: the weight masks, then the selection mask
//! that also removes wraparound garbage.

use super::format::{PackingFormat, Shape, Variant};
use super::{require_levels, Ops, PackedTensor, PackingError, SlotBackend, Tensor3};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Square, odd kernel side.
    pub kernel: usize,
    pub stride: usize,
    /// `[out][in][ki][kj]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Per-input-channel factor applied to the input before convolving.
    pub pre_scale: Vec<f64>,
    /// Per-input-channel constant added to the input after `pre_scale`, inside the
    /// image only (zero padding stays zero).
    pub input_offset: Vec<f64>,
    pub in_format: PackingFormat,
    pub out_format: PackingFormat,
}

impl ConvLayerSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        in_format: PackingFormat,
        out_format: PackingFormat,
    ) -> Result<Self, PackingError> {
        let s = Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weights,
            bias,
            pre_scale: vec![1.0; in_channels],
            input_offset: vec![0.0; in_channels],
            in_format,
            out_format,
        };
        s.check_tables()?;
        Ok(s)
    }

    fn check_tables(&self) -> Result<(), PackingError> {
        let bad = |m: String| Err(PackingError::ShapeMismatch(m));
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel side {} must be odd", self.kernel));
        }
        if self.stride != 1 && self.stride != 2 {
            return bad(format!("stride {} not in {{1, 2}}", self.stride));
        }
        let k2 = self.kernel * self.kernel;
        if self.weights.len() != self.out_channels * self.in_channels * k2 {
            return bad(format!("{} weights for a {}x{}x{k2} kernel", self.weights.len(), self.out_channels, self.in_channels));
        }
        if self.bias.len() != self.out_channels {
            return bad(format!("{} biases for {} outputs", self.bias.len(), self.out_channels));
        }
        if self.pre_scale.len() != self.in_channels || self.input_offset.len() != self.in_channels {
            return bad("pre_scale and input_offset need one entry per input channel".into());
        }
        Ok(())
    }

    /// Weight at kernel offset `(di, dj)` relative to the centre.
    #[inline]
    pub fn weight(&self, o: usize, c: usize, di: isize, dj: isize) -> f64 {
        let r = (self.kernel / 2) as isize;
        let k = self.kernel;
        self.weights[((o * self.in_channels + c) * k + (di + r) as usize) * k + (dj + r) as usize]
    }

    pub fn output_shape(&self, input: Shape) -> Shape {
        Shape::new(self.out_channels, input.h / self.stride, input.w / self.stride)
    }

    /// Bias plus the contribution of `input_offset` through the zero padding, per output position.
    fn bias_at(&self, o: usize, input: Shape, i: usize, j: usize) -> f64 {
        let r = (self.kernel / 2) as isize;
        let (ci, cj) = ((i * self.stride) as isize, (j * self.stride) as isize);
        let mut b = self.bias[o];
        for c in 0..self.in_channels {
            let off = self.input_offset[c];
            if off == 0.0 {
                continue;
            }
            for di in -r..=r {
                for dj in -r..=r {
                    let (y, x) = (ci + di, cj + dj);
                    if y >= 0 && x >= 0 && (y as usize) < input.h && (x as usize) < input.w {
                        b += self.weight(o, c, di, dj) * off;
                    }
                }
            }
        }
        b
    }

    fn validate(&self, x: Shape, format: PackingFormat, slots: usize, fixed: bool) -> Result<(), PackingError> {
        self.check_tables()?;
        if format != self.in_format {
            return Err(PackingError::FormatMismatch { expected: self.in_format, found: format });
        }
        if x.c != self.in_channels {
            return Err(PackingError::ShapeMismatch(format!("input has {} channels, layer expects {}", x.c, self.in_channels)));
        }
        if !x.h.is_multiple_of(self.stride) || !x.w.is_multiple_of(self.stride) {
            return Err(PackingError::ShapeMismatch(format!("stride {} does not divide {x}", self.stride)));
        }
        let (i, o) = (self.in_format, self.out_format);
        let bad = |m: &str| Err(PackingError::InvalidFormat(m.into()));
        if fixed != (i.variant == o.variant) {
            return bad(if fixed { "fixed-layout convolution needs equal layouts" } else { "alternating convolution needs layouts A and B" });
        }
        if o.lanes != i.lanes || o.gap != i.gap * self.stride {
            return bad("output layout must keep the lanes and scale the gap by the stride");
        }
        i.validate(x, slots)?;
        o.validate(self.output_shape(x), slots)?;
        Ok(())
    }
}

/// Rotated copies of one input ciphertext, one per kernel offset.
fn rotated_inputs<B: SlotBackend>(
    ops: &Ops<B>,
    ct: &B::Ct,
    spec: &ConvLayerSpec,
    shape: Shape,
) -> Result<Vec<((isize, isize), B::Ct)>, PackingError> {
    let f = spec.in_format;
    let (_, ws) = f.grid(shape);
    let r = (spec.kernel / 2) as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r).flat_map(|di| (-r..=r).map(move |dj| (di, dj))).collect();
    let steps: Vec<i64> = offsets.iter().map(|&(di, dj)| (f.gap as isize * (di * ws as isize + dj) * f.lanes as isize) as i64).collect();
    Ok(offsets.into_iter().zip(ops.rotate_many(ct, &steps)?).collect())
}

/// Masked sums over all rotated inputs, one ciphertext per output group, not yet
/// rescaled. Output `o` reads the input at `slot + offset(o)`.
fn weighted_sums<B: SlotBackend>(
    ops: &Ops<B>,
    x: &PackedTensor<B::Ct>,
    inputs: &[B::Ct],
    spec: &ConvLayerSpec,
    groups: &[std::ops::Range<usize>],
    offset: impl Fn(usize) -> usize,
) -> Result<Vec<B::Ct>, PackingError> {
    let f = spec.in_format;
    let shape = x.shape;
    let slots = ops.slots();
    let s = spec.stride;
    let keep = ops.scale(&x.cts[0]);
    let rotated = inputs.iter().map(|ct| rotated_inputs(ops, ct, spec, shape)).collect::<Result<Vec<_>, _>>()?;
    let mut sums = Vec::with_capacity(groups.len());
    let mut mask = vec![0.0; slots];
    for outs in groups {
        let mut acc = None;
        for (t, copies) in rotated.iter().enumerate() {
            for ((di, dj), ct) in copies {
                mask.iter_mut().for_each(|m| *m = 0.0);
                for o in outs.clone() {
                    for c in t * f.multiplex..((t + 1) * f.multiplex).min(shape.c) {
                        let w = spec.weight(o, c, *di, *dj) * spec.pre_scale[c];
                        for i in (0..shape.h).step_by(s) {
                            for j in (0..shape.w).step_by(s) {
                                let (y, z) = (i as isize + di, j as isize + dj);
                                if y >= 0 && z >= 0 && (y as usize) < shape.h && (z as usize) < shape.w {
                                    mask[f.slot(shape, c, i, j).1 + offset(o)] = w;
                                }
                            }
                        }
                    }
                }
                acc = ops.accumulate(acc, ops.mul_plain(ct, &mask, keep)?)?;
            }
        }
        sums.push(acc.expect("at least one input ciphertext"));
    }
    Ok(sums)
}

fn singletons(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n).map(|o| o..o + 1).collect()
}

/// `acc += rotate(acc, k·step)` for `k = 1, 2, 4, ...` below `count`.
fn sum_tree<B: SlotBackend>(ops: &Ops<B>, mut acc: B::Ct, count: usize, step: i64) -> Result<B::Ct, PackingError> {
    let mut k = 1;
    while k < count {
        let r = ops.rotate(&acc, k as i64 * step)?;
        acc = ops.add(&acc, &r)?;
        k *= 2;
    }
    Ok(acc)
}

/// Final selection mask and bias for one output ciphertext holding channels `outs`.
fn finish_output<B: SlotBackend>(
    ops: &Ops<B>,
    acc: &B::Ct,
    spec: &ConvLayerSpec,
    in_shape: Shape,
    outs: std::ops::Range<usize>,
) -> Result<B::Ct, PackingError> {
    let out_shape = spec.output_shape(in_shape);
    let f = spec.out_format;
    let slots = ops.slots();
    let mut select = vec![0.0; slots];
    let mut bias = vec![0.0; slots];
    for o in outs {
        for i in 0..out_shape.h {
            for j in 0..out_shape.w {
                let s = f.slot(out_shape, o, i, j).1;
                select[s] = 1.0;
                bias[s] = spec.bias_at(o, in_shape, i, j);
            }
        }
    }
    let y = ops.rescale(&ops.mul_plain(acc, &select, ops.nominal_scale())?)?;
    ops.add_plain(&y, &bias)
}

fn next_pow2_min(a: usize, cap: usize) -> usize {
    a.min(cap).next_power_of_two()
}

/// Convolution that switches layout (`A → B` or `B → A`).
pub fn conv2d<B: SlotBackend>(
    ops: &Ops<B>,
    x: &PackedTensor<B::Ct>,
    spec: &ConvLayerSpec,
) -> Result<PackedTensor<B::Ct>, PackingError> {
    spec.validate(x.shape, x.format, ops.slots(), false)?;
    require_levels(x.level(ops.backend), 2)?;
    let fi = spec.in_format;
    let fo = spec.out_format;
    let out_shape = spec.output_shape(x.shape);
    let groups: Vec<_> = (0..fo.num_cts(out_shape)).map(|k| k * fo.multiplex..((k + 1) * fo.multiplex).min(spec.out_channels)).collect();
    // outputs are told apart by lane (A input) or by block (B input)
    let (unit, room) = match fi.variant {
        Variant::A => (1, fi.lanes),
        Variant::B => (fi.block_len(x.shape), ops.slots() / fi.block_len(x.shape)),
    };
    let offset = |o: usize| (o % fo.multiplex) * unit;
    // Replicating each input over the output lanes/blocks first costs log2(copies)
    // rotations per input and saves one placement rotation per non-leading output.
    let copies = next_pow2_min(spec.out_channels, fo.multiplex);
    let replicate_cost = x.cts.len() * copies.trailing_zeros() as usize;
    let placement_cost: usize = groups.iter().map(|g| g.len() - 1).sum();
    let sums = if copies <= room && replicate_cost < placement_cost {
        let inputs = x.cts.iter().map(|ct| sum_tree(ops, ct.clone(), copies, -(unit as i64))).collect::<Result<Vec<_>, _>>()?;
        weighted_sums(ops, x, &inputs, spec, &groups, offset)?
    } else {
        let u = weighted_sums(ops, x, &x.cts, spec, &singletons(spec.out_channels), |_| 0)?;
        groups
            .iter()
            .map(|outs| {
                let mut acc = None;
                for o in outs.clone() {
                    acc = ops.accumulate(acc, ops.rotate(&u[o], -(offset(o) as i64))?)?;
                }
                Ok(acc.expect("non-empty output group"))
            })
            .collect::<Result<Vec<_>, PackingError>>()?
    };
    let mut cts = Vec::with_capacity(groups.len());
    for (acc, outs) in sums.into_iter().zip(groups) {
        let acc = match fi.variant {
            Variant::A => sum_tree(ops, acc, next_pow2_min(x.shape.c, fi.multiplex), fi.block_len(x.shape) as i64)?,
            Variant::B => sum_tree(ops, acc, next_pow2_min(x.shape.c, fi.lanes), 1)?,
        };
        let acc = ops.rescale(&acc)?;
        cts.push(finish_output(ops, &acc, spec, x.shape, outs)?);
    }
    Ok(PackedTensor { cts, format: fo, shape: out_shape })
}

/// Convolution that keeps the input layout, restoring it with per-output rotations.
pub fn conv2d_fixed_baseline<B: SlotBackend>(
    ops: &Ops<B>,
    x: &PackedTensor<B::Ct>,
    spec: &ConvLayerSpec,
) -> Result<PackedTensor<B::Ct>, PackingError> {
    spec.validate(x.shape, x.format, ops.slots(), true)?;
    require_levels(x.level(ops.backend), 2)?;
    let fi = spec.in_format;
    let fo = spec.out_format;
    let out_shape = spec.output_shape(x.shape);
    let slots = ops.slots();
    let bk = fi.block_len(x.shape);
    let u = weighted_sums(ops, x, &x.cts, spec, &singletons(spec.out_channels), |_| 0)?;
    let mut cts = Vec::with_capacity(fo.num_cts(out_shape));
    for k in 0..fo.num_cts(out_shape) {
        let outs = k * fo.multiplex..((k + 1) * fo.multiplex).min(spec.out_channels);
        let mut acc = None;
        for o in outs.clone() {
            let (reduced, replicated, shift) = match fi.variant {
                Variant::A => {
                    let nb = next_pow2_min(x.shape.c, fi.multiplex);
                    (sum_tree(ops, u[o].clone(), nb, bk as i64)?, nb * bk == slots, (o % fo.multiplex) * bk)
                }
                Variant::B => (sum_tree(ops, u[o].clone(), next_pow2_min(x.shape.c, fi.lanes), 1)?, false, o % fo.multiplex),
            };
            let reduced = ops.rescale(&reduced)?;
            // the tree leaves the sum in block/lane 0, or in every block when it wraps the ring
            let src = if replicated { shift } else { 0 };
            let mut select = vec![0.0; slots];
            for i in 0..out_shape.h {
                for j in 0..out_shape.w {
                    select[fo.slot(out_shape, o, i, j).1 - shift + src] = 1.0;
                }
            }
            let picked = ops.mul_plain(&reduced, &select, ops.nominal_scale())?;
            let placed = ops.rotate(&picked, src as i64 - shift as i64)?;
            acc = ops.accumulate(acc, placed)?;
        }
        let y = ops.rescale(&acc.expect("non-empty output group"))?;
        let mut bias = vec![0.0; slots];
        for o in outs {
            for i in 0..out_shape.h {
                for j in 0..out_shape.w {
                    bias[fo.slot(out_shape, o, i, j).1] = spec.bias_at(o, x.shape, i, j);
                }
            }
        }
        cts.push(ops.add_plain(&y, &bias)?);
    }
    Ok(PackedTensor { cts, format: fo, shape: out_shape })
}

/// Direct dense convolution with zero padding, the reference for both paths.
pub fn dense_conv2d(x: &Tensor3, spec: &ConvLayerSpec) -> Tensor3 {
    let out_shape = spec.output_shape(x.shape);
    let r = (spec.kernel / 2) as isize;
    let mut y = Tensor3::zeros(out_shape);
    for o in 0..out_shape.c {
        for i in 0..out_shape.h {
            for j in 0..out_shape.w {
                let mut acc = spec.bias[o];
                for c in 0..x.shape.c {
                    for di in -r..=r {
                        for dj in -r..=r {
                            let (p, q) = ((i * spec.stride) as isize + di, (j * spec.stride) as isize + dj);
                            if p >= 0 && q >= 0 && (p as usize) < x.shape.h && (q as usize) < x.shape.w {
                                let v = spec.pre_scale[c] * x.get(c, p as usize, q as usize) + spec.input_offset[c];
                                acc += spec.weight(o, c, di, dj) * v;
                            }
                        }
                    }
                }
                y.set(o, i, j, acc);
            }
        }
    }
    y
}
