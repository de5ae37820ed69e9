//! Slot layouts for 3-D activation tensors.
//!
//! Layout `A` stores whole channels in consecutive blocks; each spatial position of a
//! block occupies `lanes` slots of which only the first carries data. Layout `B`
//! interleaves `multiplex` channels position by position, one channel per lane.
//! Layouts chain: a `B` output of a convolution reading `A` has as many lanes as the `A`
//! input had, and vice versa, so the two can alternate without extra data movement.

use serde::{Deserialize, Serialize};

use super::PackingError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Channel-blocked.
    A,
    /// Channel-interleaved.
    B,
}

/// `(channels, height, width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.c, self.h, self.w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PackingFormat {
    pub variant: Variant,
    /// Channels per ciphertext.
    pub multiplex: usize,
    /// Spacing between logical positions on the storage grid.
    pub gap: usize,
    /// Slots per spatial position; equals `multiplex` for layout `B`.
    pub lanes: usize,
}

impl PackingFormat {
    pub fn a(multiplex: usize, gap: usize, lanes: usize) -> Self {
        Self { variant: Variant::A, multiplex, gap, lanes }
    }

    pub fn b(multiplex: usize, gap: usize) -> Self {
        Self { variant: Variant::B, multiplex, gap, lanes: multiplex }
    }

    /// Storage grid `(h·gap, w·gap)`.
    pub fn grid(&self, shape: Shape) -> (usize, usize) {
        (shape.h * self.gap, shape.w * self.gap)
    }

    /// Slots spanned by one spatial grid of one ciphertext region.
    pub fn block_len(&self, shape: Shape) -> usize {
        let (hs, ws) = self.grid(shape);
        hs * ws * self.lanes
    }

    /// Slots used by one ciphertext.
    pub fn footprint(&self, shape: Shape) -> usize {
        match self.variant {
            Variant::A => self.multiplex * self.block_len(shape),
            Variant::B => self.block_len(shape),
        }
    }

    pub fn num_cts(&self, shape: Shape) -> usize {
        shape.c.div_ceil(self.multiplex)
    }

    /// Grid position index of logical `(i, j)`.
    pub fn position(&self, shape: Shape, i: usize, j: usize) -> usize {
        let (_, ws) = self.grid(shape);
        (self.gap * i) * ws + self.gap * j
    }

    /// `(ciphertext index, slot)` of element `(c, i, j)`.
    pub fn slot(&self, shape: Shape, c: usize, i: usize, j: usize) -> (usize, usize) {
        let local = c % self.multiplex;
        let pos = self.position(shape, i, j);
        let slot = match self.variant {
            Variant::A => local * self.block_len(shape) + pos * self.lanes,
            Variant::B => pos * self.multiplex + local,
        };
        (c / self.multiplex, slot)
    }

    pub fn validate(&self, shape: Shape, slots: usize) -> Result<(), PackingError> {
        let bad = |m: String| Err(PackingError::InvalidFormat(m));
        if !self.multiplex.is_power_of_two() || !self.lanes.is_power_of_two() || !self.gap.is_power_of_two() {
            return bad(format!("multiplex {}, lanes {} and gap {} must be powers of two", self.multiplex, self.lanes, self.gap));
        }
        if self.variant == Variant::B && self.lanes != self.multiplex {
            return bad("layout B needs lanes == multiplex".into());
        }
        if shape.is_empty() {
            return bad(format!("empty shape {shape}"));
        }
        let need = self.footprint(shape);
        if need > slots {
            return Err(PackingError::ShapeOverflow { shape, need, slots });
        }
        Ok(())
    }

    /// Layout with the same lanes and multiplex on a grid twice as sparse.
    pub fn strided(&self, stride: usize) -> Self {
        Self { gap: self.gap * stride, ..*self }
    }
}

/// Dense `(c, h, w)` tensor in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub shape: Shape,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![0.0; shape.len()] }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self, PackingError> {
        if data.len() != shape.len() {
            return Err(PackingError::ShapeMismatch(format!("{} values for shape {shape}", data.len())));
        }
        Ok(Self { shape, data })
    }

    #[inline]
    pub fn idx(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.shape.h + i) * self.shape.w + j
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        let k = self.idx(c, i, j);
        self.data[k] = v;
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Slot vectors, one per ciphertext, holding `t` in `format`.
pub fn pack(t: &Tensor3, format: PackingFormat, slots: usize) -> Result<Vec<Vec<f64>>, PackingError> {
    format.validate(t.shape, slots)?;
    let mut out = vec![vec![0.0; slots]; format.num_cts(t.shape)];
    for c in 0..t.shape.c {
        for i in 0..t.shape.h {
            for j in 0..t.shape.w {
                let (k, s) = format.slot(t.shape, c, i, j);
                out[k][s] = t.get(c, i, j);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pack`]; slots outside the layout are ignored.
pub fn unpack(vectors: &[Vec<f64>], format: PackingFormat, shape: Shape) -> Result<Tensor3, PackingError> {
    if vectors.len() != format.num_cts(shape) {
        return Err(PackingError::ShapeMismatch(format!(
            "{} slot vectors for {} ciphertexts",
            vectors.len(),
            format.num_cts(shape)
        )));
    }
    let mut t = Tensor3::zeros(shape);
    for c in 0..shape.c {
        for i in 0..shape.h {
            for j in 0..shape.w {
                let (k, s) = format.slot(shape, c, i, j);
                t.set(c, i, j, vectors[k][s]);
            }
        }
    }
    Ok(t)
}

/// Slot indices of every element in `(c, i, j)` order, as `ct:slot` pairs.
pub fn slot_map(format: PackingFormat, shape: Shape) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(shape.len());
    for c in 0..shape.c {
        for i in 0..shape.h {
            for j in 0..shape.w {
                v.push(format.slot(shape, c, i, j));
            }
        }
    }
    v
}
