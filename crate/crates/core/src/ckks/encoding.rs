//! Canonical-embedding encoder: slot vectors to scaled integer coefficients.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::CkksError;

/// Special FFT over the rotation group generated by 5 modulo `2N`.
#[derive(Clone, Debug)]
pub struct Encoder {
    n: usize,
    slots: usize,
    ksi: Vec<Complex64>,
    rot_group: Vec<usize>,
}

impl Encoder {
    pub fn new(n: usize) -> Self {
        let m = 2 * n;
        let ksi = (0..=m).map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64)).collect();
        let slots = n / 2;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = g * 5 % m;
        }
        Self { n, slots, ksi, rot_group }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Galois element realising a left rotation of the slots by `step`.
    pub fn galois_element(&self, step: usize) -> usize {
        self.rot_group[step % self.slots]
    }

    /// Galois element of complex conjugation.
    pub fn conjugation_element(&self) -> usize {
        2 * self.n - 1
    }

    fn bit_reverse_in_place(vals: &mut [Complex64]) {
        let n = vals.len();
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = crate::arith::bit_reverse(i, bits);
            if i < j {
                vals.swap(i, j);
            }
        }
    }

    /// Evaluates the packed polynomial at the slot roots.
    fn emb(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        Self::bit_reverse_in_place(vals);
        let mut len = 2;
        while len <= size {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = m / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * gap;
                    let u = vals[i + j];
                    let v = vals[i + j + lenh] * self.ksi[idx];
                    vals[i + j] = u + v;
                    vals[i + j + lenh] = u - v;
                }
            }
            len <<= 1;
        }
    }

    fn emb_inv(&self, vals: &mut [Complex64]) {
        let size = vals.len();
        let m = 2 * self.n;
        let mut len = size;
        while len >= 1 {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = m / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - (self.rot_group[j] % lenq)) * gap;
                    let u = vals[i + j] + vals[i + j + lenh];
                    let v = (vals[i + j] - vals[i + j + lenh]) * self.ksi[idx];
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len >>= 1;
        }
        Self::bit_reverse_in_place(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            *v *= inv;
        }
    }

    /// Scaled, rounded coefficients whose embedding is `values` (zero-padded).
    ///
    /// Fails when a coefficient reaches `bound` in magnitude.
    pub fn encode(&self, values: &[Complex64], scale: f64, bound: f64) -> Result<Vec<i128>, CkksError> {
        if values.len() > self.slots {
            return Err(CkksError::TooManyValues { given: values.len(), slots: self.slots });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(CkksError::ScaleOverflow(format!("invalid scale {scale}")));
        }
        let mut u = vec![Complex64::new(0.0, 0.0); self.slots];
        u[..values.len()].copy_from_slice(values);
        if u.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(CkksError::ScaleOverflow("non-finite input value".into()));
        }
        self.emb_inv(&mut u);
        let limit = bound.min(2f64.powi(125));
        let mut coeffs = vec![0i128; self.n];
        for (i, z) in u.iter().enumerate() {
            let (re, im) = ((z.re * scale).round(), (z.im * scale).round());
            if re.abs() >= limit || im.abs() >= limit {
                return Err(CkksError::ScaleOverflow(format!(
                    "scaled coefficient 2^{:.1} exceeds modulus bound 2^{:.1}",
                    re.abs().max(im.abs()).log2(),
                    limit.log2()
                )));
            }
            coeffs[i] = re as i128;
            coeffs[i + self.slots] = im as i128;
        }
        Ok(coeffs)
    }

    /// Slot values of centered real coefficients divided by `scale`.
    pub fn decode(&self, coeffs: &[f64], scale: f64) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.n);
        let mut u: Vec<Complex64> =
            (0..self.slots).map(|i| Complex64::new(coeffs[i] / scale, coeffs[i + self.slots] / scale)).collect();
        self.emb(&mut u);
        u
    }

    /// Direct `O(N·slots)` evaluation of the decoding map; used as an oracle.
    pub fn decode_naive(&self, coeffs: &[f64], scale: f64) -> Vec<Complex64> {
        let m = 2 * self.n;
        (0..self.slots)
            .map(|j| {
                let g = self.rot_group[j];
                coeffs.iter().enumerate().map(|(i, &c)| self.ksi[(i * g) % m] * (c / scale)).sum()
            })
            .collect()
    }
}
