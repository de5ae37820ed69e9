//! Negacyclic number-theoretic transform over `Z_q[X]/(X^N + 1)`.
//!
//! The forward transform is an in-place Cooley-Tukey pass fed with powers of a
//! primitive `2N`-th root `psi` in bit-reversed order, so output index `k` holds the
//! evaluation at `psi^(2·rev(k)+1)`. The inverse is the matching Gentleman-Sande pass.

use super::{ArithError, Modulus};

#[derive(Clone, Debug)]
pub struct TwiddleTable {
    modulus: Modulus,
    n: usize,
    psi: u64,
    /// `psi^rev(i)` and Shoup companions.
    fwd: Vec<u64>,
    fwd_shoup: Vec<u64>,
    /// `psi^-rev(i)` and Shoup companions.
    inv: Vec<u64>,
    inv_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

pub fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl TwiddleTable {
    pub fn new(modulus: Modulus, n: usize) -> Result<Self, ArithError> {
        if n < 2 || !n.is_power_of_two() {
            return Err(ArithError::BadDegree(n));
        }
        let psi = modulus.primitive_2n_root(n)?;
        let psi_inv = modulus.inv(psi)?;
        let bits = n.trailing_zeros();
        let mut fwd = vec![0u64; n];
        let mut inv = vec![0u64; n];
        let (mut p, mut pi) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, bits);
            fwd[r] = p;
            inv[r] = pi;
            p = modulus.mul(p, psi);
            pi = modulus.mul(pi, psi_inv);
        }
        let fwd_shoup = fwd.iter().map(|&w| modulus.shoup(w)).collect();
        let inv_shoup = inv.iter().map(|&w| modulus.shoup(w)).collect();
        let n_inv = modulus.inv(n as u64)?;
        Ok(Self {
            modulus,
            n,
            psi,
            fwd,
            fwd_shoup,
            inv,
            inv_shoup,
            n_inv,
            n_inv_shoup: modulus.shoup(n_inv),
        })
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn psi(&self) -> u64 {
        self.psi
    }

    /// Coefficients to evaluations (bit-reversed order). Input residues must be `< q`.
    pub fn forward(&self, a: &mut [u64]) {
        assert_eq!(a.len(), self.n, "NTT length mismatch");
        let m = &self.modulus;
        let q = m.value();
        let two_q = 2 * q;
        // lazy butterflies keep values in [0, 4q); moduli below 2^62 keep that in a u64
        let mut t = self.n;
        let mut groups = 1;
        while groups < self.n {
            t >>= 1;
            for i in 0..groups {
                let w = self.fwd[groups + i];
                let ws = self.fwd_shoup[groups + i];
                let start = 2 * i * t;
                let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let mut u = *x;
                    if u >= two_q {
                        u -= two_q;
                    }
                    let v = m.mul_shoup_lazy(*y, w, ws);
                    *x = u + v;
                    *y = u + two_q - v;
                }
            }
            groups <<= 1;
        }
        for x in a.iter_mut() {
            let mut v = *x;
            if v >= two_q {
                v -= two_q;
            }
            if v >= q {
                v -= q;
            }
            *x = v;
        }
    }

    /// Evaluations (bit-reversed order) back to coefficients.
    pub fn inverse(&self, a: &mut [u64]) {
        assert_eq!(a.len(), self.n, "NTT length mismatch");
        let m = &self.modulus;
        let two_q = 2 * m.value();
        // lazy butterflies keep values in [0, 2q)
        let mut t = 1;
        let mut groups = self.n >> 1;
        while groups >= 1 {
            for i in 0..groups {
                let w = self.inv[groups + i];
                let ws = self.inv_shoup[groups + i];
                let start = 2 * i * t;
                let (lo, hi) = a[start..start + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (u, v) = (*x, *y);
                    let s = u + v;
                    *x = if s >= two_q { s - two_q } else { s };
                    *y = m.mul_shoup_lazy(u + two_q - v, w, ws);
                }
            }
            t <<= 1;
            groups >>= 1;
        }
        for x in a.iter_mut() {
            *x = m.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }

    /// Exponent `e` such that evaluation slot `k` holds `p(psi^e)`.
    pub fn slot_exponent(&self, k: usize) -> usize {
        2 * bit_reverse(k, self.n.trailing_zeros()) + 1
    }
}

/// Schoolbook negacyclic product, the reference for the transform.
pub fn negacyclic_schoolbook(a: &[u64], b: &[u64], m: &Modulus) -> Vec<u64> {
    let n = a.len();
    assert_eq!(n, b.len());
    let mut out = vec![0u64; n];
    for i in 0..n {
        for j in 0..n {
            let p = m.mul(a[i], b[j]);
            let k = i + j;
            if k < n {
                out[k] = m.add(out[k], p);
            } else {
                out[k - n] = m.sub(out[k - n], p);
            }
        }
    }
    out
}

/// Negacyclic product through the transform.
pub fn negacyclic_mul(a: &[u64], b: &[u64], table: &TwiddleTable) -> Vec<u64> {
    let m = table.modulus();
    let mut fa = a.to_vec();
    let mut fb = b.to_vec();
    table.forward(&mut fa);
    table.forward(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x = m.mul(*x, *y);
    }
    table.inverse(&mut fa);
    fa
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::ntt_primes_below;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn x_times_x_cubed_wraps_to_minus_one() {
        let m = Modulus::new(17).unwrap();
        let t = TwiddleTable::new(m, 4).unwrap();
        assert_eq!(negacyclic_mul(&[0, 1, 0, 0], &[0, 0, 0, 1], &t), vec![16, 0, 0, 0]);
    }

    #[test]
    fn missing_root_is_reported() {
        let m = Modulus::new(23).unwrap();
        assert!(matches!(TwiddleTable::new(m, 4), Err(ArithError::MissingTwiddle { modulus: 23, .. })));
    }

    #[test]
    fn slots_are_evaluations_at_odd_powers() {
        let q = ntt_primes_below(1 << 30, 16, 1, &[]).unwrap()[0];
        let m = Modulus::new(q).unwrap();
        let t = TwiddleTable::new(m, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<u64> = (0..16).map(|_| rng.random_range(0..q)).collect();
        let mut f = a.clone();
        t.forward(&mut f);
        for (k, &v) in f.iter().enumerate() {
            let x = m.pow(t.psi(), t.slot_exponent(k) as u64);
            let mut acc = 0;
            for &c in a.iter().rev() {
                acc = m.add(m.mul(acc, x), c);
            }
            assert_eq!(v, acc);
        }
    }

    #[test]
    fn round_trip_and_schoolbook_at_production_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &n in &[2usize, 64, 1024] {
            let q = ntt_primes_below(1 << 61, n, 1, &[]).unwrap()[0];
            let m = Modulus::new(q).unwrap();
            let t = TwiddleTable::new(m, n).unwrap();
            let a: Vec<u64> = (0..n).map(|_| rng.random_range(0..q)).collect();
            let b: Vec<u64> = (0..n).map(|_| rng.random_range(0..q)).collect();
            let mut r = a.clone();
            t.forward(&mut r);
            t.inverse(&mut r);
            assert_eq!(r, a);
            if n <= 64 {
                assert_eq!(negacyclic_mul(&a, &b, &t), negacyclic_schoolbook(&a, &b, &m));
            }
        }
    }
}
