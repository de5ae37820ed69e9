//! Word-sized prime moduli with Barrett and Shoup multiplication.

use super::ArithError;

/// Largest admissible modulus bit width. Lazy NTT butterflies keep values below `4q`.
pub const MAX_MODULUS_BITS: u32 = 62;

/// An odd prime `q < 2^62` with a precomputed Barrett constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    q: u64,
    /// `floor(2^128 / q)`.
    barrett: u128,
}

impl Modulus {
    pub fn new(q: u64) -> Result<Self, ArithError> {
        if q < 3 || q >> MAX_MODULUS_BITS != 0 {
            return Err(ArithError::ModulusOutOfRange(q));
        }
        if !is_prime(q) {
            return Err(ArithError::NotPrime(q));
        }
        Ok(Self { q, barrett: u128::MAX / q as u128 })
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.q
    }

    pub fn bits(&self) -> u32 {
        64 - self.q.leading_zeros()
    }

    /// Reduces any `x < q^2` (in practice any `x < 2^124`).
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let est = mul_hi_u128(x, self.barrett) as u64;
        let mut r = (x as u64).wrapping_sub(est.wrapping_mul(self.q));
        if r >= self.q {
            r -= self.q;
        }
        if r >= self.q {
            r -= self.q;
        }
        r
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        if x < self.q {
            x
        } else {
            self.reduce_u128(x as u128)
        }
    }

    /// Maps a signed integer to its residue in `[0, q)`.
    #[inline]
    pub fn reduce_i64(&self, x: i64) -> u64 {
        let r = self.reduce(x.unsigned_abs());
        if x < 0 && r != 0 {
            self.q - r
        } else {
            r
        }
    }

    pub fn reduce_i128(&self, x: i128) -> u64 {
        let r = (x.unsigned_abs() % self.q as u128) as u64;
        if x < 0 && r != 0 {
            self.q - r
        } else {
            r
        }
    }

    /// Centered representative in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, x: u64) -> i64 {
        if x > self.q / 2 {
            x as i64 - self.q as i64
        } else {
            x as i64
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        debug_assert!(a < self.q);
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.q && b < self.q);
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Shoup companion `floor(w * 2^64 / q)` for a fixed multiplicand `w < q`.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        debug_assert!(w < self.q);
        (((w as u128) << 64) / self.q as u128) as u64
    }

    /// `a * w mod q` using the Shoup companion of `w`. `a` may be any u64.
    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.q));
        if r >= self.q {
            r - self.q
        } else {
            r
        }
    }

    /// `a * w mod q` up to one extra `q`: the result is in `[0, 2q)`.
    #[inline]
    pub fn mul_shoup_lazy(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
        a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(self.q))
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        base = self.reduce(base);
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse of a nonzero residue (Fermat).
    pub fn inv(&self, a: u64) -> Result<u64, ArithError> {
        let a = self.reduce(a);
        if a == 0 {
            return Err(ArithError::NotInvertible { value: a, modulus: self.q });
        }
        Ok(self.pow(a, self.q - 2))
    }

    /// A primitive `2n`-th root of unity; requires `q ≡ 1 (mod 2n)`.
    pub fn primitive_2n_root(&self, n: usize) -> Result<u64, ArithError> {
        let two_n = 2 * n as u64;
        if !n.is_power_of_two() || !(self.q - 1).is_multiple_of(two_n) {
            return Err(ArithError::MissingTwiddle { modulus: self.q, degree: n });
        }
        let cofactor = (self.q - 1) / two_n;
        for g in 2..self.q {
            let cand = self.pow(g, cofactor);
            // order divides 2n; it is exactly 2n iff cand^n = -1
            if self.pow(cand, n as u64) == self.q - 1 {
                return Ok(cand);
            }
        }
        Err(ArithError::MissingTwiddle { modulus: self.q, degree: n })
    }
}

#[inline]
fn mul_hi_u128(a: u128, b: u128) -> u128 {
    const LO: u128 = u64::MAX as u128;
    let (a1, a0) = (a >> 64, a & LO);
    let (b1, b0) = (b >> 64, b & LO);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & LO) + (p10 & LO);
    p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64)
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, b, m);
        }
        b = mul_mod_u64(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin over u64.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// The `count` largest primes `q ≡ 1 (mod 2n)` strictly below `bound`.
pub fn ntt_primes_below(bound: u64, n: usize, count: usize, exclude: &[u64]) -> Result<Vec<u64>, ArithError> {
    let step = 2 * n as u64;
    let mut c = (bound - 1) / step * step + 1;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if c >= bound {
            c = match c.checked_sub(step) {
                Some(v) => v,
                None => break,
            };
            continue;
        }
        if !exclude.contains(&c) && is_prime(c) {
            out.push(c);
        }
        c = match c.checked_sub(step) {
            Some(v) if v > 2 => v,
            _ => break,
        };
    }
    if out.len() < count {
        return Err(ArithError::PrimeSearchExhausted { bound, degree: n });
    }
    Ok(out)
}

/// Distinct primes `q ≡ 1 (mod 2n)` ordered by distance to `center`, alternating sides.
pub fn ntt_primes_near(center: u64, n: usize, count: usize, exclude: &[u64]) -> Result<Vec<u64>, ArithError> {
    let step = 2 * n as u64;
    let limit = 1u64 << MAX_MODULUS_BITS;
    let base = center / step * step + 1;
    let mut out = Vec::with_capacity(count);
    let mut k: u64 = 0;
    while out.len() < count {
        let below = base.checked_sub(k * step).filter(|&c| c > 2);
        let above = if k == 0 { None } else { base.checked_add(k * step).filter(|&c| c < limit) };
        if below.is_none() && above.is_none() {
            return Err(ArithError::PrimeSearchExhausted { bound: center, degree: n });
        }
        for c in [below, above].into_iter().flatten() {
            if out.len() < count && !exclude.contains(&c) && !out.contains(&c) && is_prime(c) {
                out.push(c);
            }
        }
        k += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_modulus_examples() {
        let m = Modulus::new(17).unwrap();
        assert_eq!(m.mul(3, 5), 15);
        assert_eq!(m.mul(16, 16), 1);
        assert_eq!(m.sub(0, 1), 16);
        assert_eq!(m.add(16, 1), 0);
    }

    #[test]
    fn rejects_composites_and_wide_values() {
        assert!(matches!(Modulus::new(15), Err(ArithError::NotPrime(15))));
        assert!(matches!(Modulus::new(1 << 62), Err(ArithError::ModulusOutOfRange(_))));
    }

    #[test]
    fn barrett_and_shoup_match_u128_remainder() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for q in ntt_primes_below(1 << 61, 1 << 12, 3, &[]).unwrap().into_iter().chain([17, 97, 65537]) {
            let m = Modulus::new(q).unwrap();
            for _ in 0..20_000 {
                let a = rng.random_range(0..q);
                let b = rng.random_range(0..q);
                let want = ((a as u128 * b as u128) % q as u128) as u64;
                assert_eq!(m.mul(a, b), want);
                assert_eq!(m.mul_shoup(a, b, m.shoup(b)), want);
                let x: u64 = rng.random();
                assert_eq!(m.reduce(x), x % q);
            }
            assert_eq!(m.mul(q - 1, q - 1), 1);
        }
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        fn slow(n: u64) -> bool {
            n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
        }
        for n in 0..5000u64 {
            assert_eq!(is_prime(n), slow(n), "{n}");
        }
        // strong pseudoprimes to several small bases
        for n in [3_215_031_751u64, 2_152_302_898_747, 3_474_749_660_383, 341_550_071_728_321] {
            assert!(!is_prime(n));
        }
        assert!(is_prime((1 << 61) - 1));
    }

    #[test]
    fn prime_search_respects_congruence_and_width() {
        let ps = ntt_primes_near(1 << 40, 1 << 13, 10, &[]).unwrap();
        assert_eq!(ps.len(), 10);
        for p in &ps {
            assert_eq!(p % (1 << 14), 1);
            assert!(is_prime(*p));
            assert!((*p as f64 / (1u64 << 40) as f64 - 1.0).abs() < 1e-3);
        }
        let big = ntt_primes_below(1 << 59, 1 << 13, 2, &ps).unwrap();
        assert!(big.iter().all(|p| 64 - p.leading_zeros() == 59 && p % (1 << 14) == 1));
        assert!(big[0] > big[1]);
        let root = Modulus::new(ps[0]).unwrap().primitive_2n_root(1 << 13).unwrap();
        let m = Modulus::new(ps[0]).unwrap();
        assert_eq!(m.pow(root, 1 << 13), ps[0] - 1);
    }
}
