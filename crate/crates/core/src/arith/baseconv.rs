//! Integer-only basis extension and CRT reconstruction.

use std::sync::Arc;

use super::{ArithError, Domain, Modulus, RnsBasis, RnsPoly};

/// Fast base conversion from `src` to `dst` using centered digits.
///
/// For `x` with residues in `src`, the output represents `x + k·Q_src` for some
/// integer `|k| <= src.len() / 2 + 1`. Small centered inputs usually come out exact.
#[derive(Debug)]
pub struct BaseConverter {
    src: Arc<RnsBasis>,
    dst: Arc<RnsBasis>,
    /// `(Q/q_i)^-1 mod q_i` with Shoup companions.
    hat_inv: Vec<(u64, u64)>,
    /// `hat[j][i] = (Q/q_i) mod p_j`.
    hat: Vec<Vec<u64>>,
    /// `Q mod p_j`.
    q_mod: Vec<u64>,
}

impl BaseConverter {
    pub fn new(src: &Arc<RnsBasis>, dst: &Arc<RnsBasis>) -> Result<Self, ArithError> {
        if src.is_empty() || dst.is_empty() {
            return Err(ArithError::EmptyBasis);
        }
        if src.degree() != dst.degree() {
            return Err(ArithError::BadDegree(dst.degree()));
        }
        let sm = src.moduli();
        let mut hat_inv = Vec::with_capacity(sm.len());
        for (i, qi) in sm.iter().enumerate() {
            let mut prod = 1u64;
            for (k, qk) in sm.iter().enumerate() {
                if k != i {
                    prod = qi.mul(prod, qi.reduce(qk.value()));
                }
            }
            let inv = qi.inv(prod)?;
            hat_inv.push((inv, qi.shoup(inv)));
        }
        let mut hat = Vec::with_capacity(dst.len());
        let mut q_mod = Vec::with_capacity(dst.len());
        for pj in dst.moduli() {
            let row: Vec<u64> = (0..sm.len())
                .map(|i| {
                    sm.iter()
                        .enumerate()
                        .filter(|&(k, _)| k != i)
                        .fold(1u64, |acc, (_, qk)| pj.mul(acc, pj.reduce(qk.value())))
                })
                .collect();
            q_mod.push(sm.iter().fold(1u64, |acc, qk| pj.mul(acc, pj.reduce(qk.value()))));
            hat.push(row);
        }
        Ok(Self { src: src.clone(), dst: dst.clone(), hat_inv, hat, q_mod })
    }

    pub fn src(&self) -> &Arc<RnsBasis> {
        &self.src
    }

    pub fn dst(&self) -> &Arc<RnsBasis> {
        &self.dst
    }

    /// Converts a coefficient-domain polynomial over `src` into one over `dst`.
    pub fn convert(&self, x: &RnsPoly) -> Result<RnsPoly, ArithError> {
        if x.basis().id() != self.src.id() {
            return Err(ArithError::BasisMismatch);
        }
        if x.domain() != Domain::Coefficient {
            return Err(ArithError::WrongDomain { expected: Domain::Coefficient, found: x.domain() });
        }
        let n = x.degree();
        let sm = self.src.moduli();
        // centered digits y_i in (-q_i/2, q_i/2], stored as (magnitude-ready residue, negative flag)
        let mut digits = vec![vec![0u64; n]; sm.len()];
        let mut negs = vec![0u32; n];
        for (i, qi) in sm.iter().enumerate() {
            let (w, ws) = self.hat_inv[i];
            let half = qi.value() / 2;
            for (c, (&xi, d)) in x.limb(i).iter().zip(digits[i].iter_mut()).enumerate() {
                let v = qi.mul_shoup(xi, w, ws);
                *d = v;
                if v > half {
                    negs[c] += 1;
                }
            }
        }
        let mut out = Vec::with_capacity(self.dst.len());
        for (j, pj) in self.dst.moduli().iter().enumerate() {
            let row = &self.hat[j];
            let qm = pj.neg(self.q_mod[j]);
            let mut limb = vec![0u64; n];
            for (c, o) in limb.iter_mut().enumerate() {
                let mut acc: u128 = 0;
                for (chunk_start, chunk) in digits.chunks(15).enumerate() {
                    for (k, d) in chunk.iter().enumerate() {
                        acc += pj.reduce(d[c]) as u128 * row[chunk_start * 15 + k] as u128;
                    }
                    acc = pj.reduce_u128(acc) as u128;
                }
                let r = acc as u64;
                *o = pj.add(r, pj.mul(pj.reduce(negs[c] as u64), qm));
            }
            out.push(limb);
        }
        RnsPoly::from_limbs(&self.dst, out, Domain::Coefficient)
    }
}

/// Garner mixed-radix reconstruction of centered integers, evaluated in `f64`.
#[derive(Debug, Clone)]
pub struct CrtReconstructor {
    moduli: Vec<Modulus>,
    /// `inv[i][k] = q_k^-1 mod q_i` for `k < i`.
    inv: Vec<Vec<u64>>,
}

impl CrtReconstructor {
    pub fn new(moduli: &[Modulus]) -> Result<Self, ArithError> {
        if moduli.is_empty() {
            return Err(ArithError::EmptyBasis);
        }
        let inv = moduli
            .iter()
            .enumerate()
            .map(|(i, qi)| (0..i).map(|k| qi.inv(moduli[k].value())).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { moduli: moduli.to_vec(), inv })
    }

    /// Centered value of the integer with the given residues, as `f64`.
    pub fn centered(&self, residues: &[u64]) -> f64 {
        let k = self.moduli.len();
        debug_assert_eq!(residues.len(), k);
        let mut d = [0u64; 64];
        let d = &mut d[..k];
        for i in 0..k {
            let qi = &self.moduli[i];
            let mut v = residues[i];
            for j in 0..i {
                v = qi.mul(qi.sub(v, qi.reduce(d[j])), self.inv[i][j]);
            }
            d[i] = v;
        }
        // X >= Q/2 iff the digit vector exceeds ((q_i - 1)/2)_i read from the top
        let mut upper = false;
        for i in (0..k).rev() {
            let h = (self.moduli[i].value() - 1) / 2;
            if d[i] != h {
                upper = d[i] > h;
                break;
            }
        }
        let eval = |digit: &dyn Fn(usize) -> u64| {
            let mut acc = 0.0f64;
            for i in (0..k).rev() {
                acc = acc * self.moduli[i].value() as f64 + digit(i) as f64;
            }
            acc
        };
        if upper {
            // Q - X = sum (q_i - 1 - d_i) P_i + 1
            -(eval(&|i| self.moduli[i].value() - 1 - d[i]) + 1.0)
        } else {
            eval(&|i| d[i])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::ntt_primes_below;

    #[test]
    fn constant_five_converts_exactly() {
        let src = RnsBasis::new(4, &[17, 23]).unwrap();
        let dst = RnsBasis::new(4, &[29]).unwrap();
        let x = RnsPoly::from_signed(&src, &[5, 0, 0, 0]);
        let y = BaseConverter::new(&src, &dst).unwrap().convert(&x).unwrap();
        assert_eq!(y.limb(0), &[5, 0, 0, 0]);
    }

    #[test]
    fn empty_basis_is_rejected() {
        let src = RnsBasis::new(4, &[17]).unwrap();
        let empty = src.select(std::iter::empty());
        assert!(matches!(BaseConverter::new(&src, &empty), Err(ArithError::EmptyBasis)));
    }

    #[test]
    fn reconstruction_of_signed_values() {
        let ps = ntt_primes_below(1 << 40, 8, 3, &[]).unwrap();
        let b = RnsBasis::new(8, &ps).unwrap();
        let crt = CrtReconstructor::new(b.moduli()).unwrap();
        for v in [0i128, 1, -1, 123_456_789_012_345, -(1i128 << 100), (1i128 << 110) + 7] {
            let res: Vec<u64> = b.moduli().iter().map(|m| m.reduce_i128(v)).collect();
            let got = crt.centered(&res);
            assert!((got - v as f64).abs() <= (v as f64).abs() * 1e-15, "{v} -> {got}");
        }
    }
}
