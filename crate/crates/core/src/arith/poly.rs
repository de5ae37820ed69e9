//! Residue-number-system polynomials.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rayon::prelude::*;

use super::{ArithError, Modulus, TwiddleTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Coefficient,
    Evaluation,
}

/// An ordered list of pairwise-distinct prime moduli for a fixed ring degree.
#[derive(Debug)]
pub struct RnsBasis {
    n: usize,
    moduli: Vec<Modulus>,
    tables: Vec<Option<Arc<TwiddleTable>>>,
    id: u64,
}

impl RnsBasis {
    /// Builds twiddle tables for every modulus that admits a `2n`-th root.
    pub fn new(n: usize, moduli: &[u64]) -> Result<Arc<Self>, ArithError> {
        if n < 2 || !n.is_power_of_two() {
            return Err(ArithError::BadDegree(n));
        }
        let mut ms = Vec::with_capacity(moduli.len());
        let mut tables = Vec::with_capacity(moduli.len());
        for (i, &q) in moduli.iter().enumerate() {
            if moduli[..i].contains(&q) {
                return Err(ArithError::DuplicateModulus(q));
            }
            let m = Modulus::new(q)?;
            tables.push(TwiddleTable::new(m, n).ok().map(Arc::new));
            ms.push(m);
        }
        Ok(Arc::new(Self::assemble(n, ms, tables)))
    }

    fn assemble(n: usize, moduli: Vec<Modulus>, tables: Vec<Option<Arc<TwiddleTable>>>) -> Self {
        let mut h = DefaultHasher::new();
        n.hash(&mut h);
        for m in &moduli {
            m.value().hash(&mut h);
        }
        Self { n, moduli, tables, id: h.finish() }
    }

    /// Sub-basis made of the given positions, sharing twiddle tables.
    pub fn select(&self, idx: impl IntoIterator<Item = usize>) -> Arc<Self> {
        let (ms, ts): (Vec<_>, Vec<_>) = idx.into_iter().map(|i| (self.moduli[i], self.tables[i].clone())).unzip();
        Arc::new(Self::assemble(self.n, ms, ts))
    }

    pub fn prefix(&self, len: usize) -> Arc<Self> {
        self.select(0..len)
    }

    /// Concatenation `self ∪ other` in order.
    pub fn concat(&self, other: &RnsBasis) -> Arc<Self> {
        let ms = self.moduli.iter().chain(&other.moduli).copied().collect();
        let ts = self.tables.iter().chain(&other.tables).cloned().collect();
        Arc::new(Self::assemble(self.n, ms, ts))
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.moduli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moduli.is_empty()
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn moduli(&self) -> &[Modulus] {
        &self.moduli
    }

    pub fn modulus(&self, i: usize) -> &Modulus {
        &self.moduli[i]
    }

    pub fn values(&self) -> Vec<u64> {
        self.moduli.iter().map(|m| m.value()).collect()
    }

    pub fn table(&self, i: usize) -> Result<&TwiddleTable, ArithError> {
        self.tables[i]
            .as_deref()
            .ok_or(ArithError::MissingTwiddle { modulus: self.moduli[i].value(), degree: self.n })
    }
}

/// A polynomial stored as one residue vector per modulus (limb-major).
#[derive(Clone, Debug)]
pub struct RnsPoly {
    limbs: Vec<Vec<u64>>,
    domain: Domain,
    basis: Arc<RnsBasis>,
}

impl PartialEq for RnsPoly {
    fn eq(&self, other: &Self) -> bool {
        self.basis.id == other.basis.id && self.domain == other.domain && self.limbs == other.limbs
    }
}

impl RnsPoly {
    pub fn zero(basis: &Arc<RnsBasis>, domain: Domain) -> Self {
        Self { limbs: vec![vec![0; basis.n]; basis.len()], domain, basis: basis.clone() }
    }

    /// Residues must already be reduced; lengths must match the basis.
    pub fn from_limbs(basis: &Arc<RnsBasis>, limbs: Vec<Vec<u64>>, domain: Domain) -> Result<Self, ArithError> {
        if limbs.len() != basis.len() {
            return Err(ArithError::BasisMismatch);
        }
        for (l, m) in limbs.iter().zip(&basis.moduli) {
            if l.len() != basis.n {
                return Err(ArithError::BadDegree(l.len()));
            }
            if l.iter().any(|&x| x >= m.value()) {
                return Err(ArithError::UnreducedResidue(m.value()));
            }
        }
        Ok(Self { limbs, domain, basis: basis.clone() })
    }

    /// Coefficient-domain polynomial from signed integer coefficients.
    pub fn from_signed(basis: &Arc<RnsBasis>, coeffs: &[i64]) -> Self {
        assert_eq!(coeffs.len(), basis.n);
        let limbs = basis.moduli.iter().map(|m| coeffs.iter().map(|&c| m.reduce_i64(c)).collect()).collect();
        Self { limbs, domain: Domain::Coefficient, basis: basis.clone() }
    }

    pub fn from_i128(basis: &Arc<RnsBasis>, coeffs: &[i128]) -> Self {
        assert_eq!(coeffs.len(), basis.n);
        let limbs = basis.moduli.iter().map(|m| coeffs.iter().map(|&c| m.reduce_i128(c)).collect()).collect();
        Self { limbs, domain: Domain::Coefficient, basis: basis.clone() }
    }

    pub fn degree(&self) -> usize {
        self.basis.n
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn basis(&self) -> &Arc<RnsBasis> {
        &self.basis
    }

    pub fn limbs(&self) -> &[Vec<u64>] {
        &self.limbs
    }

    pub fn limb(&self, i: usize) -> &[u64] {
        &self.limbs[i]
    }

    pub fn limb_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.limbs[i]
    }

    pub fn into_limbs(self) -> Vec<Vec<u64>> {
        self.limbs
    }

    fn check_compatible(&self, other: &Self) -> Result<(), ArithError> {
        if self.basis.id != other.basis.id {
            return Err(ArithError::BasisMismatch);
        }
        if self.domain != other.domain {
            return Err(ArithError::WrongDomain { expected: self.domain, found: other.domain });
        }
        Ok(())
    }

    fn expect_domain(&self, d: Domain) -> Result<(), ArithError> {
        if self.domain != d {
            return Err(ArithError::WrongDomain { expected: d, found: self.domain });
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<(), ArithError> {
        self.check_compatible(other)?;
        for ((a, b), m) in self.limbs.iter_mut().zip(&other.limbs).zip(&self.basis.moduli) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = m.add(*x, y);
            }
        }
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &Self) -> Result<(), ArithError> {
        self.check_compatible(other)?;
        for ((a, b), m) in self.limbs.iter_mut().zip(&other.limbs).zip(&self.basis.moduli) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = m.sub(*x, y);
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, ArithError> {
        let mut r = self.clone();
        r.add_assign(other)?;
        Ok(r)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, ArithError> {
        let mut r = self.clone();
        r.sub_assign(other)?;
        Ok(r)
    }

    pub fn neg(&self) -> Self {
        let mut r = self.clone();
        for (a, m) in r.limbs.iter_mut().zip(&self.basis.moduli) {
            for x in a.iter_mut() {
                *x = m.neg(*x);
            }
        }
        r
    }

    /// Pointwise product; both operands in the evaluation domain.
    pub fn mul(&self, other: &Self) -> Result<Self, ArithError> {
        let mut r = self.clone();
        r.mul_assign(other)?;
        Ok(r)
    }

    pub fn mul_assign(&mut self, other: &Self) -> Result<(), ArithError> {
        self.check_compatible(other)?;
        self.expect_domain(Domain::Evaluation)?;
        let moduli = &self.basis.moduli;
        self.limbs.par_iter_mut().zip(&other.limbs).zip(moduli).for_each(|((a, b), m)| {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = m.mul(*x, y);
            }
        });
        Ok(())
    }

    /// `self += a * b` pointwise, all in the evaluation domain.
    pub fn mul_add_assign(&mut self, a: &Self, b: &Self) -> Result<(), ArithError> {
        self.check_compatible(a)?;
        self.check_compatible(b)?;
        self.expect_domain(Domain::Evaluation)?;
        let moduli = &self.basis.moduli;
        self.limbs.par_iter_mut().zip(&a.limbs).zip(&b.limbs).zip(moduli).for_each(|(((acc, x), y), m)| {
            for ((z, &u), &v) in acc.iter_mut().zip(x).zip(y) {
                *z = m.add(*z, m.mul(u, v));
            }
        });
        Ok(())
    }

    /// Multiplies limb `i` by `scalars[i]` (already reduced mod that limb).
    pub fn mul_scalars(&mut self, scalars: &[u64]) {
        assert_eq!(scalars.len(), self.limbs.len());
        for ((a, m), &s) in self.limbs.iter_mut().zip(&self.basis.moduli).zip(scalars) {
            let sh = m.shoup(s);
            for x in a.iter_mut() {
                *x = m.mul_shoup(*x, s, sh);
            }
        }
    }

    pub fn ntt_forward(&mut self) -> Result<(), ArithError> {
        self.expect_domain(Domain::Coefficient)?;
        let tables: Vec<&TwiddleTable> = (0..self.basis.len()).map(|i| self.basis.table(i)).collect::<Result<_, _>>()?;
        self.limbs.par_iter_mut().zip(tables).for_each(|(l, t)| t.forward(l));
        self.domain = Domain::Evaluation;
        Ok(())
    }

    pub fn ntt_inverse(&mut self) -> Result<(), ArithError> {
        self.expect_domain(Domain::Evaluation)?;
        let tables: Vec<&TwiddleTable> = (0..self.basis.len()).map(|i| self.basis.table(i)).collect::<Result<_, _>>()?;
        self.limbs.par_iter_mut().zip(tables).for_each(|(l, t)| t.inverse(l));
        self.domain = Domain::Coefficient;
        Ok(())
    }

    pub fn to_domain(mut self, d: Domain) -> Result<Self, ArithError> {
        match (self.domain, d) {
            (Domain::Coefficient, Domain::Evaluation) => self.ntt_forward()?,
            (Domain::Evaluation, Domain::Coefficient) => self.ntt_inverse()?,
            _ => {}
        }
        Ok(self)
    }

    /// Keeps the first `len` limbs.
    pub fn truncate(&mut self, len: usize) {
        if len < self.limbs.len() {
            self.limbs.truncate(len);
            self.basis = self.basis.prefix(len);
        }
    }

    /// Restriction to the limbs at `idx`.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            limbs: idx.iter().map(|&i| self.limbs[i].clone()).collect(),
            domain: self.domain,
            basis: self.basis.select(idx.iter().copied()),
        }
    }

    /// Restriction to limbs at `idx`, reusing an already built sub-basis.
    pub fn select_into(&self, idx: &[usize], basis: &Arc<RnsBasis>) -> Self {
        debug_assert_eq!(basis.len(), idx.len());
        Self { limbs: idx.iter().map(|&i| self.limbs[i].clone()).collect(), domain: self.domain, basis: basis.clone() }
    }

    /// `X -> X^g` for odd `g`, applied to coefficients.
    pub fn automorphism_coeff(&self, g: usize) -> Result<Self, ArithError> {
        self.expect_domain(Domain::Coefficient)?;
        let n = self.basis.n;
        let two_n = 2 * n;
        let mut out = Self::zero(&self.basis, Domain::Coefficient);
        for ((dst, src), m) in out.limbs.iter_mut().zip(&self.limbs).zip(&self.basis.moduli) {
            for (i, &c) in src.iter().enumerate() {
                let e = (i * g) % two_n;
                if e < n {
                    dst[e] = c;
                } else {
                    dst[e - n] = m.neg(c);
                }
            }
        }
        Ok(out)
    }

    /// `X -> X^g` in the evaluation domain, as a slot permutation from [`galois_permutation`].
    pub fn automorphism_eval(&self, perm: &[usize]) -> Result<Self, ArithError> {
        self.expect_domain(Domain::Evaluation)?;
        let limbs = self.limbs.iter().map(|l| perm.iter().map(|&j| l[j]).collect()).collect();
        Ok(Self { limbs, domain: Domain::Evaluation, basis: self.basis.clone() })
    }

    /// Centered coefficients of a single-limb coefficient-domain polynomial.
    pub fn centered_first_limb(&self) -> Result<Vec<i64>, ArithError> {
        self.expect_domain(Domain::Coefficient)?;
        let m = &self.basis.moduli[0];
        Ok(self.limbs[0].iter().map(|&x| m.center(x)).collect())
    }
}

/// Source index for every evaluation slot under `X -> X^g`.
pub fn galois_permutation(n: usize, g: usize) -> Vec<usize> {
    let bits = n.trailing_zeros();
    let two_n = 2 * n;
    let mut inv_exp = vec![0usize; two_n];
    for k in 0..n {
        inv_exp[2 * super::ntt::bit_reverse(k, bits) + 1] = k;
    }
    (0..n)
        .map(|k| {
            let e = 2 * super::ntt::bit_reverse(k, bits) + 1;
            inv_exp[(e * g) % two_n]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::ntt_primes_below;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis(n: usize, k: usize) -> Arc<RnsBasis> {
        RnsBasis::new(n, &ntt_primes_below(1 << 50, n, k, &[]).unwrap()).unwrap()
    }

    fn random(b: &Arc<RnsBasis>, rng: &mut ChaCha8Rng) -> RnsPoly {
        let coeffs: Vec<i64> = (0..b.degree()).map(|_| rng.random_range(-1000..1000)).collect();
        RnsPoly::from_signed(b, &coeffs)
    }

    #[test]
    fn wrong_domain_is_rejected() {
        let b = basis(8, 2);
        let p = RnsPoly::zero(&b, Domain::Coefficient);
        assert!(matches!(p.mul(&p), Err(ArithError::WrongDomain { .. })));
        let mut q = p.clone();
        assert!(q.ntt_inverse().is_err());
        let other = basis(8, 3);
        assert!(matches!(p.add(&RnsPoly::zero(&other, Domain::Coefficient)), Err(ArithError::BasisMismatch)));
    }

    #[test]
    fn eval_automorphism_matches_coefficient_automorphism() {
        let b = basis(32, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random(&b, &mut rng);
        for g in [5usize, 25, 63, 2 * 32 - 1] {
            let direct = p.automorphism_coeff(g).unwrap().to_domain(Domain::Evaluation).unwrap();
            let eval = p.clone().to_domain(Domain::Evaluation).unwrap();
            let via = eval.automorphism_eval(&galois_permutation(32, g)).unwrap();
            assert_eq!(direct, via, "g = {g}");
        }
    }

    #[test]
    fn select_and_truncate_keep_residues() {
        let b = basis(16, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random(&b, &mut rng);
        let s = p.select(&[0, 2]);
        assert_eq!(s.limb(1), p.limb(2));
        let mut t = p.clone();
        t.truncate(1);
        assert_eq!(t.basis().values(), vec![b.modulus(0).value()]);
        assert_eq!(t.centered_first_limb().unwrap(), p.centered_first_limb().unwrap());
    }
}
