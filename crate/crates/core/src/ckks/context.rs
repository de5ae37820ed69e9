//! Precomputed bases and conversion tables for a parameter set.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;

use super::{CkksError, CkksParams, Encoder, Plaintext};
use crate::arith::{galois_permutation, BaseConverter, CrtReconstructor, Domain, RnsBasis, RnsPoly};

#[derive(Debug)]
pub(crate) struct DigitTables {
    pub range: Range<usize>,
    pub src: Arc<RnsBasis>,
    /// Positions in the extended basis not covered by this digit.
    pub complement: Vec<usize>,
    pub conv: BaseConverter,
}

#[derive(Debug)]
pub(crate) struct LevelTables {
    pub digits: Vec<DigitTables>,
    pub p_to_q: BaseConverter,
    pub p_inv_mod_q: Vec<u64>,
    /// `q_level^-1 mod q_i` for `i < level` (empty at level 0).
    pub rescale_inv: Vec<u64>,
}

/// Everything derived from [`CkksParams`] that operations share.
#[derive(Debug)]
pub struct CkksContext {
    params: CkksParams,
    encoder: Encoder,
    p_basis: Arc<RnsBasis>,
    q_level: Vec<Arc<RnsBasis>>,
    ext_level: Vec<Arc<RnsBasis>>,
    crt: Vec<CrtReconstructor>,
    pub(crate) levels: Vec<LevelTables>,
    galois: Mutex<HashMap<usize, Arc<Vec<usize>>>>,
}

impl CkksContext {
    pub fn new(params: CkksParams) -> Result<Self, CkksError> {
        params.validate()?;
        let n = params.n();
        let all: Vec<u64> = params.q_chain.iter().chain(&params.p_special).copied().collect();
        let full = RnsBasis::new(n, &all)?;
        let nq = params.q_chain.len();
        let np = params.p_special.len();
        let p_basis = full.select(nq..nq + np);
        let mut q_level = Vec::with_capacity(nq);
        let mut ext_level = Vec::with_capacity(nq);
        let mut crt = Vec::with_capacity(nq);
        let mut levels = Vec::with_capacity(nq);
        for l in 0..nq {
            let q = full.prefix(l + 1);
            let ext = full.select((0..=l).chain(nq..nq + np));
            crt.push(CrtReconstructor::new(q.moduli())?);
            let mut digits = Vec::new();
            for range in params.digits_at(l) {
                let src = ext.select(range.clone());
                let complement: Vec<usize> = (0..ext.len()).filter(|i| !range.contains(i)).collect();
                let dst = ext.select(complement.iter().copied());
                let conv = BaseConverter::new(&src, &dst)?;
                digits.push(DigitTables { range, src, complement, conv });
            }
            let p_to_q = BaseConverter::new(&p_basis, &q)?;
            let p_inv_mod_q = q
                .moduli()
                .iter()
                .map(|m| {
                    let p = p_basis.moduli().iter().fold(1u64, |acc, pj| m.mul(acc, m.reduce(pj.value())));
                    m.inv(p)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let top = q.modulus(l).value();
            let rescale_inv = q.moduli()[..l].iter().map(|m| m.inv(m.reduce(top))).collect::<Result<Vec<_>, _>>()?;
            levels.push(LevelTables { digits, p_to_q, p_inv_mod_q, rescale_inv });
            q_level.push(q);
            ext_level.push(ext);
        }
        Ok(Self {
            encoder: Encoder::new(n),
            params,
            p_basis,
            q_level,
            ext_level,
            crt,
            levels,
            galois: Mutex::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn slots(&self) -> usize {
        self.params.slots()
    }

    pub fn max_level(&self) -> usize {
        self.params.max_level()
    }

    /// `q_0 .. q_level`.
    pub fn q_basis(&self, level: usize) -> &Arc<RnsBasis> {
        &self.q_level[level]
    }

    /// `q_0 .. q_level` followed by the special primes.
    pub fn ext_basis(&self, level: usize) -> &Arc<RnsBasis> {
        &self.ext_level[level]
    }

    pub fn p_basis(&self) -> &Arc<RnsBasis> {
        &self.p_basis
    }

    pub fn check_level(&self, level: usize) -> Result<(), CkksError> {
        if level > self.max_level() {
            return Err(CkksError::LevelOutOfRange { level, max: self.max_level() });
        }
        Ok(())
    }

    /// The modulus dropped by the next rescale at `level`.
    pub fn rescale_prime(&self, level: usize) -> u64 {
        self.params.q_chain[level]
    }

    pub(crate) fn galois_perm(&self, g: usize) -> Arc<Vec<usize>> {
        let mut cache = self.galois.lock().expect("galois cache poisoned");
        cache.entry(g).or_insert_with(|| Arc::new(galois_permutation(self.n(), g))).clone()
    }

    /// Largest coefficient magnitude representable at `level`.
    fn coefficient_bound(&self, level: usize) -> f64 {
        let log_q: f64 = self.params.q_chain[..=level].iter().map(|&q| (q as f64).log2()).sum();
        (log_q - 1.0).exp2()
    }

    pub fn encode_complex(&self, values: &[Complex64], scale: f64, level: usize) -> Result<Plaintext, CkksError> {
        self.check_level(level)?;
        let coeffs = self.encoder.encode(values, scale, self.coefficient_bound(level))?;
        let mut poly = RnsPoly::from_i128(&self.q_level[level], &coeffs);
        poly.ntt_forward()?;
        Ok(Plaintext { poly, level, scale, slots: self.slots() })
    }

    pub fn encode(&self, values: &[f64], scale: f64, level: usize) -> Result<Plaintext, CkksError> {
        let z: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.encode_complex(&z, scale, level)
    }

    /// Decodes an evaluation-domain polynomial at `level` with the given scale.
    pub(crate) fn decode_poly(&self, poly: &RnsPoly, level: usize, scale: f64) -> Result<Vec<Complex64>, CkksError> {
        let coef = poly.clone().to_domain(Domain::Coefficient)?;
        let crt = &self.crt[level];
        let k = coef.limbs().len();
        let mut residues = vec![0u64; k];
        let coeffs: Vec<f64> = (0..self.n())
            .map(|c| {
                for (r, l) in residues.iter_mut().zip(coef.limbs()) {
                    *r = l[c];
                }
                crt.centered(&residues)
            })
            .collect();
        Ok(self.encoder.decode(&coeffs, scale))
    }

    pub fn decode_complex(&self, pt: &Plaintext) -> Result<Vec<Complex64>, CkksError> {
        self.decode_poly(&pt.poly, pt.level, pt.scale)
    }

    /// Real parts of the slots.
    pub fn decode(&self, pt: &Plaintext) -> Result<Vec<f64>, CkksError> {
        Ok(self.decode_complex(pt)?.into_iter().map(|z| z.re).collect())
    }
}
