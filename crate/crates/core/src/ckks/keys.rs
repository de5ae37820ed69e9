//! Key material and key generation.

use std::collections::{BTreeMap, VecDeque};
use std::sync::OnceLock;

use rand::RngCore;

use super::{CkksContext, CkksError};
use crate::arith::{sample, Domain, RnsPoly};

/// Ternary secret over every modulus (chain and special), evaluation domain.
#[derive(Clone, Debug)]
pub struct SecretKey {
    pub(crate) s: RnsPoly,
}

/// Encryption key `(b, a)` with `b = -a·s + e` over the full chain.
#[derive(Clone, Debug)]
pub struct PublicKey {
    pub(crate) b: RnsPoly,
    pub(crate) a: RnsPoly,
}

/// Hybrid key-switching key: one `(b_j, a_j)` pair per digit, over `q_0..q_top ∪ P`.
#[derive(Clone, Debug)]
pub struct SwitchingKey {
    pub(crate) top_level: usize,
    pub(crate) digits: Vec<(RnsPoly, RnsPoly)>,
}

impl SwitchingKey {
    pub fn top_level(&self) -> usize {
        self.top_level
    }
}

/// Key for a left slot rotation by `step`.
#[derive(Clone, Debug)]
pub struct GaloisKey {
    pub step: usize,
    pub galois: usize,
    pub(crate) key: SwitchingKey,
}

/// Everything a server needs: encryption, relinearization and rotation keys.
#[derive(Debug)]
pub struct PublicKeySet {
    pub pk: PublicKey,
    pub rlk: SwitchingKey,
    pub gks: BTreeMap<usize, GaloisKey>,
    slots: usize,
    paths: OnceLock<Vec<Option<usize>>>,
}

impl Clone for PublicKeySet {
    fn clone(&self) -> Self {
        Self::assemble(self.pk.clone(), self.rlk.clone(), self.gks.clone(), self.slots)
    }
}

#[derive(Clone, Debug)]
pub struct KeySet {
    pub sk: SecretKey,
    pub public: PublicKeySet,
}

/// Key generation settings.
#[derive(Clone, Debug, Default)]
pub struct KeyGenOptions {
    /// Requested rotation steps; negative values mean right rotations.
    pub rotations: Vec<i64>,
    /// Highest level evaluation keys must support; defaults to the top of the chain.
    pub max_level: Option<usize>,
}

impl KeyGenOptions {
    pub fn with_rotations(rotations: impl IntoIterator<Item = i64>) -> Self {
        Self { rotations: rotations.into_iter().collect(), max_level: None }
    }

    /// Every `±2^j` below the slot count, enough to compose any rotation.
    pub fn power_of_two_rotations(slots: usize) -> Vec<i64> {
        let mut v = Vec::new();
        let mut s = 1i64;
        while (s as usize) < slots {
            v.push(s);
            v.push(-s);
            s <<= 1;
        }
        v
    }
}

/// Canonical left-rotation amount in `[0, slots)`.
pub fn normalize_step(step: i64, slots: usize) -> usize {
    step.rem_euclid(slots as i64) as usize
}

impl PublicKeySet {
    pub(crate) fn assemble(pk: PublicKey, rlk: SwitchingKey, gks: BTreeMap<usize, GaloisKey>, slots: usize) -> Self {
        Self { pk, rlk, gks, slots, paths: OnceLock::new() }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Normalized steps with a key.
    pub fn rotation_steps(&self) -> Vec<usize> {
        self.gks.keys().copied().collect()
    }

    /// Shortest sequence of keyed steps summing to `step` modulo the slot count.
    pub fn rotation_path(&self, step: i64) -> Result<Vec<usize>, CkksError> {
        let target = normalize_step(step, self.slots);
        if target == 0 {
            return Ok(Vec::new());
        }
        if self.gks.contains_key(&target) {
            return Ok(vec![target]);
        }
        let prev = self.paths.get_or_init(|| {
            let mut prev = vec![None; self.slots];
            let mut seen = vec![false; self.slots];
            seen[0] = true;
            let mut queue = VecDeque::from([0usize]);
            while let Some(v) = queue.pop_front() {
                for &s in self.gks.keys() {
                    let w = (v + s) % self.slots;
                    if !seen[w] {
                        seen[w] = true;
                        prev[w] = Some(s);
                        queue.push_back(w);
                    }
                }
            }
            prev
        });
        let mut path = Vec::new();
        let mut v = target;
        while v != 0 {
            let s = prev[v].ok_or(CkksError::MissingKey(step))?;
            path.push(s);
            v = (v + self.slots - s) % self.slots;
        }
        path.reverse();
        Ok(path)
    }
}

impl CkksContext {
    pub fn keygen(&self, opts: &KeyGenOptions, rng: &mut impl RngCore) -> Result<KeySet, CkksError> {
        let top = opts.max_level.unwrap_or(self.max_level());
        self.check_level(top)?;
        let n = self.n();
        let full = self.ext_basis(self.max_level());
        let mut s = RnsPoly::from_signed(full, &sample::ternary(n, rng));
        s.ntt_forward()?;
        let sk = SecretKey { s };

        let qb = self.q_basis(self.max_level());
        let a = sample::uniform(qb, Domain::Evaluation, rng);
        let s_q = sk.s.select_into(&(0..qb.len()).collect::<Vec<_>>(), qb);
        let mut e = RnsPoly::from_signed(qb, &sample::gaussian(n, rng));
        e.ntt_forward()?;
        let mut b = e;
        b.sub_assign(&a.mul(&s_q)?)?;
        let pk = PublicKey { b, a };

        let s_sq = sk.s.mul(&sk.s)?;
        let rlk = self.switching_key(&sk, &s_sq, top, rng)?;

        let mut gks = BTreeMap::new();
        for &r in &opts.rotations {
            let step = normalize_step(r, self.slots());
            if step == 0 || gks.contains_key(&step) {
                continue;
            }
            let galois = self.encoder().galois_element(step);
            let rotated = sk.s.automorphism_eval(&self.galois_perm(galois))?;
            let key = self.switching_key(&sk, &rotated, top, rng)?;
            gks.insert(step, GaloisKey { step, galois, key });
        }
        Ok(KeySet { public: PublicKeySet::assemble(pk, rlk, gks, self.slots()), sk })
    }

    /// Key that switches a ciphertext component from `s_from` to `sk`.
    fn switching_key(
        &self,
        sk: &SecretKey,
        s_from: &RnsPoly,
        top: usize,
        rng: &mut impl RngCore,
    ) -> Result<SwitchingKey, CkksError> {
        let nq_all = self.max_level() + 1;
        let np = self.p_basis().len();
        let ext = self.ext_basis(top);
        let idx: Vec<usize> = (0..=top).chain(nq_all..nq_all + np).collect();
        let s = sk.s.select_into(&idx, ext);
        let s_from = s_from.select_into(&idx, ext);
        // P mod q_i for each chain limb
        let p_mod: Vec<u64> = ext.moduli()[..=top]
            .iter()
            .map(|m| self.p_basis().moduli().iter().fold(1u64, |acc, p| m.mul(acc, m.reduce(p.value()))))
            .collect();
        let mut digits = Vec::new();
        for range in self.params().digits_at(top) {
            let a = sample::uniform(ext, Domain::Evaluation, rng);
            let mut b = RnsPoly::from_signed(ext, &sample::gaussian(self.n(), rng));
            b.ntt_forward()?;
            b.sub_assign(&a.mul(&s)?)?;
            for i in range {
                let m = *ext.modulus(i);
                let pm = p_mod[i];
                let src = s_from.limb(i).to_vec();
                for (x, y) in b.limb_mut(i).iter_mut().zip(src) {
                    *x = m.add(*x, m.mul(pm, y));
                }
            }
            digits.push((b, a));
        }
        Ok(SwitchingKey { top_level: top, digits })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::CkksParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn rotation_paths_compose_power_of_two_keys() {
        let ctx = CkksContext::new(CkksParams::generate("t", 6, 40, 2, 30, 1, 50, 3).unwrap()).unwrap();
        let opts = KeyGenOptions::with_rotations(KeyGenOptions::power_of_two_rotations(ctx.slots()));
        let keys = ctx.keygen(&opts, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        assert_eq!(keys.public.rotation_path(0).unwrap(), Vec::<usize>::new());
        assert_eq!(keys.public.rotation_path(4).unwrap(), vec![4]);
        let p = keys.public.rotation_path(7).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.iter().sum::<usize>() % 32, 7);
        let sparse = ctx.keygen(&KeyGenOptions::with_rotations([2]), &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        assert!(matches!(sparse.public.rotation_path(1), Err(CkksError::MissingKey(1))));
        assert_eq!(sparse.public.rotation_path(6).unwrap(), vec![2, 2, 2]);
    }
}
