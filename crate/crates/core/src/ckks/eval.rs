//! Encryption, decryption and homomorphic operations.

use num_complex::Complex64;
use rand::RngCore;

use super::{CkksContext, CkksError, PublicKeySet, SecretKey, SwitchingKey};
use crate::arith::{sample, Domain, RnsPoly};

/// Relative scale difference tolerated by additions.
pub const SCALE_TOLERANCE: f64 = 1.0 / 1024.0;

#[derive(Clone, Debug)]
pub struct Plaintext {
    /// Evaluation domain over `q_0..q_level`.
    pub poly: RnsPoly,
    pub level: usize,
    pub scale: f64,
    pub slots: usize,
}

/// RLWE ciphertext `(b, a)` decrypting as `b + a·s`.
#[derive(Clone, Debug)]
pub struct Ciphertext {
    pub b: RnsPoly,
    pub a: RnsPoly,
    pub level: usize,
    pub scale: f64,
    pub slots: usize,
    /// Set once the ciphertext (or any ancestor) went through a debug refresh.
    pub refreshed: bool,
}

/// Whether debug refresh may run. It decrypts with the secret key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefreshMode {
    Disabled,
    InsecureDebug,
}

fn same_scale(a: f64, b: f64) -> bool {
    (a / b - 1.0).abs() <= SCALE_TOLERANCE
}

impl CkksContext {
    fn q_part(&self, sk: &SecretKey, level: usize) -> RnsPoly {
        let idx: Vec<usize> = (0..=level).collect();
        sk.s.select_into(&idx, self.q_basis(level))
    }

    fn error_poly(&self, level: usize, rng: &mut impl RngCore) -> Result<RnsPoly, CkksError> {
        let mut e = RnsPoly::from_signed(self.q_basis(level), &sample::gaussian(self.n(), rng));
        e.ntt_forward()?;
        Ok(e)
    }

    pub fn encrypt(&self, pt: &Plaintext, pk: &PublicKeySet, rng: &mut impl RngCore) -> Result<Ciphertext, CkksError> {
        self.check_level(pt.level)?;
        let level = pt.level;
        let idx: Vec<usize> = (0..=level).collect();
        let qb = self.q_basis(level);
        let mut v = RnsPoly::from_signed(qb, &sample::ternary(self.n(), rng));
        v.ntt_forward()?;
        let mut b = v.mul(&pk.pk.b.select_into(&idx, qb))?;
        b.add_assign(&self.error_poly(level, rng)?)?;
        b.add_assign(&pt.poly)?;
        let mut a = v.mul(&pk.pk.a.select_into(&idx, qb))?;
        a.add_assign(&self.error_poly(level, rng)?)?;
        Ok(Ciphertext { b, a, level, scale: pt.scale, slots: pt.slots, refreshed: false })
    }

    /// Secret-key encryption, used by debug refresh.
    pub fn encrypt_symmetric(&self, pt: &Plaintext, sk: &SecretKey, rng: &mut impl RngCore) -> Result<Ciphertext, CkksError> {
        let level = pt.level;
        let a = sample::uniform(self.q_basis(level), Domain::Evaluation, rng);
        let mut b = self.error_poly(level, rng)?;
        b.sub_assign(&a.mul(&self.q_part(sk, level))?)?;
        b.add_assign(&pt.poly)?;
        Ok(Ciphertext { b, a, level, scale: pt.scale, slots: pt.slots, refreshed: false })
    }

    pub fn decrypt(&self, ct: &Ciphertext, sk: &SecretKey) -> Result<Plaintext, CkksError> {
        let mut m = ct.a.mul(&self.q_part(sk, ct.level))?;
        m.add_assign(&ct.b)?;
        Ok(Plaintext { poly: m, level: ct.level, scale: ct.scale, slots: ct.slots })
    }

    /// Decrypts and decodes; slots are complex.
    pub fn decrypt_complex(&self, ct: &Ciphertext, sk: &SecretKey) -> Result<Vec<Complex64>, CkksError> {
        self.decode_complex(&self.decrypt(ct, sk)?)
    }

    pub fn decrypt_real(&self, ct: &Ciphertext, sk: &SecretKey) -> Result<Vec<f64>, CkksError> {
        self.decode(&self.decrypt(ct, sk)?)
    }

    fn check_pair(&self, x: &Ciphertext, y_level: usize, y_scale: f64) -> Result<(), CkksError> {
        if x.level != y_level {
            return Err(CkksError::LevelMismatch { left: x.level, right: y_level });
        }
        if !same_scale(x.scale, y_scale) {
            return Err(CkksError::ScaleMismatch { left: x.scale, right: y_scale });
        }
        Ok(())
    }

    pub fn hadd(&self, x: &Ciphertext, y: &Ciphertext) -> Result<Ciphertext, CkksError> {
        self.check_pair(x, y.level, y.scale)?;
        let mut r = x.clone();
        r.b.add_assign(&y.b)?;
        r.a.add_assign(&y.a)?;
        r.refreshed |= y.refreshed;
        Ok(r)
    }

    pub fn hadd_assign(&self, x: &mut Ciphertext, y: &Ciphertext) -> Result<(), CkksError> {
        self.check_pair(x, y.level, y.scale)?;
        x.b.add_assign(&y.b)?;
        x.a.add_assign(&y.a)?;
        x.refreshed |= y.refreshed;
        Ok(())
    }

    pub fn hsub(&self, x: &Ciphertext, y: &Ciphertext) -> Result<Ciphertext, CkksError> {
        self.check_pair(x, y.level, y.scale)?;
        let mut r = x.clone();
        r.b.sub_assign(&y.b)?;
        r.a.sub_assign(&y.a)?;
        r.refreshed |= y.refreshed;
        Ok(r)
    }

    pub fn padd(&self, x: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext, CkksError> {
        self.check_pair(x, pt.level, pt.scale)?;
        let mut r = x.clone();
        r.b.add_assign(&pt.poly)?;
        Ok(r)
    }

    /// Plaintext product; the result scale is the product of scales, level unchanged.
    pub fn pmult(&self, x: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext, CkksError> {
        if x.level != pt.level {
            return Err(CkksError::LevelMismatch { left: x.level, right: pt.level });
        }
        let mut r = x.clone();
        r.b.mul_assign(&pt.poly)?;
        r.a.mul_assign(&pt.poly)?;
        r.scale *= pt.scale;
        Ok(r)
    }

    /// Ciphertext product with relinearization; rescale separately.
    pub fn hmult(&self, x: &Ciphertext, y: &Ciphertext, keys: &PublicKeySet) -> Result<Ciphertext, CkksError> {
        if x.level != y.level {
            return Err(CkksError::LevelMismatch { left: x.level, right: y.level });
        }
        let d0 = x.b.mul(&y.b)?;
        let mut d1 = x.b.mul(&y.a)?;
        d1.mul_add_assign(&x.a, &y.b)?;
        let d2 = x.a.mul(&y.a)?;
        let (k0, k1) = self.key_switch(&d2, x.level, &keys.rlk)?;
        let mut b = d0;
        b.add_assign(&k0)?;
        d1.add_assign(&k1)?;
        Ok(Ciphertext {
            b,
            a: d1,
            level: x.level,
            scale: x.scale * y.scale,
            slots: x.slots,
            refreshed: x.refreshed || y.refreshed,
        })
    }

    /// Divides by the top prime and drops it.
    pub fn rescale(&self, x: &Ciphertext) -> Result<Ciphertext, CkksError> {
        if x.level == 0 {
            return Err(CkksError::LevelExhausted);
        }
        let q_top = self.rescale_prime(x.level);
        Ok(Ciphertext {
            b: self.rescale_poly(&x.b, x.level)?,
            a: self.rescale_poly(&x.a, x.level)?,
            level: x.level - 1,
            scale: x.scale / q_top as f64,
            slots: x.slots,
            refreshed: x.refreshed,
        })
    }

    fn rescale_poly(&self, p: &RnsPoly, level: usize) -> Result<RnsPoly, CkksError> {
        let basis = self.q_basis(level);
        let mut top = p.select_into(&[level], &self.q_basis(level).select([level]));
        top.ntt_inverse()?;
        let top_mod = *basis.modulus(level);
        let centered: Vec<i64> = top.limb(0).iter().map(|&x| top_mod.center(x)).collect();
        let inv = &self.levels[level].rescale_inv;
        let lower = self.q_basis(level - 1);
        let mut t = RnsPoly::from_signed(lower, &centered);
        t.ntt_forward()?;
        let mut out = p.select_into(&(0..level).collect::<Vec<_>>(), lower);
        out.sub_assign(&t)?;
        out.mul_scalars(inv);
        Ok(out)
    }

    /// Drops limbs down to `level` without changing the scale.
    pub fn mod_drop(&self, x: &Ciphertext, level: usize) -> Result<Ciphertext, CkksError> {
        if level > x.level {
            return Err(CkksError::LevelMismatch { left: x.level, right: level });
        }
        let mut r = x.clone();
        let idx: Vec<usize> = (0..=level).collect();
        r.b = x.b.select_into(&idx, self.q_basis(level));
        r.a = x.a.select_into(&idx, self.q_basis(level));
        r.level = level;
        Ok(r)
    }

    /// Left rotation of the slots by `step` (negative rotates right).
    /// Steps without a dedicated key are composed from available ones.
    pub fn rotate(&self, x: &Ciphertext, step: i64, keys: &PublicKeySet) -> Result<Ciphertext, CkksError> {
        let path = keys.rotation_path(step)?;
        let mut cur = x.clone();
        for s in path {
            let gk = &keys.gks[&s];
            cur = self.apply_galois(&cur, gk.galois, &gk.key)?;
        }
        Ok(cur)
    }

    /// Number of key switches a rotation by `step` costs with these keys.
    pub fn rotation_cost(&self, step: i64, keys: &PublicKeySet) -> Result<usize, CkksError> {
        Ok(keys.rotation_path(step)?.len())
    }

    fn apply_galois(&self, x: &Ciphertext, galois: usize, key: &SwitchingKey) -> Result<Ciphertext, CkksError> {
        let perm = self.galois_perm(galois);
        let b = x.b.automorphism_eval(&perm)?;
        let a = x.a.automorphism_eval(&perm)?;
        let (k0, k1) = self.key_switch(&a, x.level, key)?;
        let mut nb = b;
        nb.add_assign(&k0)?;
        Ok(Ciphertext { b: nb, a: k1, level: x.level, scale: x.scale, slots: x.slots, refreshed: x.refreshed })
    }

    /// Rotations of `x` by several steps that share one key-switch decomposition.
    /// Steps without a dedicated key fall back to [`Self::rotate`].
    pub fn rotate_hoisted(&self, x: &Ciphertext, steps: &[i64], keys: &PublicKeySet) -> Result<Vec<Ciphertext>, CkksError> {
        let mut ups: Option<Vec<RnsPoly>> = None;
        let mut out = Vec::with_capacity(steps.len());
        for &step in steps {
            let path = keys.rotation_path(step)?;
            let r = match path.as_slice() {
                [] => x.clone(),
                [s] => {
                    let gk = &keys.gks[s];
                    if ups.is_none() {
                        ups = Some(self.mod_up(&x.a, x.level)?);
                    }
                    let perm = self.galois_perm(gk.galois);
                    let moved = ups.as_ref().unwrap().iter().map(|u| u.automorphism_eval(&perm)).collect::<Result<Vec<_>, _>>()?;
                    let (k0, k1) = self.switch_digits(&moved, x.level, &gk.key)?;
                    let mut b = x.b.automorphism_eval(&perm)?;
                    b.add_assign(&k0)?;
                    Ciphertext { b, a: k1, level: x.level, scale: x.scale, slots: x.slots, refreshed: x.refreshed }
                }
                _ => self.rotate(x, step, keys)?,
            };
            out.push(r);
        }
        Ok(out)
    }

    /// Hybrid key switching of an evaluation-domain component at `level`.
    pub(crate) fn key_switch(&self, d: &RnsPoly, level: usize, key: &SwitchingKey) -> Result<(RnsPoly, RnsPoly), CkksError> {
        let ups = self.mod_up(d, level)?;
        self.switch_digits(&ups, level, key)
    }

    /// Digits of `d` (evaluation domain over `q_0..q_level`) lifted to the extended basis.
    fn mod_up(&self, d: &RnsPoly, level: usize) -> Result<Vec<RnsPoly>, CkksError> {
        let ext = self.ext_basis(level);
        let mut coeff = d.clone();
        coeff.ntt_inverse()?;
        self.levels[level]
            .digits
            .iter()
            .map(|dig| {
                let part = coeff.select_into(&dig.range.clone().collect::<Vec<_>>(), &dig.src);
                let mut conv = dig.conv.convert(&part)?;
                conv.ntt_forward()?;
                let mut limbs: Vec<Vec<u64>> = vec![Vec::new(); ext.len()];
                // the digit's own limbs are already in the evaluation domain
                for k in dig.range.clone() {
                    limbs[k] = d.limb(k).to_vec();
                }
                for (&k, l) in dig.complement.iter().zip(conv.into_limbs()) {
                    limbs[k] = l;
                }
                Ok(RnsPoly::from_limbs(ext, limbs, Domain::Evaluation)?)
            })
            .collect()
    }

    /// Inner product of lifted digits with the key, then division by `P`.
    fn switch_digits(&self, ups: &[RnsPoly], level: usize, key: &SwitchingKey) -> Result<(RnsPoly, RnsPoly), CkksError> {
        if level > key.top_level {
            return Err(CkksError::KeyLevelTooLow { needed: level, available: key.top_level });
        }
        let ext = self.ext_basis(level);
        let np = self.p_basis().len();
        // key limb holding extended-basis position t
        let key_index = |t: usize| if t <= level { t } else { key.top_level + 1 + (t - level - 1) };
        let mut acc0 = RnsPoly::zero(ext, Domain::Evaluation);
        let mut acc1 = RnsPoly::zero(ext, Domain::Evaluation);
        for (up, (kb, ka)) in ups.iter().zip(&key.digits) {
            for t in 0..ext.len() {
                let m = *ext.modulus(t);
                let ki = key_index(t);
                let u = up.limb(t);
                let (bl, al) = (kb.limb(ki), ka.limb(ki));
                for (x, (uu, bb)) in acc0.limb_mut(t).iter_mut().zip(u.iter().zip(bl)) {
                    *x = m.add(*x, m.mul(*uu, *bb));
                }
                for (x, (uu, aa)) in acc1.limb_mut(t).iter_mut().zip(u.iter().zip(al)) {
                    *x = m.add(*x, m.mul(*uu, *aa));
                }
            }
        }
        debug_assert_eq!(ext.len(), level + 1 + np);
        Ok((self.mod_down(acc0, level)?, self.mod_down(acc1, level)?))
    }

    /// `(c - conv_P(c mod P)) / P` over `q_0..q_level`.
    fn mod_down(&self, c: RnsPoly, level: usize) -> Result<RnsPoly, CkksError> {
        let tables = &self.levels[level];
        let np = self.p_basis().len();
        let p_idx: Vec<usize> = (level + 1..level + 1 + np).collect();
        let mut p_part = c.select_into(&p_idx, self.p_basis());
        p_part.ntt_inverse()?;
        let mut conv = tables.p_to_q.convert(&p_part)?;
        conv.ntt_forward()?;
        let mut q_part = c.select_into(&(0..=level).collect::<Vec<_>>(), self.q_basis(level));
        q_part.sub_assign(&conv)?;
        q_part.mul_scalars(&tables.p_inv_mod_q);
        Ok(q_part)
    }

    /// Decrypt, re-encode at `target_level` and re-encrypt. Breaks the security model.
    pub fn debug_refresh(
        &self,
        x: &Ciphertext,
        sk: &SecretKey,
        target_level: usize,
        mode: RefreshMode,
        rng: &mut impl RngCore,
    ) -> Result<Ciphertext, CkksError> {
        if mode != RefreshMode::InsecureDebug {
            return Err(CkksError::RefreshDisabled);
        }
        self.check_level(target_level)?;
        let values = self.decrypt_complex(x, sk)?;
        let pt = self.encode_complex(&values, self.params().scale(), target_level)?;
        let mut r = self.encrypt_symmetric(&pt, sk, rng)?;
        r.refreshed = true;
        Ok(r)
    }
}
