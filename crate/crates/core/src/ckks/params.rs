//! Parameter sets and their canonical digest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CkksError;
use crate::arith::{is_prime, ntt_primes_below, ntt_primes_near, MAX_MODULUS_BITS};

/// Whether a parameter set is meant to resist attacks. Desk presets are not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecurityTag {
    Insecure,
    Standard128,
}

/// An RNS-CKKS parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CkksParams {
    pub name: String,
    pub log_n: u32,
    /// `q_0` (base prime) followed by the `L` rescaling primes.
    pub q_chain: Vec<u64>,
    /// Special primes used only during key switching.
    pub p_special: Vec<u64>,
    /// Encoding scale is `2^log_scale`.
    pub log_scale: u32,
    /// Number of key-switching digits at the top level.
    pub dnum: usize,
    pub security: SecurityTag,
}

impl CkksParams {
    /// Generates a chain: one `base_bits` prime, `levels` primes near `2^log_scale`,
    /// and `special_count` primes of `special_bits` bits.
    pub fn generate(
        name: &str,
        log_n: u32,
        base_bits: u32,
        levels: usize,
        log_scale: u32,
        special_count: usize,
        special_bits: u32,
        dnum: usize,
    ) -> Result<Self, CkksError> {
        let n = 1usize << log_n;
        let q0 = ntt_primes_below(1 << base_bits, n, 1, &[])?;
        let mut used = q0.clone();
        let mids = ntt_primes_near(1 << log_scale, n, levels, &used)?;
        used.extend(&mids);
        let specials = ntt_primes_below(1 << special_bits, n, special_count, &used)?;
        let mut q_chain = q0;
        q_chain.extend(mids);
        let p = Self {
            name: name.to_string(),
            log_n,
            q_chain,
            p_special: specials,
            log_scale,
            dnum,
            security: SecurityTag::Insecure,
        };
        p.validate()?;
        Ok(p)
    }

    /// Development preset: `N = 2^13`, ten levels at scale `2^40`. Not secure.
    pub fn desk_a() -> Self {
        Self::generate("desk-A", 13, 59, 10, 40, 2, 59, 6).expect("desk-A preset is valid")
    }

    /// Development preset: `N = 2^14`, sixteen levels at scale `2^40`. Not secure.
    pub fn desk_b() -> Self {
        Self::generate("desk-B", 14, 59, 16, 40, 3, 61, 5).expect("desk-B preset is valid")
    }

    /// Looks up a preset by name (`desk-A`, `desk-B`, case-insensitive).
    pub fn preset(name: &str) -> Result<Self, CkksError> {
        match name.to_ascii_lowercase().as_str() {
            "desk-a" => Ok(Self::desk_a()),
            "desk-b" => Ok(Self::desk_b()),
            _ => Err(CkksError::InvalidParams(format!("unknown parameter preset '{name}'"))),
        }
    }

    pub fn n(&self) -> usize {
        1 << self.log_n
    }

    pub fn slots(&self) -> usize {
        self.n() / 2
    }

    /// Highest level `L`; a fresh ciphertext at level `l` has `l + 1` limbs.
    pub fn max_level(&self) -> usize {
        self.q_chain.len() - 1
    }

    pub fn scale(&self) -> f64 {
        (self.log_scale as f64).exp2()
    }

    /// Limbs per key-switching digit.
    pub fn digit_width(&self) -> usize {
        self.q_chain.len().div_ceil(self.dnum)
    }

    /// Limb index ranges of the digits that cover levels `0..=level`.
    pub fn digits_at(&self, level: usize) -> Vec<std::ops::Range<usize>> {
        let w = self.digit_width();
        (0..=level).step_by(w).map(|s| s..(s + w).min(level + 1)).collect()
    }

    pub fn is_insecure(&self) -> bool {
        self.security == SecurityTag::Insecure
    }

    pub fn validate(&self) -> Result<(), CkksError> {
        let bad = |m: String| Err(CkksError::InvalidParams(m));
        let n = self.n();
        if !(1..=17).contains(&self.log_n) {
            return bad(format!("log_n {} out of range", self.log_n));
        }
        if self.q_chain.is_empty() || self.p_special.is_empty() {
            return bad("modulus chain and special primes must be non-empty".into());
        }
        if self.dnum == 0 || self.dnum > self.q_chain.len() {
            return bad(format!("dnum {} must lie in [1, {}]", self.dnum, self.q_chain.len()));
        }
        let all: Vec<u64> = self.q_chain.iter().chain(&self.p_special).copied().collect();
        for (i, &q) in all.iter().enumerate() {
            if q >> MAX_MODULUS_BITS != 0 || !is_prime(q) {
                return bad(format!("{q} is not a prime below 2^62"));
            }
            if q % (2 * n as u64) != 1 {
                return bad(format!("{q} is not 1 mod 2N"));
            }
            if all[..i].contains(&q) {
                return bad(format!("{q} appears twice"));
            }
        }
        let log_delta = self.log_scale as f64;
        for &q in &self.q_chain[1..] {
            if ((q as f64).log2() - log_delta).abs() >= 1.0 {
                return bad(format!("rescaling prime {q} is not within a factor 2 of the scale"));
            }
        }
        let log_p: f64 = self.p_special.iter().map(|&p| (p as f64).log2()).sum();
        for r in self.digits_at(self.max_level()) {
            let log_d: f64 = self.q_chain[r.clone()].iter().map(|&q| (q as f64).log2()).sum();
            if log_d > log_p {
                return bad(format!(
                    "special modulus (2^{log_p:.1}) is smaller than digit {r:?} (2^{log_d:.1}); raise dnum or add special primes"
                ));
            }
        }
        Ok(())
    }

    /// Byte string hashed into the parameter digest.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = b"hcnn-ckks-params/1".to_vec();
        out.extend((self.log_n as u64).to_le_bytes());
        out.extend((self.q_chain.len() as u64).to_le_bytes());
        for q in &self.q_chain {
            out.extend(q.to_le_bytes());
        }
        out.extend((self.p_special.len() as u64).to_le_bytes());
        for p in &self.p_special {
            out.extend(p.to_le_bytes());
        }
        out.extend((self.log_scale as u64).to_le_bytes());
        out.extend((self.dnum as u64).to_le_bytes());
        out
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_distinct() {
        let a = CkksParams::desk_a();
        let b = CkksParams::desk_b();
        assert_eq!((a.n(), a.max_level()), (1 << 13, 10));
        assert_eq!((b.n(), b.max_level()), (1 << 14, 16));
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), CkksParams::desk_a().digest());
        assert!(a.is_insecure() && b.is_insecure());
        assert_eq!(a.q_chain[0] >> 58, 1);
    }

    #[test]
    fn undersized_special_modulus_is_rejected() {
        let mut p = CkksParams::desk_a();
        p.dnum = 3;
        assert!(matches!(p.validate(), Err(CkksError::InvalidParams(_))));
    }

    #[test]
    fn digits_cover_each_level_once() {
        let p = CkksParams::desk_b();
        for l in 0..=p.max_level() {
            let ds = p.digits_at(l);
            assert_eq!(ds.first().unwrap().start, 0);
            assert_eq!(ds.last().unwrap().end, l + 1);
            assert!(ds.windows(2).all(|w| w[0].end == w[1].start));
        }
    }
}
