//! Binary container for keys and ciphertexts.
//!
//! Layout: magic `HCNK`, `u16` version, 32-byte parameter digest, `u8` kind, then a
//! kind-specific body. Polynomials are written as `u32` limb count, `u8` domain,
//! the limb moduli, then little-endian `u64` residues limb by limb.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use super::{Ciphertext, CkksContext, CkksError, GaloisKey, PublicKey, PublicKeySet, SecretKey, SwitchingKey};
use crate::arith::{Domain, RnsBasis, RnsPoly};

pub const CONTAINER_MAGIC: &[u8; 4] = b"HCNK";
pub const CONTAINER_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ContainerKind {
    SecretKey = 1,
    PublicKeySet = 2,
    Ciphertexts = 3,
}

impl ContainerKind {
    fn from_tag(t: u8) -> Result<Self, CkksError> {
        match t {
            1 => Ok(Self::SecretKey),
            2 => Ok(Self::PublicKeySet),
            3 => Ok(Self::Ciphertexts),
            _ => Err(CkksError::Format(format!("unknown object kind {t}"))),
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(ctx: &CkksContext, kind: ContainerKind) -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend(CONTAINER_MAGIC);
        w.0.extend(CONTAINER_VERSION.to_le_bytes());
        w.0.extend(ctx.params().digest());
        w.0.push(kind as u8);
        w
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend(v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend(v.to_le_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend(b);
    }

    fn poly(&mut self, p: &RnsPoly) {
        self.u32(p.limbs().len() as u32);
        self.u8(match p.domain() {
            Domain::Coefficient => 0,
            Domain::Evaluation => 1,
        });
        for m in p.basis().moduli() {
            self.u64(m.value());
        }
        self.0.reserve(p.limbs().len() * p.degree() * 8);
        for l in p.limbs() {
            for &x in l {
                self.0.extend(x.to_le_bytes());
            }
        }
    }

    fn switching_key(&mut self, k: &SwitchingKey) {
        self.u32(k.top_level as u32);
        self.u32(k.digits.len() as u32);
        for (b, a) in &k.digits {
            self.poly(b);
            self.poly(a);
        }
    }

    fn ciphertext(&mut self, c: &Ciphertext) {
        self.u32(c.level as u32);
        self.f64(c.scale);
        self.u32(c.slots as u32);
        self.u8(c.refreshed as u8);
        self.poly(&c.b);
        self.poly(&c.a);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(ctx: &CkksContext, buf: &'a [u8], want: ContainerKind) -> Result<Self, CkksError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != CONTAINER_MAGIC {
            return Err(CkksError::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != CONTAINER_VERSION {
            return Err(CkksError::Format(format!("unsupported container version {version}")));
        }
        let digest = r.take(32)?;
        let expected = ctx.params().digest();
        if digest != expected {
            return Err(CkksError::DigestMismatch { expected: hex::encode(expected), found: hex::encode(digest) });
        }
        let kind = ContainerKind::from_tag(r.u8()?)?;
        if kind != want {
            return Err(CkksError::Format(format!("expected {want:?}, found {kind:?}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CkksError> {
        if self.pos + n > self.buf.len() {
            return Err(CkksError::Format("truncated container".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CkksError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CkksError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CkksError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CkksError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<Vec<u8>, CkksError> {
        let n = self.u64()? as usize;
        Ok(self.take(n)?.to_vec())
    }

    fn poly(&mut self, basis: &Arc<RnsBasis>) -> Result<RnsPoly, CkksError> {
        let k = self.u32()? as usize;
        let domain = match self.u8()? {
            0 => Domain::Coefficient,
            1 => Domain::Evaluation,
            d => return Err(CkksError::Format(format!("bad domain tag {d}"))),
        };
        let moduli = (0..k).map(|_| self.u64()).collect::<Result<Vec<_>, _>>()?;
        if moduli != basis.values() {
            return Err(CkksError::Format("polynomial basis does not match the parameter set".into()));
        }
        let n = basis.degree();
        let raw = self.take(k * n * 8)?;
        let limbs = raw
            .chunks_exact(n * 8)
            .map(|c| c.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())).collect())
            .collect();
        Ok(RnsPoly::from_limbs(basis, limbs, domain)?)
    }

    fn switching_key(&mut self, ctx: &CkksContext) -> Result<SwitchingKey, CkksError> {
        let top = self.u32()? as usize;
        ctx.check_level(top)?;
        let digits = self.u32()? as usize;
        if digits != ctx.params().digits_at(top).len() {
            return Err(CkksError::Format("digit count does not match the parameter set".into()));
        }
        let ext = ctx.ext_basis(top);
        let digits = (0..digits).map(|_| Ok((self.poly(ext)?, self.poly(ext)?))).collect::<Result<_, CkksError>>()?;
        Ok(SwitchingKey { top_level: top, digits })
    }

    fn ciphertext(&mut self, ctx: &CkksContext) -> Result<Ciphertext, CkksError> {
        let level = self.u32()? as usize;
        ctx.check_level(level)?;
        let scale = self.f64()?;
        let slots = self.u32()? as usize;
        let refreshed = self.u8()? != 0;
        let qb = ctx.q_basis(level);
        Ok(Ciphertext { b: self.poly(qb)?, a: self.poly(qb)?, level, scale, slots, refreshed })
    }

    fn finish(&self) -> Result<(), CkksError> {
        if self.pos != self.buf.len() {
            return Err(CkksError::Format("trailing bytes".into()));
        }
        Ok(())
    }
}

impl CkksContext {
    pub fn serialize_secret_key(&self, sk: &SecretKey) -> Vec<u8> {
        let mut w = Writer::new(self, ContainerKind::SecretKey);
        w.poly(&sk.s);
        w.0
    }

    pub fn deserialize_secret_key(&self, buf: &[u8]) -> Result<SecretKey, CkksError> {
        let mut r = Reader::open(self, buf, ContainerKind::SecretKey)?;
        let s = r.poly(self.ext_basis(self.max_level()))?;
        r.finish()?;
        Ok(SecretKey { s })
    }

    pub fn serialize_public_keys(&self, keys: &PublicKeySet) -> Vec<u8> {
        let mut w = Writer::new(self, ContainerKind::PublicKeySet);
        w.poly(&keys.pk.b);
        w.poly(&keys.pk.a);
        w.switching_key(&keys.rlk);
        w.u32(keys.gks.len() as u32);
        for gk in keys.gks.values() {
            w.u64(gk.step as u64);
            w.u64(gk.galois as u64);
            w.switching_key(&gk.key);
        }
        w.0
    }

    pub fn deserialize_public_keys(&self, buf: &[u8]) -> Result<PublicKeySet, CkksError> {
        let mut r = Reader::open(self, buf, ContainerKind::PublicKeySet)?;
        let qb = self.q_basis(self.max_level());
        let pk = PublicKey { b: r.poly(qb)?, a: r.poly(qb)? };
        let rlk = r.switching_key(self)?;
        let count = r.u32()? as usize;
        let mut gks = BTreeMap::new();
        for _ in 0..count {
            let step = r.u64()? as usize;
            let galois = r.u64()? as usize;
            if step == 0 || step >= self.slots() || galois != self.encoder().galois_element(step) {
                return Err(CkksError::Format(format!("inconsistent rotation key for step {step}")));
            }
            let key = r.switching_key(self)?;
            gks.insert(step, GaloisKey { step, galois, key });
        }
        r.finish()?;
        Ok(PublicKeySet::assemble(pk, rlk, gks, self.slots()))
    }

    /// Ciphertexts plus an opaque metadata blob (layout description, for example).
    pub fn serialize_ciphertexts(&self, cts: &[Ciphertext], meta: &[u8]) -> Vec<u8> {
        let mut w = Writer::new(self, ContainerKind::Ciphertexts);
        w.bytes(meta);
        w.u32(cts.len() as u32);
        for c in cts {
            w.ciphertext(c);
        }
        w.0
    }

    pub fn deserialize_ciphertexts(&self, buf: &[u8]) -> Result<(Vec<Ciphertext>, Vec<u8>), CkksError> {
        let mut r = Reader::open(self, buf, ContainerKind::Ciphertexts)?;
        let meta = r.bytes()?;
        let n = r.u32()? as usize;
        let cts = (0..n).map(|_| r.ciphertext(self)).collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok((cts, meta))
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
